"""Small synthetic graphs for tests, acceptance checks and experiment scripts."""

from __future__ import annotations

import numpy as np

from .fusion import SameAsMap
from .kg import KnowledgeGraph, build_graph


def iri(ns: str, kind: str, i: int) -> str:
    return f"http://{ns}.example.org/{kind}/{kind[0].upper()}{i}"


def permutation_graph(num_entities: int = 10, num_relations: int = 3, seed: int = 0, ns: str = "tiny") -> KnowledgeGraph:
    """``num_relations`` random permutations of the entities, one triple per (entity, relation).

    Every (head, relation) pair has one tail and every (relation, tail) one
    head, so a perfect raw-rank model exists.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for r in range(num_relations):
        perm = rng.permutation(num_entities)
        for h in range(num_entities):
            rows.append((iri(ns, "entity", h), iri(ns, "relation", r), iri(ns, "entity", int(perm[h]))))
    return build_graph(rows)


def random_graph(
    rng: np.random.Generator,
    num_entities: int,
    num_relations: int,
    num_triples: int,
    ns: str = "g",
) -> KnowledgeGraph:
    """Uniform random triples (duplicates collapse, so the result may hold fewer)."""
    h = rng.integers(0, num_entities, size=num_triples)
    r = rng.integers(0, num_relations, size=num_triples)
    t = rng.integers(0, num_entities, size=num_triples)
    return build_graph(
        (iri(ns, "entity", a), iri(ns, "relation", b), iri(ns, "entity", c))
        for a, b, c in zip(h.tolist(), r.tolist(), t.tolist())
    )


def exact_random_graph(
    rng: np.random.Generator, num_entities: int, num_relations: int, num_triples: int, ns: str = "g"
) -> KnowledgeGraph:
    """Random graph with exactly ``num_triples`` distinct triples."""
    total = num_entities * num_relations * num_entities
    if num_triples > total:
        raise ValueError("more triples requested than the vocabulary allows")
    codes = rng.choice(total, size=num_triples, replace=False)
    h, rest = np.divmod(codes, num_relations * num_entities)
    r, t = np.divmod(rest, num_entities)
    return build_graph(
        (iri(ns, "entity", a), iri(ns, "relation", b), iri(ns, "entity", c))
        for a, b, c in zip(h.tolist(), r.tolist(), t.tolist())
    )


def twin_graphs(
    seed: int,
    num_entities: int = 400,
    num_relations: int = 8,
    facts_per_relation: int = 400,
    coverage: float = 0.6,
    overlap: float = 0.8,
) -> tuple[KnowledgeGraph, KnowledgeGraph, SameAsMap]:
    """Two views of one latent world under disjoint IRI namespaces.

    Latent facts are drawn per relation from a structured rule (each relation
    maps entity clusters onto clusters), every view keeps an independent
    ``coverage`` share of them, and ``overlap`` of the shared entities are
    linked by sameAs.
    """
    rng = np.random.default_rng(seed)
    n_clusters = 20
    cluster = rng.integers(0, n_clusters, size=num_entities)
    members = [np.flatnonzero(cluster == c) for c in range(n_clusters)]
    facts = set()
    for r in range(num_relations):
        target_of = rng.permutation(n_clusters)
        heads = rng.integers(0, num_entities, size=facts_per_relation)
        for h in heads.tolist():
            pool = members[target_of[cluster[h]]]
            if len(pool):
                facts.add((h, r, int(rng.choice(pool))))
    facts = sorted(facts)

    def view(ns: str) -> KnowledgeGraph:
        keep = rng.random(len(facts)) < coverage
        return build_graph(
            (iri(ns, "entity", h), iri(ns, "relation", r), iri(ns, "entity", t))
            for (h, r, t), k in zip(facts, keep.tolist())
            if k
        )

    g1, g2 = view("dbp"), view("wd")
    shared = sorted(
        {int(e.rsplit("E", 1)[1]) for e in g1.entities} & {int(e.rsplit("E", 1)[1]) for e in g2.entities}
    )
    linked = [e for e in shared if rng.random() < overlap]
    links = SameAsMap.from_pairs((iri("dbp", "entity", e), iri("wd", "entity", e)) for e in linked)
    return g1, g2, links
