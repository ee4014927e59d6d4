"""sameAs canonicalization and knowledge-graph fusion."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import BinaryIO, Collection, Iterable, Sequence

import numpy as np

from .kg import GraphStats, KnowledgeGraph, ParseStats, graph_stats, parse_ntriples

OWL_SAMEAS = "http://www.w3.org/2002/07/owl#sameAs"


class DisjointSet:
    """Union-find over hashable items with path halving and union by size."""

    def __init__(self):
        self.parent: dict = {}
        self.size: dict = {}

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        self.add(x)
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return rx
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]
        return rx

    def groups(self) -> dict:
        out = defaultdict(list)
        for x in self.parent:
            out[self.find(x)].append(x)
        return out


@dataclass
class SameAsMap:
    """Closure classes of the symmetric-transitive sameAs relation.

    Each class is represented by its lexicographically smallest IRI; IRIs that
    never occur in a link are their own class.
    """

    pairs: list[tuple[str, str]] = field(default_factory=list)
    skipped_predicates: int = 0
    parse_stats: ParseStats | None = None

    def __post_init__(self):
        seen = set()
        uniq = []
        for a, b in self.pairs:
            key = (a, b) if a <= b else (b, a)
            if a != b and key not in seen:
                seen.add(key)
                uniq.append((a, b))
        self.pairs = uniq
        dsu = DisjointSet()
        partners: dict[str, set[str]] = defaultdict(set)
        for a, b in uniq:
            dsu.union(a, b)
            partners[a].add(b)
            partners[b].add(a)
        self._members: dict[str, tuple[str, ...]] = {}
        for members in dsu.groups().values():
            cls = tuple(sorted(members))
            for m in cls:
                self._members[m] = cls
        self._partners = partners

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "SameAsMap":
        return cls(list(pairs))

    def __contains__(self, iri: str) -> bool:
        return iri in self._members

    def members(self, iri: str) -> tuple[str, ...]:
        """All IRIs in the closure class of ``iri`` (sorted), including itself."""
        return self._members.get(iri, (iri,))

    def canonical(self, iri: str) -> str:
        return self.members(iri)[0]

    def partners(self, iri: str) -> set[str]:
        """IRIs directly linked to ``iri`` by a sameAs statement."""
        return set(self._partners.get(iri, ()))

    def classes(self) -> list[tuple[str, ...]]:
        return sorted(set(self._members.values()))

    @property
    def aligned(self) -> set[str]:
        return set(self._members)

    @property
    def num_links(self) -> int:
        return len(self.pairs)

    @property
    def num_closure_pairs(self) -> int:
        return sum(len(c) * (len(c) - 1) // 2 for c in self.classes())

    @property
    def multi_match_entities(self) -> int:
        return sum(1 for p in self._partners.values() if len(p) > 1)


def load_sameas(source: BinaryIO | Iterable[bytes] | Iterable[str], strict: bool = False) -> SameAsMap:
    stats = ParseStats()
    pairs = []
    skipped = 0
    for s, p, o in parse_ntriples(source, stats, strict=strict):
        if p == OWL_SAMEAS:
            pairs.append((s, o))
        else:
            skipped += 1
    return SameAsMap(pairs, skipped_predicates=skipped, parse_stats=stats)


def canonical_id(e: str, m: SameAsMap, reference_entities: Collection[str]) -> str:
    """Name under which ``e`` enters the merged graph.

    The smallest class member already present in ``reference_entities`` wins;
    failing that, the class representative.
    """
    members = m.members(e)
    if len(members) == 1:
        return e
    for cand in members:  # sorted, so the first hit is the smallest
        if cand in reference_entities:
            return cand
    return members[0]


@dataclass
class FusionReport:
    inputs: list[GraphStats]
    merged: GraphStats
    renamed_entities: int
    multi_match_entities: int
    sameas_links: int
    sameas_closure_pairs: int
    dropped_sameas_triples: int
    renames: dict[str, str] = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "inputs": [s.as_dict() for s in self.inputs],
            "merged": self.merged.as_dict(),
            "renamed_entities": self.renamed_entities,
            "multi_match_entities": self.multi_match_entities,
            "sameas_links": self.sameas_links,
            "sameas_closure_pairs": self.sameas_closure_pairs,
            "dropped_sameas_triples": self.dropped_sameas_triples,
        }


def fuse_kgs(graphs: Sequence[KnowledgeGraph], m: SameAsMap) -> tuple[KnowledgeGraph, FusionReport]:
    """Merge ``graphs`` into ``graphs[0]``, renaming aligned entities of later graphs.

    ``renames`` in the report maps every source IRI of graphs[1:] whose name
    changed to its merged name.
    """
    if not graphs:
        raise ValueError("fuse_kgs needs at least one graph")
    ents: dict[str, int] = {}
    rels: dict[str, int] = {}
    seen: set[tuple[int, int, int]] = set()
    rows: list[tuple[int, int, int]] = []
    renames: dict[str, str] = {}
    dropped = 0

    for i, g in enumerate(graphs):
        if i == 0:
            names = list(g.entities)
        else:
            # renaming against the entity set at graph start equals per-triple
            # renaming: only the chosen name itself is ever added to the set
            names = []
            for iri in g.entities:
                new = canonical_id(iri, m, ents)
                if new != iri:
                    renames[iri] = new
                names.append(new)
        rel_names = g.relations
        for h, r, t in g.triples.tolist():
            p = rel_names[r]
            if p == OWL_SAMEAS:
                dropped += 1
                continue
            hid = ents.setdefault(names[h], len(ents))
            rid = rels.setdefault(p, len(rels))
            tid = ents.setdefault(names[t], len(ents))
            key = (hid, rid, tid)
            if key not in seen:
                seen.add(key)
                rows.append(key)

    merged = KnowledgeGraph(tuple(ents), tuple(rels), np.array(rows, dtype=np.int64).reshape(-1, 3))
    report = FusionReport(
        inputs=[graph_stats(g) for g in graphs],
        merged=graph_stats(merged),
        renamed_entities=len(renames),
        multi_match_entities=m.multi_match_entities,
        sameas_links=m.num_links,
        sameas_closure_pairs=m.num_closure_pairs,
        dropped_sameas_triples=dropped,
        renames=renames,
    )
    return merged, report
