"""Link-prediction ranks, MRR and Hits@k.

Ranks are raw by default: other true triples stay among the candidates.
Ties are split evenly: a target tied with ``m`` other candidates is placed
``floor(m / 2)`` positions below the strictly better ones.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .kg import KnowledgeGraph
from .models import EmbeddingTable, ModelKind, _conex, _check_ids, conex_gamma, forward

HITS_AT = (1, 3, 10)


def rank_of(scores: np.ndarray, target_pos: int) -> int:
    st = scores[target_pos]
    better = int(np.count_nonzero(scores > st))
    tied = int(np.count_nonzero(scores == st)) - 1
    return 1 + better + tied // 2


def _candidate_scores(table, h, r, t, direction, cands, gamma_cache=None):
    """Scores of ``cands`` placed in the open slot; bitwise equal to :func:`score_batch` rows."""
    E, Rm = table.entity_vectors, table.relation_vectors
    n = len(cands)
    R = np.broadcast_to(Rm[r], (n, table.dim))
    if direction == "tail":
        H = np.broadcast_to(E[h], (n, table.dim))
        T = E[cands]
    else:
        H = E[cands]
        T = np.broadcast_to(E[t], (n, table.dim))
    if table.kind is not ModelKind.CONEX:
        return forward(table, H, R, T)[0]
    if direction == "tail":
        gamma, _ = conex_gamma(E[[h]], Rm[[r]], table.conv)
        gamma = np.broadcast_to(gamma, (n, table.dim))
    else:
        key = (r, id(cands))
        if gamma_cache is None or key not in gamma_cache:
            gamma, _ = conex_gamma(H, np.ascontiguousarray(R), table.conv)
            if gamma_cache is not None:
                gamma_cache[key] = gamma
        else:
            gamma = gamma_cache[key]
    return _conex(H, R, T, table.conv, gamma=gamma)[0]


def rank_candidates(
    table: EmbeddingTable,
    fixed: tuple[int, int],
    direction: str,
    target: int,
    candidates: Iterable[int],
    exclude: Iterable[int] = (),
) -> int:
    """Rank of ``target`` among ``candidates`` for the open ``direction`` slot.

    ``fixed`` is ``(relation, known_entity)``: the head when predicting tails,
    the tail when predicting heads. ``exclude`` drops candidates (filtered mode).
    """
    if direction not in ("head", "tail"):
        raise ValueError("direction must be 'head' or 'tail'")
    cands = np.asarray(sorted(set(candidates)), dtype=np.int64)
    drop = set(exclude) - {target}
    if drop:
        cands = cands[~np.isin(cands, list(drop))]
    pos = np.searchsorted(cands, target)
    if pos >= len(cands) or cands[pos] != target:
        raise ValueError(f"target {target} is not a candidate")
    r, known = fixed
    h, t = (known, target) if direction == "tail" else (target, known)
    _check_ids(table, [(h, r, t)])
    return rank_of(_candidate_scores(table, h, r, t, direction, cands), int(pos))


@dataclass(frozen=True)
class EvalReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    num_test_triples: int
    candidate_set_size: int
    filtered: bool = False

    def as_dict(self) -> dict:
        return asdict(self)

    def table(self, label: str = "") -> str:
        """Aligned text row in the column order MRR, H@1, H@3, H@10."""
        head = f"{'':<16}{'MRR':>8}{'H@1':>8}{'H@3':>8}{'H@10':>8}"
        row = f"{label:<16}{self.mrr:>8.3f}{self.hits1:>8.3f}{self.hits3:>8.3f}{self.hits10:>8.3f}"
        return head + "\n" + row


def compute_ranks(
    table: EmbeddingTable,
    test_triples,
    candidates: Iterable[int],
    known_triples=None,
) -> np.ndarray:
    """``(n, 2)`` array of (head_rank, tail_rank) per test triple.

    ``known_triples`` switches on filtered ranking: every other known-true
    completion is removed from the candidate list.
    """
    test = _check_ids(table, test_triples)
    cands = np.asarray(sorted(set(candidates)), dtype=np.int64)
    if len(cands) == 0:
        raise ValueError("candidate set is empty")
    _check_ids(table, [(int(cands[0]), 0, int(cands[-1]))])
    index = {int(c): i for i, c in enumerate(cands)}
    heads_of, tails_of = defaultdict(set), defaultdict(set)
    if known_triples is not None:
        for h, r, t in np.asarray(known_triples, dtype=np.int64).reshape(-1, 3).tolist():
            heads_of[(r, t)].add(h)
            tails_of[(h, r)].add(t)
    gamma_cache: dict = {}
    ranks = np.zeros((len(test), 2), dtype=np.int64)
    for i, (h, r, t) in enumerate(test.tolist()):
        for j, (direction, target, others) in enumerate(
            (("head", h, heads_of.get((r, t))), ("tail", t, tails_of.get((h, r))))
        ):
            if target not in index:
                raise ValueError(f"test entity {target} is not in the candidate set")
            scores = _candidate_scores(table, h, r, t, direction, cands, gamma_cache)
            if others:
                keep = ~np.isin(cands, list(others - {target}))
                pos = int(np.count_nonzero(keep[: index[target]]))
                ranks[i, j] = rank_of(scores[keep], pos)
            else:
                ranks[i, j] = rank_of(scores, index[target])
    return ranks


def metrics_from_ranks(ranks: np.ndarray, candidate_set_size: int, filtered: bool = False) -> EvalReport:
    ranks = np.asarray(ranks, dtype=np.int64).reshape(-1, 2)
    if len(ranks) == 0:
        raise ValueError("no test triples")
    denom = 2 * len(ranks)
    # fsum is correctly rounded, so the result does not depend on summation order
    mrr = math.fsum(1.0 / ranks.ravel()) / denom
    hits = [float(np.count_nonzero(ranks <= k) / denom) for k in HITS_AT]
    return EvalReport(mrr, *hits, num_test_triples=len(ranks), candidate_set_size=candidate_set_size, filtered=filtered)


def evaluate(
    table: EmbeddingTable,
    test_triples,
    candidates: Iterable[int],
    known_triples=None,
) -> EvalReport:
    cands = sorted(set(candidates))
    ranks = compute_ranks(table, test_triples, cands, known_triples)
    return metrics_from_ranks(ranks, len(cands), filtered=known_triples is not None)


def remap_triples(test: KnowledgeGraph, vocab: KnowledgeGraph | tuple) -> np.ndarray:
    """Express ``test``'s triples in the id space of ``vocab`` (a graph or ``(entities, relations)``).

    Raises ``KeyError`` naming the first out-of-vocabulary IRI.
    """
    if isinstance(vocab, KnowledgeGraph):
        eidx, ridx = vocab.entity_index, vocab.relation_index
    else:
        eidx = {iri: i for i, iri in enumerate(vocab[0])}
        ridx = {iri: i for i, iri in enumerate(vocab[1])}
    ent_map = np.empty(test.num_entities, dtype=np.int64)
    for i, iri in enumerate(test.entities):
        if iri not in eidx:
            raise KeyError(f"out-of-vocabulary entity {iri}")
        ent_map[i] = eidx[iri]
    rel_map = np.empty(test.num_relations, dtype=np.int64)
    for i, iri in enumerate(test.relations):
        if iri not in ridx:
            raise KeyError(f"out-of-vocabulary relation {iri}")
        rel_map[i] = ridx[iri]
    tri = test.triples
    if len(tri) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    return np.stack([ent_map[tri[:, 0]], rel_map[tri[:, 1]], ent_map[tri[:, 2]]], axis=1)
