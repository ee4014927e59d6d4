"""Evaluation-set construction: seed sampling, 1-hop closure, projection and splitting.

All randomness goes through numpy's PCG64 bit generator so a given seed
reproduces the same sample on every platform.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Collection, Iterable

import numpy as np

from .fusion import SameAsMap
from .kg import KnowledgeGraph

logger = logging.getLogger(__name__)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SplitConfig:
    seed_fraction: float = 0.01
    test_ratio: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.seed_fraction <= 1.0:
            raise ValueError(f"seed_fraction must be in (0, 1], got {self.seed_fraction}")
        if not 0.0 < self.test_ratio < 1.0:
            raise ValueError(f"test_ratio must be in (0, 1), got {self.test_ratio}")


@dataclass(frozen=True)
class Split:
    train: KnowledgeGraph
    test: KnowledgeGraph

    def manifest(self) -> dict:
        def row(g: KnowledgeGraph) -> dict:
            deg = 2 * len(g) / g.num_entities if g.num_entities else 0.0
            return {
                "num_entities": g.num_entities,
                "num_relations": g.num_relations,
                "num_triples": len(g),
                "avg_degree": round(deg, 2),
            }

        return {"train": row(self.train), "test": row(self.test)}


def aligned_entities(g: KnowledgeGraph, m: SameAsMap) -> set[int]:
    """Entity ids of ``g`` that take part in at least one sameAs link."""
    return {i for i, iri in enumerate(g.entities) if iri in m}


def sample_seed_entities(g: KnowledgeGraph, aligned: Collection[int], cfg: SplitConfig) -> set[int]:
    if not aligned:
        raise ValueError("no aligned entities to sample from")
    pool = np.array(sorted(aligned), dtype=np.int64)
    if pool.max() >= g.num_entities or pool.min() < 0:
        raise ValueError("aligned ids must be entities of the graph")
    k = math.ceil(cfg.seed_fraction * len(pool))
    chosen = make_rng(cfg.rng_seed).choice(pool, size=k, replace=False)
    return set(chosen.tolist())


def one_hop_subgraph(g: KnowledgeGraph, seeds: Iterable[int]) -> KnowledgeGraph:
    """Triples of ``g`` incident to a seed, re-interned."""
    seeds = np.fromiter(seeds, dtype=np.int64)
    if len(seeds) == 0 or len(g) == 0:
        return KnowledgeGraph()
    mask = np.isin(g.triples[:, 0], seeds) | np.isin(g.triples[:, 2], seeds)
    return g.subgraph(mask)


def project_seeds(
    seeds: Iterable[str], m: SameAsMap, target: Collection[str] | None = None
) -> set[str]:
    """Counterparts of ``seeds`` under ``m``, optionally restricted to ``target``'s IRIs.

    Seeds without any counterpart are dropped and reported through the logger.
    """
    out: set[str] = set()
    dropped = 0
    for s in seeds:
        found = [c for c in m.members(s) if c != s and (target is None or c in target)]
        if not found:
            dropped += 1
            continue
        out.update(found)
    if dropped:
        logger.warning("project_seeds: %d seed(s) without counterpart dropped", dropped)
    return out


def split_train_test(g: KnowledgeGraph, cfg: SplitConfig) -> Split:
    """Random triple split whose test vocabulary is contained in the training vocabulary.

    Test triples that would introduce an entity or relation unseen in train are
    moved to train. Moving only adds to train, so one ordered pass reaches the
    fixpoint.
    """
    n = len(g)
    if n < 3:
        if n:
            logger.warning("graph has %d triple(s); everything goes to train", n)
        return Split(g.subgraph(np.arange(n)), KnowledgeGraph())
    order = make_rng(cfg.rng_seed).permutation(n)
    n_test = min(n - 1, max(1, round(cfg.test_ratio * n)))
    in_test = np.zeros(n, dtype=bool)
    in_test[order[:n_test]] = True

    tri = g.triples
    ent_count = np.bincount(tri[~in_test][:, [0, 2]].ravel(), minlength=g.num_entities)
    rel_count = np.bincount(tri[~in_test][:, 1], minlength=g.num_relations)
    for i in order[:n_test].tolist():
        h, r, t = tri[i]
        if ent_count[h] == 0 or ent_count[t] == 0 or rel_count[r] == 0:
            in_test[i] = False
            ent_count[h] += 1
            ent_count[t] += 1
            rel_count[r] += 1

    train_rows = np.flatnonzero(~in_test)
    test_rows = np.flatnonzero(in_test)
    return Split(g.subgraph(train_rows), g.subgraph(test_rows))
