"""Desk-scale experiments: train on one graph versus the fusion of two views of it."""

from __future__ import annotations

from dataclasses import dataclass

from .evaluation import evaluate, remap_triples
from .fusion import fuse_kgs
from .models import ModelConfig
from .sampling import SplitConfig, split_train_test
from .synthetic import twin_graphs
from .training import TrainConfig, train


@dataclass(frozen=True)
class TwinConfig:
    kind: str = "conex"
    dim: int = 32
    epochs: int = 30
    negatives_per_positive: int = 4
    learning_rate: float = 0.01
    batch_size: int = 256
    test_ratio: float = 0.2


@dataclass(frozen=True)
class TwinResult:
    seed: int
    single_triples: int
    merged_triples: int
    sameas_links: int
    single_mrr: float
    merged_mrr: float

    @property
    def merged_wins(self) -> bool:
        return self.merged_mrr > self.single_mrr


def merged_vs_single(seed: int, cfg: TwinConfig = TwinConfig()) -> TwinResult:
    """Test MRR on the first view's held-out triples for a model trained on that view alone
    and for one trained on the fusion of both views' training parts.

    Both models rank against their own training vocabulary.
    """
    g1, g2, links = twin_graphs(seed)
    s1 = split_train_test(g1, SplitConfig(test_ratio=cfg.test_ratio, rng_seed=seed))
    s2 = split_train_test(g2, SplitConfig(test_ratio=cfg.test_ratio, rng_seed=seed + 100))
    merged, _ = fuse_kgs([s1.train, s2.train], links)
    mcfg = ModelConfig(kind=cfg.kind, dim=cfg.dim, rng_seed=seed)
    tcfg = TrainConfig(
        epochs=cfg.epochs,
        negatives_per_positive=cfg.negatives_per_positive,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        rng_seed=seed,
    )
    mrr = []
    for g in (s1.train, merged):
        table, _ = train(g, mcfg, tcfg)
        mrr.append(evaluate(table, remap_triples(s1.test, g), range(g.num_entities)).mrr)
    return TwinResult(seed, len(s1.train), len(merged), links.num_links, mrr[0], mrr[1])
