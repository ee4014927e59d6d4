"""Mini-batch training with negative sampling, optimizers and the ``UKE1`` checkpoint format."""

from __future__ import annotations

import logging
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .kg import KnowledgeGraph
from .models import (
    ConvParams,
    EmbeddingTable,
    ModelConfig,
    ModelKind,
    backward,
    bce_with_logits,
    forward,
    init_model,
    sigmoid,
)

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1024
    learning_rate: float = 0.05
    negatives_per_positive: int = 10
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 0.0
    rng_seed: int = 0
    checkpoint_every: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.negatives_per_positive < 1:
            raise ValueError("batch_size and negatives_per_positive must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.workers > 1 and self.optimizer != "sgd":
            raise ValueError("parallel training supports the sgd optimizer only")


@dataclass
class LossTrace:
    epoch_loss: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epoch_loss)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,mean_loss\n")
            for i, v in enumerate(self.epoch_loss, start=1):
                fh.write(f"{i},{v!r}\n")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            params[name] -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def corrupt(triples: np.ndarray, k: int, num_entities: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` corruptions per row: head or tail (fair coin) replaced by a different uniform entity."""
    if num_entities < 2:
        raise ValueError("corruption needs at least two entities")
    if k < 1:
        raise ValueError("k must be >= 1")
    neg = np.repeat(np.asarray(triples, dtype=np.int64).reshape(-1, 3), k, axis=0)
    n = len(neg)
    col = np.where(rng.integers(0, 2, size=n) == 0, 0, 2)
    repl = rng.integers(0, num_entities - 1, size=n)
    orig = neg[np.arange(n), col]
    repl += repl >= orig  # skip the original endpoint
    neg[np.arange(n), col] = repl
    return neg


def negative_samples(triple, k: int, num_entities: int, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    return [tuple(row) for row in corrupt(np.array([triple]), k, num_entities, rng).tolist()]


def batch_gradients(table: EmbeddingTable, pos: np.ndarray, neg: np.ndarray, l2: float = 0.0):
    """Mean BCE loss over positives (label 1) and negatives (label 0) and its parameter gradients."""
    trip = np.concatenate([pos, neg])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    E, Rm = table.entity_vectors, table.relation_vectors
    s, cache = forward(table, E[trip[:, 0]], Rm[trip[:, 1]], E[trip[:, 2]], rowwise=False)
    loss = float(np.mean(bce_with_logits(s, y)))
    ds = (sigmoid(s) - y) / len(trip)
    dH, dR, dT, dconv = backward(cache, ds)
    gE = np.zeros_like(E)
    np.add.at(gE, trip[:, 0], dH)
    np.add.at(gE, trip[:, 2], dT)
    gR = np.zeros_like(Rm)
    np.add.at(gR, trip[:, 1], dR)
    grads = {"entity": gE, "relation": gR}
    if dconv is not None:
        grads.update(dconv)
    if l2:
        params = table.parameters()
        for name in grads:
            grads[name] = grads[name] + l2 * params[name]
    return loss, grads


def train(
    g: KnowledgeGraph,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[EmbeddingTable, LossTrace]:
    """Train a fresh table on ``g``.

    With ``tcfg.workers == 1`` runs are bit-reproducible under fixed seeds.
    ``workers > 1`` processes batches concurrently with lock-free SGD updates
    and is not reproducible.
    """
    if len(g) == 0:
        raise ValueError("cannot train on an empty graph")
    table = init_model(mcfg, g.num_entities, g.num_relations)
    trace = LossTrace()
    rng = np.random.Generator(np.random.PCG64(tcfg.rng_seed))
    opt = SGD(tcfg.learning_rate) if tcfg.optimizer == "sgd" else Adam(
        tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps
    )
    params = table.parameters()
    positives = g.triples
    n = len(positives)
    bs = tcfg.batch_size

    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(n)
        batches = [positives[order[i : i + bs]] for i in range(0, n, bs)]
        negs = [corrupt(b, tcfg.negatives_per_positive, g.num_entities, rng) for b in batches]
        if tcfg.workers == 1:
            losses = []
            for bi, (pos, neg) in enumerate(zip(batches, negs)):
                loss, grads = batch_gradients(table, pos, neg, tcfg.l2)
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {bi}")
                opt.step(params, grads)
                losses.append(loss * len(pos))
        else:
            losses = _parallel_epoch(table, params, opt, batches, negs, tcfg, epoch)
        mean = float(np.sum(losses) / n)
        trace.epoch_loss.append(mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)
        if checkpoint_path is not None and tcfg.checkpoint_every and epoch % tcfg.checkpoint_every == 0:
            save_checkpoint(table, checkpoint_path)
    return table, trace


def _parallel_epoch(table, params, opt, batches, negs, tcfg, epoch):
    losses = [0.0] * len(batches)

    def work(bi):
        loss, grads = batch_gradients(table, batches[bi], negs[bi], tcfg.l2)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {bi}")
        # each in-place numpy update holds the GIL for the whole array, so no row sees a torn write
        opt.step(params, grads)
        losses[bi] = loss * len(batches[bi])

    with ThreadPoolExecutor(max_workers=tcfg.workers) as pool:
        list(pool.map(work, range(len(batches))))
    return losses


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"UKE1"
_KIND_CODE = {ModelKind.DISTMULT: 0, ModelKind.COMPLEX: 1, ModelKind.QMULT: 2, ModelKind.CONEX: 3}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_QNORM_BIT = 0x10
_HEAD = struct.Struct("<4sBIQQ")
_CONV_HEAD = struct.Struct("<II")
_FOOTER = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


class KindMismatchError(CheckpointError):
    pass


def checkpoint_bytes(table: EmbeddingTable) -> bytes:
    kind_byte = _KIND_CODE[table.kind] | (_QNORM_BIT if table.config.qmult_normalize else 0)
    parts = [
        _HEAD.pack(CHECKPOINT_MAGIC, kind_byte, table.dim, table.num_entities, table.num_relations),
        np.ascontiguousarray(table.entity_vectors, dtype="<f8").tobytes(),
        np.ascontiguousarray(table.relation_vectors, dtype="<f8").tobytes(),
    ]
    if table.conv is not None:
        parts.append(_CONV_HEAD.pack(table.conv.channels, table.conv.kernel))
        for arr in table.conv.arrays().values():
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + _FOOTER.pack(zlib.crc32(body))


def save_checkpoint(table: EmbeddingTable, path: str | Path) -> None:
    data = checkpoint_bytes(table)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def parse_checkpoint(data: bytes, expected_kind: ModelKind | str | None = None) -> EmbeddingTable:
    if len(data) < 4 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic bytes, not a UKE1 checkpoint")
    if len(data) < _HEAD.size + _FOOTER.size:
        raise CheckpointError("truncated checkpoint")
    body, (crc,) = data[: -_FOOTER.size], _FOOTER.unpack(data[-_FOOTER.size :])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch, checkpoint is corrupted or truncated")
    _, kind_byte, dim, n_ent, n_rel = _HEAD.unpack_from(body)
    code = kind_byte & 0x0F
    if code not in _CODE_KIND:
        raise CheckpointError(f"unknown model kind code {code}")
    kind = _CODE_KIND[code]
    if expected_kind is not None and ModelKind.parse(expected_kind) is not kind:
        raise KindMismatchError(f"checkpoint holds a {kind.value} model, expected {ModelKind.parse(expected_kind).value}")
    off = _HEAD.size

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        end = off + 8 * count
        if end > len(body):
            raise CheckpointError("truncated parameter block")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        off = end
        return arr

    ent = take((n_ent, dim))
    rel = take((n_rel, dim))
    conv = None
    channels, kernel = 8, 3
    if kind is ModelKind.CONEX:
        if off + _CONV_HEAD.size > len(body):
            raise CheckpointError("missing conv block")
        channels, kernel = _CONV_HEAD.unpack_from(body, off)
        off += _CONV_HEAD.size
        conv = ConvParams(
            kernels=take((channels, kernel, kernel)),
            conv_bias=take((channels,)),
            weight=take((dim, channels * 2 * dim)),
            bias=take((dim,)),
        )
    if off != len(body):
        raise CheckpointError("unexpected trailing bytes in checkpoint")
    try:
        cfg = ModelConfig(
            kind=kind,
            dim=dim,
            conex_channels=channels,
            conex_kernel=kernel,
            qmult_normalize=bool(kind_byte & _QNORM_BIT),
        )
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    return EmbeddingTable(cfg, ent, rel, conv)


def load_checkpoint(path: str | Path, expected_kind: ModelKind | str | None = None) -> EmbeddingTable:
    return parse_checkpoint(Path(path).read_bytes(), expected_kind)
