"""DistMult, ComplEx, QMult and ConEx scoring with hand-written gradients.

Every embedding holds ``dim`` reals regardless of kind. Complex embeddings
store real parts in the first half and imaginary parts in the second; quaternion
embeddings store four contiguous blocks ``(w, x, y, z)``.

The batched kernels here are row-independent: scoring a triple alone or inside
any batch yields the same bits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ConfigError(ValueError):
    pass


class ModelKind(str, Enum):
    DISTMULT = "distmult"
    COMPLEX = "complex"
    QMULT = "qmult"
    CONEX = "conex"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown model kind {value!r}") from None


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind = ModelKind.CONEX
    dim: int = 32
    conex_channels: int = 8
    conex_kernel: int = 3
    init_scale: float = 0.1
    rng_seed: int = 0
    qmult_normalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if self.kind in (ModelKind.COMPLEX, ModelKind.CONEX) and self.dim % 2:
            raise ConfigError(f"{self.kind.value} needs an even dim, got {self.dim}")
        if self.kind is ModelKind.QMULT and self.dim % 4:
            raise ConfigError(f"qmult needs dim divisible by 4, got {self.dim}")
        if self.kind is ModelKind.CONEX:
            if self.conex_channels < 1:
                raise ConfigError("conex_channels must be positive")
            if self.conex_kernel < 1 or self.conex_kernel % 2 == 0:
                raise ConfigError(f"conex_kernel must be odd, got {self.conex_kernel}")
        if not self.init_scale > 0:
            raise ConfigError("init_scale must be positive")


@dataclass
class ConvParams:
    """ConEx gate: ``channels`` square kernels over the 2 x dim grid, then an affine map to dim."""

    kernels: np.ndarray  # (C, k, k)
    conv_bias: np.ndarray  # (C,)
    weight: np.ndarray  # (dim, 2 * dim * C), inputs ordered (grid position, channel)
    bias: np.ndarray  # (dim,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"kernels": self.kernels, "conv_bias": self.conv_bias, "weight": self.weight, "bias": self.bias}

    def copy(self) -> "ConvParams":
        return ConvParams(**{k: v.copy() for k, v in self.arrays().items()})

    @property
    def channels(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel(self) -> int:
        return self.kernels.shape[1]


@dataclass
class EmbeddingTable:
    config: ModelConfig
    entity_vectors: np.ndarray
    relation_vectors: np.ndarray
    conv: ConvParams | None = None

    @property
    def kind(self) -> ModelKind:
        return self.config.kind

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def num_entities(self) -> int:
        return self.entity_vectors.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation_vectors.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"entity": self.entity_vectors, "relation": self.relation_vectors}
        if self.conv is not None:
            params.update(self.conv.arrays())
        return params

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            self.config,
            self.entity_vectors.copy(),
            self.relation_vectors.copy(),
            None if self.conv is None else self.conv.copy(),
        )

    def equals(self, other: "EmbeddingTable") -> bool:
        """Bit-identical parameters and matching kind/dim."""
        if (self.kind, self.dim) != (other.kind, other.dim):
            return False
        if self.config.qmult_normalize != other.config.qmult_normalize:
            return False
        a, b = self.parameters(), other.parameters()
        return a.keys() == b.keys() and all(
            a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a
        )


def init_model(cfg: ModelConfig, num_entities: int, num_relations: int) -> EmbeddingTable:
    if num_entities < 1 or num_relations < 1:
        raise ConfigError("need at least one entity and one relation")
    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    s = cfg.init_scale
    ent = rng.uniform(-s, s, size=(num_entities, cfg.dim))
    rel = rng.uniform(-s, s, size=(num_relations, cfg.dim))
    conv = None
    if cfg.kind is ModelKind.CONEX:
        c, k, d = cfg.conex_channels, cfg.conex_kernel, cfg.dim
        conv = ConvParams(
            kernels=rng.uniform(-s, s, size=(c, k, k)),
            conv_bias=rng.uniform(-s, s, size=c),
            weight=rng.uniform(-s, s, size=(d, c * 2 * d)),
            bias=rng.uniform(-s, s, size=d),
        )
    return EmbeddingTable(cfg, ent, rel, conv)


# ---------------------------------------------------------------------------
# batched forward / backward kernels; H, R, T are (B, dim) float64


def _halves(x):
    n = x.shape[-1] // 2
    return x[..., :n], x[..., n:]


def _quarters(x):
    n = x.shape[-1] // 4
    return x[..., :n], x[..., n : 2 * n], x[..., 2 * n : 3 * n], x[..., 3 * n :]


def _distmult(H, R, T):
    # h*t first: elementwise products commute exactly, so score(h,r,t) == score(t,r,h) bitwise
    return np.sum(H * T * R, axis=-1), (H, R, T)


def _distmult_back(cache, d):
    H, R, T = cache
    d = d[:, None]
    return d * R * T, d * H * T, d * H * R


def _complex_product(H, R):
    hr, hi = _halves(H)
    rr, ri = _halves(R)
    return hr * rr - hi * ri, hr * ri + hi * rr


def _hermitian(pr, pi, T):
    tr, ti = _halves(T)
    return np.sum(np.concatenate([pr * tr, pi * ti], axis=-1), axis=-1)


def _complex(H, R, T):
    pr, pi = _complex_product(H, R)
    return _hermitian(pr, pi, T), (H, R, T, pr, pi)


def _complex_product_back(H, R, dpr, dpi):
    hr, hi = _halves(H)
    rr, ri = _halves(R)
    dH = np.concatenate([dpr * rr + dpi * ri, -dpr * ri + dpi * rr], axis=-1)
    dR = np.concatenate([dpr * hr + dpi * hi, -dpr * hi + dpi * hr], axis=-1)
    return dH, dR


def _complex_back(cache, d):
    H, R, T, pr, pi = cache
    d = d[:, None]
    tr, ti = _halves(T)
    dH, dR = _complex_product_back(H, R, d * tr, d * ti)
    dT = np.concatenate([d * pr, d * pi], axis=-1)
    return dH, dR, dT


_QEPS = 1e-12


def _hamilton(H, R):
    hw, hx, hy, hz = _quarters(H)
    rw, rx, ry, rz = _quarters(R)
    return np.concatenate(
        [
            hw * rw - hx * rx - hy * ry - hz * rz,
            hw * rx + hx * rw + hy * rz - hz * ry,
            hw * ry - hx * rz + hy * rw + hz * rx,
            hw * rz + hx * ry - hy * rx + hz * rw,
        ],
        axis=-1,
    )


def _hamilton_back(H, R, dQ):
    hw, hx, hy, hz = _quarters(H)
    rw, rx, ry, rz = _quarters(R)
    qw, qx, qy, qz = _quarters(dQ)
    dH = np.concatenate(
        [
            qw * rw + qx * rx + qy * ry + qz * rz,
            -qw * rx + qx * rw - qy * rz + qz * ry,
            -qw * ry + qx * rz + qy * rw - qz * rx,
            -qw * rz - qx * ry + qy * rx + qz * rw,
        ],
        axis=-1,
    )
    dR = np.concatenate(
        [
            qw * hw + qx * hx + qy * hy + qz * hz,
            -qw * hx + qx * hw + qy * hz - qz * hy,
            -qw * hy - qx * hz + qy * hw + qz * hx,
            -qw * hz + qx * hy - qy * hx + qz * hw,
        ],
        axis=-1,
    )
    return dH, dR


def _quat_norm(R):
    rw, rx, ry, rz = _quarters(R)
    n = np.maximum(np.sqrt(rw * rw + rx * rx + ry * ry + rz * rz), _QEPS)
    return np.concatenate([n, n, n, n], axis=-1)


def _qmult(H, R, T, normalize=False):
    Rn, norm = R, None
    if normalize:
        norm = _quat_norm(R)
        Rn = R / norm
    Q = _hamilton(H, Rn)
    return np.sum(Q * T, axis=-1), (H, R, T, Rn, norm, Q)


def _qmult_back(cache, d):
    H, R, T, Rn, norm, Q = cache
    d = d[:, None]
    dH, dRn = _hamilton_back(H, Rn, d * T)
    dR = dRn
    if norm is not None:
        # d(r/|r|) = (I - u u^T) / |r| per quaternion coordinate
        proj = sum(_quarters(Rn * dRn))
        proj = np.concatenate([proj, proj, proj, proj], axis=-1)
        dR = (dRn - Rn * proj) / norm
    return dH, dR, d * Q


def _im2col(H, R, k):
    """Patches of the zero-padded 2 x dim grid ``[H; R]``: (B, 2 * dim, k * k)."""
    B, D = H.shape
    p = k // 2
    grid = np.zeros((B, 2 + 2 * p, D + 2 * p))
    grid[:, p, p : p + D] = H
    grid[:, p + 1, p : p + D] = R
    win = sliding_window_view(grid, (k, k), axis=(1, 2))  # (B, 2, D, k, k)
    return win.reshape(B, 2 * D, k * k)


def conex_gamma(H, R, conv: ConvParams, rowwise: bool = True):
    """Convolutional gate ``affine(flatten(relu(conv2d([H; R]))))``: (B, dim) plus a backward cache.

    ``rowwise`` computes the affine map one row at a time so that results do
    not depend on the batch composition.
    """
    B, D = H.shape
    C, k = conv.channels, conv.kernel
    patches = _im2col(H, R, k)
    kflat = conv.kernels.reshape(C, k * k)
    Z = np.matmul(patches, kflat.T) + conv.conv_bias  # (B, 2D, C)
    # flattened position-major: feature index = (row * dim + col) * C + channel
    flat = np.maximum(Z, 0.0).reshape(B, 2 * D * C)
    if rowwise:
        G = np.matmul(flat[:, None, :], conv.weight.T)[:, 0, :] + conv.bias
    else:
        G = flat @ conv.weight.T + conv.bias
    return G, (patches, Z, flat)


def _conex(H, R, T, conv, rowwise=True, gamma=None):
    if gamma is None:
        G, gcache = conex_gamma(H, R, conv, rowwise)
    else:
        G, gcache = gamma, None
    pr, pi = _complex_product(H, R)
    gr, gi = _halves(G)
    qr = gr * pr - gi * pi
    qi = gr * pi + gi * pr
    return _hermitian(qr, qi, T), (H, R, T, conv, G, gcache, pr, pi, qr, qi)


def _conex_back(cache, d):
    H, R, T, conv, G, (patches, Z, flat), pr, pi, qr, qi = cache
    B, D = H.shape
    C, k = conv.channels, conv.kernel
    p = k // 2
    d = d[:, None]
    tr, ti = _halves(T)
    gr, gi = _halves(G)
    dqr, dqi = d * tr, d * ti
    dT = np.concatenate([d * qr, d * qi], axis=-1)
    dG = np.concatenate([dqr * pr + dqi * pi, -dqr * pi + dqi * pr], axis=-1)
    dH, dR = _complex_product_back(H, R, dqr * gr + dqi * gi, -dqr * gi + dqi * gr)

    dweight = dG.T @ flat
    dbias = dG.sum(axis=0)
    dZ = (dG @ conv.weight).reshape(B * 2 * D, C)
    dZ *= Z.reshape(B * 2 * D, C) > 0
    dkernels = (dZ.T @ patches.reshape(B * 2 * D, k * k)).reshape(C, k, k)
    dconv_bias = dZ.sum(axis=0)
    dpatches = (dZ @ conv.kernels.reshape(C, k * k)).reshape(B, 2, D, k, k)
    dgrid = np.zeros((B, 2 + 2 * p, D + 2 * p))
    for a in range(k):
        for b in range(k):
            dgrid[:, a : a + 2, b : b + D] += dpatches[..., a, b]
    dH = dH + dgrid[:, p, p : p + D]
    dR = dR + dgrid[:, p + 1, p : p + D]
    dconv = {"kernels": dkernels, "conv_bias": dconv_bias, "weight": dweight, "bias": dbias}
    return dH, dR, dT, dconv


def forward(table: EmbeddingTable, H, R, T, rowwise: bool = True):
    """Scores for aligned rows of head, relation and tail vectors, with a cache for :func:`backward`."""
    kind = table.kind
    if kind is ModelKind.DISTMULT:
        s, cache = _distmult(H, R, T)
    elif kind is ModelKind.COMPLEX:
        s, cache = _complex(H, R, T)
    elif kind is ModelKind.QMULT:
        s, cache = _qmult(H, R, T, table.config.qmult_normalize)
    else:
        s, cache = _conex(H, R, T, table.conv, rowwise)
    return s, (kind, cache)


def backward(cache, dscore):
    """Gradients of ``sum(dscore * score)`` w.r.t. H, R, T and (ConEx) the conv parameters."""
    kind, inner = cache
    if kind is ModelKind.DISTMULT:
        return (*_distmult_back(inner, dscore), None)
    if kind is ModelKind.COMPLEX:
        return (*_complex_back(inner, dscore), None)
    if kind is ModelKind.QMULT:
        return (*_qmult_back(inner, dscore), None)
    return _conex_back(inner, dscore)


# ---------------------------------------------------------------------------
# single-vector scoring


def _rows(*vs):
    return [np.asarray(v, dtype=np.float64).reshape(1, -1) for v in vs]


def score_distmult(h, r, t) -> float:
    return float(_distmult(*_rows(h, r, t))[0][0])


def score_complex(h, r, t) -> float:
    return float(_complex(*_rows(h, r, t))[0][0])


def score_qmult(h, r, t, normalize: bool = False) -> float:
    return float(_qmult(*_rows(h, r, t), normalize=normalize)[0][0])


def score_conex(h, r, t, conv: ConvParams) -> float:
    return float(_conex(*_rows(h, r, t), conv)[0][0])


def _check_ids(table: EmbeddingTable, triples: np.ndarray) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples):
        ents = triples[:, [0, 2]]
        if ents.min() < 0 or ents.max() >= table.num_entities:
            raise IndexError("entity id out of range")
        if triples[:, 1].min() < 0 or triples[:, 1].max() >= table.num_relations:
            raise IndexError("relation id out of range")
    return triples


def score_batch(table: EmbeddingTable, triples) -> np.ndarray:
    triples = _check_ids(table, triples)
    if len(triples) == 0:
        return np.zeros(0)
    E, Rm = table.entity_vectors, table.relation_vectors
    s, _ = forward(table, E[triples[:, 0]], Rm[triples[:, 1]], E[triples[:, 2]])
    return s


def score(table: EmbeddingTable, h: int, r: int, t: int) -> float:
    return float(score_batch(table, [(h, r, t)])[0])


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def bce_with_logits(s, y):
    """Per-example binary cross-entropy on logits, stable for large |s|."""
    s = np.asarray(s, dtype=np.float64)
    return np.logaddexp(0.0, s) - y * s


@dataclass
class TripleGradients:
    loss: float
    dscore: float
    head: np.ndarray
    relation: np.ndarray
    tail: np.ndarray
    conv: dict[str, np.ndarray] | None = None


def score_gradients(table: EmbeddingTable, triple, label: int) -> TripleGradients:
    """Analytic gradients of the BCE loss of one triple w.r.t. its head, relation and tail slots."""
    (h, r, t) = _check_ids(table, [triple])[0]
    E, Rm = table.entity_vectors, table.relation_vectors
    s, cache = forward(table, E[[h]], Rm[[r]], E[[t]])
    loss = float(bce_with_logits(s, label)[0])
    ds = sigmoid(s) - label
    dH, dR, dT, dconv = backward(cache, ds)
    return TripleGradients(loss, float(ds[0]), dH[0], dR[0], dT[0], dconv)


def with_forced_gamma(table: EmbeddingTable, gamma_real: np.ndarray, gamma_imag: np.ndarray) -> EmbeddingTable:
    """ConEx table whose gate is the constant complex vector ``gamma_real + i * gamma_imag``."""
    if table.conv is None:
        raise ConfigError("only ConEx tables have a convolutional gate")
    conv = table.conv.copy()
    conv.kernels[:] = 0.0
    conv.conv_bias[:] = 0.0
    conv.weight[:] = 0.0
    conv.bias[:] = np.concatenate([gamma_real, gamma_imag])
    return replace(table, conv=conv)
