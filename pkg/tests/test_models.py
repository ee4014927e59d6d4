import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ukge.models import (
    ConfigError,
    EmbeddingTable,
    ModelConfig,
    ModelKind,
    bce_with_logits,
    conex_gamma,
    init_model,
    score,
    score_batch,
    score_complex,
    score_conex,
    score_distmult,
    score_gradients,
    score_qmult,
    sigmoid,
    with_forced_gamma,
)
from oracles import gradient_errors

KINDS = ["distmult", "complex", "qmult", "conex"]
finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def vec(n):
    return arrays(np.float64, n, elements=finite)


class TestConfig:
    def test_qmult_dim_30_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(kind="qmult", dim=30)

    @pytest.mark.parametrize("kw", [{"kind": "complex", "dim": 31}, {"dim": 0}, {"kind": "transe"}, {"conex_kernel": 2}, {"conex_channels": 0}, {"init_scale": 0}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ModelConfig(**kw)

    def test_kind_parse(self):
        assert ModelConfig(kind="ConEx").kind is ModelKind.CONEX

    @pytest.mark.parametrize("kind", KINDS)
    def test_parameter_parity(self, kind):
        t = init_model(ModelConfig(kind=kind, dim=32), 5, 2)
        assert t.entity_vectors.shape == (5, 32) and t.relation_vectors.shape == (2, 32)
        assert (t.conv is not None) == (kind == "conex")

    def test_init_range_and_determinism(self):
        cfg = ModelConfig(dim=16, init_scale=0.3, rng_seed=5)
        a, b = init_model(cfg, 7, 3), init_model(cfg, 7, 3)
        assert a.equals(b)
        assert np.abs(a.entity_vectors).max() <= 0.3
        assert not a.equals(init_model(ModelConfig(dim=16, init_scale=0.3, rng_seed=6), 7, 3))

    def test_empty_vocab(self):
        with pytest.raises(ConfigError):
            init_model(ModelConfig(), 0, 1)


class TestExamples:
    def test_distmult(self):
        assert score_distmult([1, 1, 1, 1], [1, 1, 1, 1], [1, 1, 1, 1]) == 4.0
        assert score_distmult([1, 2], [0.5, 1], [2, 1]) == 3.0

    def test_complex(self):
        # layout: (real, imag)
        assert score_complex([1, 0], [0, 1], [0, 1]) == 1.0
        assert score_complex([1, 0], [0, 1], [1, 0]) == 0.0

    def test_complex_antisymmetry_witness(self):
        h, r, t = [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]
        assert score_complex(h, r, t) != score_complex(t, r, h)

    def test_qmult(self):
        assert score_qmult([0, 1, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0]) == -1.0
        assert score_qmult([0, 1, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0], normalize=True) == -1.0
        assert score_qmult([0, 1, 0, 0], [0, 0, 0, 0], [1, 1, 1, 1]) == 0.0

    def test_hamilton_table(self):
        unit = np.eye(4)
        i, j, k = unit[1], unit[2], unit[3]
        # i*j = k, j*k = i, k*i = j, j*i = -k
        assert score_qmult(i, j, k) == 1.0
        assert score_qmult(j, k, i) == 1.0
        assert score_qmult(k, i, j) == 1.0
        assert score_qmult(j, i, k) == -1.0

    @settings(max_examples=50)
    @given(vec(8), vec(8))
    def test_qmult_identity_head(self, r, t):
        h = np.zeros(8)
        h[:2] = 1.0  # w-block of both quaternions
        assert score_qmult(h, r, t) == pytest.approx(float(r @ t), abs=1e-12)

    def test_conex_gamma_shape(self):
        t = init_model(ModelConfig(), 3, 2)
        g, _ = conex_gamma(t.entity_vectors[:2], t.relation_vectors[:2], t.conv)
        assert g.shape == (2, 32)  # 16 complex coordinates

    def test_conex_zero_gate(self, rng):
        t = init_model(ModelConfig(dim=8), 4, 2)
        z = with_forced_gamma(t, np.zeros(4), np.zeros(4))
        assert np.all(score_batch(z, rng.integers(0, [4, 2, 4], size=(20, 3))) == 0.0)

    def test_bce(self):
        zero = EmbeddingTable(ModelConfig(kind="distmult", dim=4), np.zeros((2, 4)), np.zeros((1, 4)))
        g = score_gradients(zero, (0, 0, 1), 1)
        assert g.dscore == -0.5 and g.loss == pytest.approx(np.log(2))
        assert bce_with_logits(1000.0, 1) == 0.0
        assert np.isfinite(bce_with_logits(-1000.0, 1))
        assert sigmoid(800.0) == 1.0 and sigmoid(-800.0) == 0.0


@settings(max_examples=100)
@given(vec(6), vec(6), vec(6))
def test_distmult_symmetric(h, r, t):
    assert score_distmult(h, r, t) == score_distmult(t, r, h)


@settings(max_examples=100)
@given(vec(6), vec(3), vec(6))
def test_complex_real_relation_symmetric(h, r_re, t):
    r = np.concatenate([r_re, np.zeros(3)])
    assert score_complex(h, r, t) == pytest.approx(score_complex(t, r, h), abs=1e-9)


@settings(max_examples=100)
@given(vec(6), vec(6), vec(6))
def test_complex_matches_numpy_complex(h, r, t):
    c = lambda x: x[:3] + 1j * x[3:]
    expected = np.real(np.sum(c(h) * c(r) * np.conj(c(t))))
    assert score_complex(h, r, t) == pytest.approx(expected, abs=1e-9)


@settings(max_examples=100)
@given(vec(8), vec(8), vec(8))
def test_qmult_matches_quaternion_oracle(h, r, t):
    def q(x, i):
        return np.array([x[i], x[2 + i], x[4 + i], x[6 + i]])

    def ham(a, b):
        a1, b1, c1, d1 = a
        a2, b2, c2, d2 = b
        return np.array([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])

    expected = sum(ham(q(h, i), q(r, i)) @ q(t, i) for i in range(2))
    assert score_qmult(h, r, t) == pytest.approx(expected, abs=1e-9)


def test_conex_matches_direct_convolution(rng):
    """Gate against a loop-based convolution written from the definition."""
    t = init_model(ModelConfig(dim=6, conex_channels=2, conex_kernel=3, init_scale=0.5, rng_seed=3), 3, 1)
    h, r, tail = t.entity_vectors[0], t.relation_vectors[0], t.entity_vectors[1]
    conv = t.conv
    C, k, D = 2, 3, 6
    grid = np.zeros((4, D + 2))
    grid[1, 1:-1], grid[2, 1:-1] = h, r
    feat = np.zeros((2, D, C))
    for c in range(C):
        for i in range(2):
            for j in range(D):
                feat[i, j, c] = max(0.0, np.sum(grid[i : i + k, j : j + k] * conv.kernels[c]) + conv.conv_bias[c])
    gamma = conv.weight @ feat.reshape(-1) + conv.bias
    cx = lambda x: x[:3] + 1j * x[3:]
    expected = np.real(np.sum(cx(gamma) * cx(h) * cx(r) * np.conj(cx(tail))))
    assert score_conex(h, r, tail, conv) == pytest.approx(expected, abs=1e-12)


class TestBatch:
    @pytest.mark.parametrize("kind", KINDS)
    def test_rows_equal_single(self, kind, rng):
        t = init_model(ModelConfig(kind=kind, dim=16), 20, 4)
        trip = rng.integers(0, [20, 4, 20], size=(50, 3))
        batch = score_batch(t, trip)
        assert all(batch[i] == score(t, *trip[i]) for i in range(50))
        perm = rng.permutation(50)
        assert np.array_equal(score_batch(t, trip[perm]), batch[perm])

    def test_empty_and_bounds(self):
        t = init_model(ModelConfig(kind="distmult", dim=4), 3, 1)
        assert len(score_batch(t, [])) == 0
        with pytest.raises(IndexError):
            score(t, 0, 1, 0)
        with pytest.raises(IndexError):
            score(t, 3, 0, 0)


@pytest.mark.parametrize("kind", KINDS + ["qmult-normalized"])
def test_gradients_match_finite_differences(kind, rng):
    normalize = kind.endswith("normalized")
    cfg = ModelConfig(kind=kind.split("-")[0], dim=8, conex_channels=3, init_scale=0.8, rng_seed=11, qmult_normalize=normalize)
    table = init_model(cfg, 6, 3)
    for label in (0, 1):
        errs = gradient_errors(table, (1, 2, 4), label, rng)
        assert max(errs.values()) < 1e-6, errs


def test_saturated_gradient_vanishes():
    cfg = ModelConfig(kind="distmult", dim=4)
    t = init_model(cfg, 2, 1)
    t.entity_vectors[:] = 10.0
    t.relation_vectors[:] = 10.0
    g = score_gradients(t, (0, 0, 1), 1)
    assert np.abs(g.head).max() < 1e-100


def test_forced_gamma_requires_conex():
    with pytest.raises(ConfigError):
        with_forced_gamma(init_model(ModelConfig(kind="complex", dim=4), 2, 1), np.ones(2), np.zeros(2))
