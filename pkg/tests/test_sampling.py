import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ukge.fusion import SameAsMap
from ukge.kg import KnowledgeGraph, build_graph
from ukge.sampling import (
    SplitConfig,
    aligned_entities,
    make_rng,
    one_hop_subgraph,
    project_seeds,
    sample_seed_entities,
    split_train_test,
)
from ukge.synthetic import exact_random_graph, random_graph


def closed(split):
    train_e, train_r = set(split.train.entities), set(split.train.relations)
    return all(h in train_e and t in train_e and r in train_r for h, r, t in split.test.iter_iri_triples())


class TestConfig:
    @pytest.mark.parametrize("kw", [{"seed_fraction": 0}, {"seed_fraction": 1.5}, {"test_ratio": 0}, {"test_ratio": 1}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SplitConfig(**kw)

    def test_pcg64(self):
        assert isinstance(make_rng(3).bit_generator, np.random.PCG64)
        assert make_rng(3).integers(0, 1 << 30) == make_rng(3).integers(0, 1 << 30)


class TestSeeds:
    @pytest.mark.parametrize("n,frac,expected", [(1000, 0.01, 10), (150, 0.01, 2), (1, 0.01, 1), (40, 0.5, 20)])
    def test_count_is_ceiling(self, n, frac, expected):
        g = build_graph((f"e{i}", "p", f"e{i + 1}") for i in range(n))
        seeds = sample_seed_entities(g, range(n), SplitConfig(seed_fraction=frac))
        assert len(seeds) == expected == math.ceil(frac * n)
        assert seeds <= set(range(n))

    def test_deterministic(self):
        g = build_graph((f"e{i}", "p", f"e{i + 1}") for i in range(500))
        cfg = SplitConfig(seed_fraction=0.1, rng_seed=9)
        assert sample_seed_entities(g, range(0, 500, 2), cfg) == sample_seed_entities(g, range(0, 500, 2), cfg)
        other = SplitConfig(seed_fraction=0.1, rng_seed=10)
        assert sample_seed_entities(g, range(0, 500, 2), cfg) != sample_seed_entities(g, range(0, 500, 2), other)

    def test_aligned_order_irrelevant(self):
        g = build_graph((f"e{i}", "p", f"e{i + 1}") for i in range(100))
        cfg = SplitConfig(seed_fraction=0.2)
        assert sample_seed_entities(g, list(range(50)), cfg) == sample_seed_entities(g, list(reversed(range(50))), cfg)

    def test_empty_pool(self):
        with pytest.raises(ValueError):
            sample_seed_entities(build_graph([("a", "p", "b")]), [], SplitConfig())

    def test_aligned_entities(self):
        g = build_graph([("a", "p", "b"), ("b", "p", "c")])
        assert aligned_entities(g, SameAsMap.from_pairs([("b", "x"), ("q", "y")])) == {1}

    def test_uniform(self):
        # each of 20 entities drawn with p = 5/20 per trial; 2000 trials
        g = build_graph((f"e{i}", "p", f"e{i + 1}") for i in range(19))
        trials, k, n = 2000, 5, 20
        counts = np.zeros(n)
        for s in range(trials):
            for e in sample_seed_entities(g, range(n), SplitConfig(seed_fraction=k / n, rng_seed=s)):
                counts[e] += 1
        p = k / n
        sigma = math.sqrt(trials * p * (1 - p))
        assert np.all(np.abs(counts - trials * p) < 3 * sigma + 1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30), st.integers(0, 60), st.data())
def test_one_hop_matches_scan(seed, n_e, n_t, data):
    g = random_graph(np.random.default_rng(seed), n_e, 3, n_t)
    if not g.num_entities:
        return
    seeds = set(data.draw(st.lists(st.integers(0, g.num_entities - 1), max_size=5)))
    sub = one_hop_subgraph(g, seeds)
    names = {g.entities[s] for s in seeds}
    expected = {(h, r, t) for h, r, t in g.iter_iri_triples() if h in names or t in names}
    assert sub.triple_set() == expected


def test_one_hop_empty():
    assert len(one_hop_subgraph(build_graph([("a", "p", "b")]), [])) == 0


class TestProjection:
    def test_counterparts(self):
        m = SameAsMap.from_pairs([("a", "x"), ("b", "y"), ("b", "y2")])
        assert project_seeds({"a", "b"}, m) == {"x", "y", "y2"}
        assert project_seeds({"a", "b"}, m, target={"x", "y"}) == {"x", "y"}

    def test_dropped_seed_warns(self, caplog):
        m = SameAsMap.from_pairs([("a", "x")])
        with caplog.at_level("WARNING"):
            assert project_seeds({"a", "lonely"}, m) == {"x"}
        assert "1 seed" in caplog.text


class TestSplit:
    def test_ratio_and_partition(self, rng):
        g = exact_random_graph(rng, 30, 3, 500)
        sp = split_train_test(g, SplitConfig(test_ratio=0.2, rng_seed=1))
        assert len(sp.train) + len(sp.test) == 500
        assert not sp.train.triple_set() & sp.test.triple_set()
        assert sp.train.triple_set() | sp.test.triple_set() == g.triple_set()
        assert 0 < len(sp.test) <= 100
        assert closed(sp)

    def test_single_relation_occurrence_goes_to_train(self):
        rows = [(f"e{i}", "common", f"e{(i + 1) % 10}") for i in range(10)] + [("e0", "rare", "e5")]
        for seed in range(30):
            sp = split_train_test(build_graph(rows), SplitConfig(test_ratio=0.5, rng_seed=seed))
            assert ("e0", "rare", "e5") in sp.train.triple_set()

    def test_tiny_graph_all_train(self, caplog):
        g = build_graph([("a", "p", "b"), ("b", "p", "c")])
        with caplog.at_level("WARNING"):
            sp = split_train_test(g, SplitConfig())
        assert len(sp.train) == 2 and len(sp.test) == 0
        assert "everything goes to train" in caplog.text
        assert len(split_train_test(KnowledgeGraph(), SplitConfig()).train) == 0

    def test_deterministic(self, rng):
        g = exact_random_graph(rng, 30, 3, 300)
        a = split_train_test(g, SplitConfig(rng_seed=4))
        b = split_train_test(g, SplitConfig(rng_seed=4))
        assert a.train.same_as(b.train) and a.test.same_as(b.test)

    def test_manifest(self, rng):
        sp = split_train_test(exact_random_graph(rng, 20, 2, 100), SplitConfig())
        m = sp.manifest()
        assert m["train"]["num_triples"] + m["test"]["num_triples"] == 100

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 40), st.integers(1, 6), st.integers(3, 150), st.floats(0.05, 0.9))
    def test_closure_property(self, seed, n_e, n_r, n_t, ratio):
        g = random_graph(np.random.default_rng(seed), n_e, n_r, n_t)
        sp = split_train_test(g, SplitConfig(test_ratio=ratio, rng_seed=seed))
        assert closed(sp)
        assert sp.train.triple_set() | sp.test.triple_set() == g.triple_set()
