import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dbst.errors import EmptySamples, MissingAleatoricHead
from dbst.nn import MLP, NetworkConfig
from dbst.uncertainty import (
    KENDALL_GAL,
    KWON,
    McPrediction,
    decompose,
    kendall_gal_variance,
    kwon_decompose,
    mc_sample,
    pseudo_label,
)

from oracles import kwon_trace


def _random_probs(rng, T, n, K):
    z = rng.normal(scale=2.0, size=(T, n, K))
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TestKwon:
    def test_certain(self):
        r = kwon_decompose(McPrediction(np.tile([0.0, 1.0, 0.0], (4, 1))))
        assert (r.aleatoric, r.epistemic, r.total) == (0.0, 0.0, 0.0)

    def test_two_samples(self):
        r = kwon_decompose(McPrediction([[0.6, 0.4], [0.8, 0.2]]))
        assert r.aleatoric == pytest.approx(0.40, abs=1e-12)
        assert r.epistemic == pytest.approx(0.02, abs=1e-12)
        assert r.total == pytest.approx(0.42, abs=1e-12)

    def test_uniform(self):
        for K in (2, 3, 10):
            r = kwon_decompose(McPrediction(np.full((5, K), 1 / K)))
            assert r.aleatoric == pytest.approx((K - 1) / K, abs=1e-12)
            assert r.epistemic == pytest.approx(0.0, abs=1e-15)

    def test_trace_oracle(self):
        rng = np.random.default_rng(0)
        probs = _random_probs(rng, 9, 40, 6)
        r = kwon_decompose(McPrediction(probs))
        for j in range(40):
            a, e = kwon_trace(probs[:, j, :].tolist())
            assert r.aleatoric[j] == pytest.approx(a, abs=1e-12)
            assert r.epistemic[j] == pytest.approx(e, abs=1e-12)

    def test_sample_order_irrelevant(self):
        rng = np.random.default_rng(1)
        probs = _random_probs(rng, 6, 5, 3)
        a = kwon_decompose(McPrediction(probs))
        b = kwon_decompose(McPrediction(probs[rng.permutation(6)]))
        np.testing.assert_allclose(a.total, b.total, atol=1e-14)

    def test_empty(self):
        with pytest.raises(EmptySamples):
            kwon_decompose(McPrediction(np.zeros((0, 3, 2))))

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, (4, 3), elements=st.floats(0.0, 1.0)))
    def test_non_negative(self, raw):
        raw = raw + 1e-9
        p = raw / raw.sum(axis=1, keepdims=True)
        r = kwon_decompose(McPrediction(p))
        assert r.aleatoric >= 0.0 and r.epistemic >= 0.0


class TestKendallGal:
    def test_reference(self):
        probs = [[0.6, 0.4], [0.8, 0.2]]
        r = kendall_gal_variance(McPrediction(probs, np.full(2, math.log(0.1))))
        assert r.total == pytest.approx(0.710864, abs=1e-6)
        assert r.aleatoric == pytest.approx(0.1, abs=1e-15)

    def test_certain(self):
        r = kendall_gal_variance(McPrediction(np.tile([1.0, 0.0], (3, 1)), np.full(3, -np.inf)))
        assert r.total == 0.0

    def test_max_entropy(self):
        r = kendall_gal_variance(McPrediction(np.full((3, 4), 0.25), np.full(3, -np.inf)))
        assert r.total == pytest.approx(math.log(4), abs=1e-12)

    def test_missing_head(self):
        with pytest.raises(MissingAleatoricHead):
            kendall_gal_variance(McPrediction([[0.5, 0.5]]))

    def test_headless_falls_back_to_entropy(self):
        r = decompose(McPrediction([[0.7, 0.3]]), KENDALL_GAL)
        assert r.aleatoric == 0.0 and r.total == pytest.approx(0.610864, abs=1e-6)


class TestPseudoLabel:
    def test_argmax(self):
        y, _ = pseudo_label(McPrediction([[0.1, 0.9]]), KWON)
        assert y == 1

    def test_tie_lowest(self):
        y, _ = pseudo_label(McPrediction([[0.5, 0.5]]), KWON)
        assert y == 0

    def test_batched_shapes(self):
        probs = _random_probs(np.random.default_rng(2), 5, 7, 3)
        y, tot = pseudo_label(McPrediction(probs, np.zeros((5, 7))), KENDALL_GAL)
        assert y.shape == (7,) and tot.shape == (7,)
        np.testing.assert_array_equal(y, probs.mean(axis=0).argmax(axis=1))


class TestSampling:
    def test_keep_one_identical(self):
        net = MLP(NetworkConfig(input_dim=3, num_classes=2, layer_widths=[4], keep_prob_input=1.0,
                                keep_prob_hidden=1.0), np.random.default_rng(0))
        mc = mc_sample(net, np.ones((2, 3)), 6, np.random.default_rng(1))
        assert np.all(mc.probs == mc.probs[0])

    def test_reproducible(self):
        net = MLP(NetworkConfig(input_dim=3, num_classes=2, layer_widths=[4], aleatoric_head=True),
                  np.random.default_rng(0))
        X = np.random.default_rng(3).normal(size=(5, 3))
        a = mc_sample(net, X, 8, np.random.default_rng(4))
        b = mc_sample(net, X, 8, np.random.default_rng(4))
        np.testing.assert_array_equal(a.probs, b.probs)
        np.testing.assert_array_equal(a.log_aleatoric, b.log_aleatoric)
        assert a.probs.shape == (8, 5, 2)

    def test_zero_samples(self):
        net = MLP(NetworkConfig(input_dim=3, num_classes=2), np.random.default_rng(0))
        with pytest.raises(EmptySamples):
            mc_sample(net, np.ones((1, 3)), 0, np.random.default_rng(0))
