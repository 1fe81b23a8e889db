import math

import numpy as np
import pytest

from dbst.errors import ClassOutOfRange, EmptyClass, NonPositiveWeight, NotNormalized
from dbst.losses import (
    aleatoric_mc_nll,
    aleatoric_mc_nll_grad,
    class_weighted_ce,
    class_weights,
    entropy,
    nll,
    penalized_nll,
    training_objective,
    weighted_penalized_loss,
    weighted_penalized_loss_grad,
)

from oracles import aleatoric_mc_expectation


class TestNll:
    def test_uniform(self):
        assert nll(np.zeros(10), 3) == pytest.approx(math.log(10), abs=1e-12)

    def test_two_class(self):
        assert nll([2.0, 0.0], 0) == pytest.approx(0.126928, abs=1e-6)
        assert nll([2.0, 0.0], 0) == pytest.approx(math.log1p(math.exp(-2)), abs=1e-15)

    def test_no_overflow(self):
        with np.errstate(over="raise", invalid="raise"):
            v = nll([1000.0, 0.0], 0)
        assert v == 0.0
        assert nll([1000.0, 0.0], 1) == pytest.approx(1000.0)

    def test_class_range(self):
        with pytest.raises(ClassOutOfRange):
            nll([0.0, 0.0], 2)


class TestEntropy:
    def test_one_hot(self):
        assert entropy([0.0, 1.0, 0.0]) == 0.0

    def test_uniform(self):
        for K in (2, 5, 10):
            assert entropy(np.full(K, 1 / K)) == pytest.approx(math.log(K), abs=1e-12)

    def test_reference(self):
        assert entropy([0.7, 0.3]) == pytest.approx(0.610864, abs=1e-6)

    def test_not_normalized(self):
        with pytest.raises(NotNormalized):
            entropy([0.5, 0.6])
        with pytest.raises(NotNormalized):
            entropy([1.2, -0.2])


class TestPenalized:
    def test_beta_zero(self):
        z = np.array([0.3, -1.2, 2.0])
        assert penalized_nll(z, 1, 0.0) == nll(z, 1)

    def test_uniform_cancels(self):
        assert penalized_nll([0.0, 0.0], 0, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_batch_mean(self):
        z = np.random.default_rng(0).normal(size=(6, 4))
        y = np.array([0, 1, 2, 3, 0, 1])
        want = np.mean([nll(z[i], y[i]) for i in range(6)])
        assert weighted_penalized_loss(z, y, np.ones(6), 0.0) == pytest.approx(want, rel=1e-13)

    def test_weight_linearity(self):
        z = np.array([[1.0, -0.5], [0.2, 0.9]])
        got = weighted_penalized_loss(z, [0, 1], [2.0, 0.0], 0.0)
        assert got == pytest.approx(nll(z[0], 0), rel=1e-13)

    def test_zero_weight_keeps_entropy(self):
        z = np.array([[1.0, -0.5], [0.2, 0.9]])
        p1 = np.exp(z[1]) / np.exp(z[1]).sum()
        got = weighted_penalized_loss(z, [0, 1], [2.0, 0.0], 1.0)
        want = (2 * nll(z[0], 0) - entropy(np.exp(z[0]) / np.exp(z[0]).sum()) - entropy(p1)) / 2
        assert got == pytest.approx(want, rel=1e-12)

    def test_weights_validated(self):
        with pytest.raises(NonPositiveWeight):
            weighted_penalized_loss(np.zeros((2, 2)), [0, 1], [1.0, -1.0], 0.0)
        with pytest.raises(NonPositiveWeight):
            weighted_penalized_loss(np.zeros((2, 2)), [0, 1], [0.0, 0.0], 0.0)

    @pytest.mark.parametrize("beta", [0.0, 0.7])
    def test_gradient(self, beta):
        rng = np.random.default_rng(1)
        z, y, w = rng.normal(size=(4, 3)), np.array([0, 2, 1, 1]), rng.uniform(0.1, 2, 4)
        _, g = weighted_penalized_loss_grad(z, y, w, beta)
        h = 1e-6
        for i in range(4):
            for k in range(3):
                zp, zm = z.copy(), z.copy()
                zp[i, k] += h
                zm[i, k] -= h
                fd = (weighted_penalized_loss(zp, y, w, beta) - weighted_penalized_loss(zm, y, w, beta)) / (2 * h)
                assert g[i, k] == pytest.approx(fd, abs=1e-8)


class TestClassWeights:
    def test_ratio(self):
        np.testing.assert_allclose(class_weights([100, 50]), [1.0, 2.0])
        np.testing.assert_allclose(class_weights([7, 7, 7]), [1.0, 1.0, 1.0])

    def test_imbalanced_counts(self):
        w = class_weights([645, 315])
        assert w[0] == 1.0
        assert w[1] == pytest.approx(2.047619, abs=1e-6)

    def test_empty_class(self):
        with pytest.raises(EmptyClass):
            class_weights([4, 0])

    def test_ones_is_mean_nll(self):
        z = np.array([[0.5, 0.1], [-0.3, 0.8]])
        assert class_weighted_ce(z, [0, 1], [1.0, 1.0]) == pytest.approx((nll(z[0], 0) + nll(z[1], 1)) / 2)

    def test_scaling(self):
        z = np.array([[0.5, 0.1, 2.0]])
        assert class_weighted_ce(z, [2], [1.0, 1.0, 3.0]) == pytest.approx(3 * nll(z[0], 2))

    def test_mixture(self):
        # both samples have the same nll v
        z = np.array([[1.0, 0.0], [0.0, 1.0]])
        v = nll(z[0], 0)
        assert class_weighted_ce(z, [0, 1], [1.0, 2.0]) == pytest.approx(1.5 * v, rel=1e-14)


class TestAleatoric:
    def test_zero_noise(self):
        z = np.array([0.4, -1.0, 2.2])
        for T in (1, 7):
            got = aleatoric_mc_nll(z, -np.inf, 1, T, rng=np.random.default_rng(0))
            assert got == pytest.approx(nll(z, 1), rel=1e-13)

    def test_forced_zero_eps(self):
        z = np.array([0.4, -1.0])
        assert aleatoric_mc_nll(z, 0.0, 0, 1, eps=np.zeros((1, 2))) == pytest.approx(nll(z, 0), rel=1e-14)

    def test_mc_oracle(self):
        T = 100_000
        got = aleatoric_mc_nll([2.0, 0.0], math.log(1.0), 0, T, rng=np.random.default_rng(11))
        mean, se = aleatoric_mc_expectation([2.0, 0.0], 1.0, 0, T, seed=5)
        # delta method: se of -log(mean) is se / mean; both estimates carry noise
        assert abs(got - (-math.log(mean))) < 3 * math.sqrt(2) * se / mean

    def test_gradient(self):
        rng = np.random.default_rng(2)
        z, s, y = rng.normal(size=(3, 4)), rng.normal(-0.5, 0.3, 3), np.array([1, 0, 3])
        eps = rng.standard_normal((5, 3, 4))
        _, dz, ds = aleatoric_mc_nll_grad(z, s, y, 5, eps=eps)

        def f(zz, ss):
            return aleatoric_mc_nll_grad(zz, ss, y, 5, eps=eps)[0]

        h = 1e-6
        for i in range(3):
            sp, sm = s.copy(), s.copy()
            sp[i] += h
            sm[i] -= h
            assert ds[i] == pytest.approx((f(z, sp) - f(z, sm)) / (2 * h), abs=1e-8)
            for k in range(4):
                zp, zm = z.copy(), z.copy()
                zp[i, k] += h
                zm[i, k] -= h
                assert dz[i, k] == pytest.approx((f(zp, s) - f(zm, s)) / (2 * h), abs=1e-8)

    def test_objective_without_head(self):
        z = np.array([[1.0, 0.0]])
        v, dz, ds = training_objective(z, [0], [1.0], 0.0)
        assert ds is None and v == pytest.approx(nll(z[0], 0))
