import math

import numpy as np
import pytest

from barankin.bounds import bound_V, compute_B, deflate_dependent
from barankin.errors import InvalidInputError, ModeError
from barankin.estimator import construct_estimator
from barankin.mc import (
    McConfig,
    empirical_bias,
    empirical_cov,
    empirical_gram,
    empirical_moment,
    exact_cov,
    exact_unbiased_polytope,
    gram_convergence_experiment,
    loglog_slope,
    run_batches,
)
from barankin.models import BernoulliN, GaussianMean
from barankin.psd import is_snnd

E = math.e
BIAS_HALF = (math.exp(0.5) - 1) / (E - 1) - 0.5  # psi* bias at theta = 0.5


class TestConfig:
    def test_divisibility(self):
        with pytest.raises(InvalidInputError):
            McConfig(samples=1001, batches=40)

    def test_batches(self):
        with pytest.raises(InvalidInputError):
            McConfig(samples=1000, batches=1)

    def test_batch_size(self):
        assert McConfig(samples=1000, batches=40).batch_size == 25

    def test_run_batches_reproducible(self):
        cfg = McConfig(samples=400, seed=3, batches=4)

        def fn(n, seed):
            return np.random.default_rng(seed).standard_normal(n).mean()

        a, b = run_batches(cfg, fn), run_batches(cfg, fn)
        assert a.value == b.value and a.std_err == b.std_err

    def test_workers_do_not_change_result(self):
        m = GaussianMean()
        a = empirical_moment(m, 0.5, 1.0, McConfig(40_000, 2, 40, workers=1))
        b = empirical_moment(m, 0.5, 1.0, McConfig(40_000, 2, 40, workers=4))
        assert a.value == b.value and a.std_err == b.std_err


class TestEmpiricalMoment:
    def test_gaussian(self):
        est = empirical_moment(GaussianMean(), 1.0, 1.0, McConfig(1_000_000, seed=1))
        assert est.within(E)
        assert est.samples_used == 1_000_000

    def test_true_point(self):
        est = empirical_moment(GaussianMean(), 0.0, 0.7, McConfig(100_000, seed=2))
        assert est.within(1.0)

    def test_bernoulli(self):
        est = empirical_moment(BernoulliN(), 0.75, 0.75, McConfig(100_000, seed=3))
        assert est.within(1.25)


class TestEmpiricalBias:
    def test_sample_mean_unbiased(self):
        m = GaussianMean(n=3)
        for i, t in enumerate((-1.0, 0.0, 0.4)):
            assert empirical_bias(m.sample_mean, m, t, McConfig(100_000, seed=i)).within(0.0)

    def test_constructed_off_span(self):
        m = GaussianMean()
        est = construct_estimator(m, compute_B(m, [0.0, 1.0]))
        b = empirical_bias(est, m, 0.5, McConfig(100_000, seed=4))
        assert b.within(BIAS_HALF)
        assert BIAS_HALF == pytest.approx(-0.12246, abs=1e-5)

    def test_constructed_on_span(self):
        m = GaussianMean()
        est = construct_estimator(m, compute_B(m, [0.0, 1.0]))
        assert empirical_bias(est, m, 1.0, McConfig(100_000, seed=5)).within(0.0)


class TestEmpiricalCov:
    def test_sample_mean(self):
        m = GaussianMean(n=5)
        c = empirical_cov(m.sample_mean, m, McConfig(100_000, seed=6))
        assert c.within(0.2)

    def test_constant(self):
        m = GaussianMean()
        est = construct_estimator(m, compute_B(m, [0.0]))
        c = empirical_cov(est, m, McConfig(10_000, seed=0))
        np.testing.assert_array_equal(c.value, [[0.0]])

    def test_bernoulli_psi_star(self):
        m = BernoulliN()
        est = construct_estimator(m, compute_B(m, [0.5, 0.75]))
        assert empirical_cov(est, m, McConfig(100_000, seed=7)).within(0.25)
        assert exact_cov(est, m)[0, 0] == pytest.approx(0.25, abs=1e-15)

    def test_dominates_bound(self):
        m = GaussianMean(n=5)
        rng = np.random.default_rng(0)
        cfg = McConfig(40_000, seed=1)
        c = empirical_cov(m.sample_mean, m, cfg)
        for _ in range(50):
            tau = np.concatenate([[0.0], rng.uniform(-1.5, 1.5, int(rng.integers(0, 5)))])
            _, red = deflate_dependent(compute_B(m, tau))
            V = bound_V(red).W
            lo = np.linalg.eigvalsh(c.value - V).min()
            assert lo >= -3 * c.std_err.max()

    def test_exact_needs_support(self):
        m = GaussianMean()
        with pytest.raises(ModeError):
            exact_cov(m.sample_mean, m)


class TestGram:
    def test_close_to_exact(self):
        m = GaussianMean()
        est = empirical_gram(m, [0.0, 1.0], McConfig(200_000, seed=8))
        assert np.all(np.abs(est.value - [[1.0, 1.0], [1.0, E]]) <= 4 * est.std_err + 1e-12)

    def test_convergence_decreasing(self):
        pts = gram_convergence_experiment(GaussianMean(), [0.0, 1.0], [1000, 10_000, 100_000],
                                          seed=3, replicates=5)
        d = [v for _, v in pts]
        assert d[0] > d[1] > d[2]

    def test_enumeration_zero(self):
        pts = gram_convergence_experiment(BernoulliN(), [0.5, 0.75], [10, 100],
                                          method="enumeration")
        assert all(v < 1e-15 for _, v in pts)

    def test_single_rung(self):
        pts = gram_convergence_experiment(GaussianMean(), [0.0, 1.0], [1000], seed=1)
        assert len(pts) == 1 and pts[0][0] == 1000

    def test_slope(self):
        assert loglog_slope([(10, 1.0), (1000, 0.1)]) == pytest.approx(-0.5)

    def test_psd_limit_of_estimates(self):
        from barankin.psd import psd_limit_check
        m = GaussianMean()
        seq = [empirical_gram(m, [0.0, 0.5], McConfig(n, seed=n)).value
               for n in (1000, 10_000, 100_000)]
        assert psd_limit_check(seq)


class TestPolytope:
    def test_unique_identity(self):
        m = BernoulliN()
        poly = exact_unbiased_polytope(m, [0.5, 0.75])
        assert poly.dimension == 0
        np.testing.assert_allclose(poly.table().ravel(), [0.0, 1.0], atol=1e-12)

    def test_square_infeasible(self):
        assert exact_unbiased_polytope(BernoulliN(target="square"), [0.25, 0.5, 0.75]) is None

    def test_true_point_only(self):
        m = BernoulliN(n=2)
        poly = exact_unbiased_polytope(m, [0.5])
        assert poly.dimension == 3
        np.testing.assert_allclose(poly.table().ravel(), 0.5, atol=1e-12)

    def test_members_are_unbiased_and_dominate(self):
        from barankin.mc import exact_bias
        m = BernoulliN(n=2)
        tau = [0.5, 0.3]
        poly = exact_unbiased_polytope(m, tau)
        V = bound_V(compute_B(m, tau)).W
        rng = np.random.default_rng(2)
        for _ in range(20):
            est = poly.estimator(rng.standard_normal(poly.dimension))
            for t in tau:
                assert abs(exact_bias(est, m, t)[0]) < 1e-12
            assert is_snnd(exact_cov(est, m) - V)
