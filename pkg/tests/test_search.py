import numpy as np
import pytest

from barankin.bounds import bound_V, compute_B
from barankin.models import BernoulliN, ExponentialRate, GaussianMean
from barankin.search import Boundedness, SearchConfig, grid_points, search_msup

ODDS_POINTS = tuple((1 - 2.0 ** -k,) for k in range(1, 21))


def traces(report):
    return [s.trace for s in report.iterations]


class TestGaussian:
    def test_reaches_cramer_rao(self):
        rep = search_msup(GaussianMean(n=5), SearchConfig(grid_lo=(-2,), grid_hi=(2,), grid_num=(41,)))
        assert rep.boundedness is Boundedness.BOUNDED_EVIDENCE
        assert rep.best.trace == pytest.approx(0.2, rel=0.01)
        assert rep.compatible

    def test_trace_non_decreasing(self):
        rep = search_msup(GaussianMean(n=2), SearchConfig(grid_lo=(-1,), grid_hi=(1,), grid_num=(9,),
                                                          seed=3))
        t = traces(rep)
        assert all(b >= a for a, b in zip(t, t[1:]))
        assert rep.check_k_witness()

    def test_steps_match_direct_bound(self):
        m = GaussianMean(n=2)
        rep = search_msup(m, SearchConfig(candidates=((0.5,), (-0.7,)), local_proposals=0))
        for step in rep.iterations:
            assert step.trace == pytest.approx(bound_V(compute_B(m, step.tau)).trace, rel=1e-9)

    def test_budget_zero(self):
        rep = search_msup(GaussianMean(), SearchConfig(budget=0))
        assert rep.boundedness is Boundedness.INCONCLUSIVE
        assert len(rep.iterations) == 1
        assert rep.best.W[0, 0] == 0.0
        assert rep.notes

    def test_monte_carlo_moments(self):
        rep = search_msup(GaussianMean(n=5), SearchConfig(candidates=((0.3,), (-0.3,)), budget=5,
                                                          method="monte_carlo", mc_samples=20_000))
        assert 0.0 < rep.best.trace < 0.3


class TestBernoulli:
    def test_identity_converges(self):
        rep = search_msup(BernoulliN(), SearchConfig(grid_lo=(0.05,), grid_hi=(0.95,), grid_num=(19,)))
        assert rep.best.trace == pytest.approx(0.25, rel=1e-9)
        assert rep.boundedness is Boundedness.BOUNDED_EVIDENCE

    def test_odds_diverges(self):
        rep = search_msup(BernoulliN(target="odds"),
                          SearchConfig(candidates=ODDS_POINTS, local_proposals=0))
        assert rep.boundedness is Boundedness.DIVERGENCE_DETECTED
        assert rep.best.lambda_max > 1e3

    def test_square_incompatible(self):
        rep = search_msup(BernoulliN(target="square"),
                          SearchConfig(candidates=((0.25,), (0.75,)), local_proposals=0))
        assert not rep.compatible
        assert rep.witness is not None


class TestPruning:
    def test_exponential_postulate_pruned(self):
        m = ExponentialRate(rate_true=1.0)
        rep = search_msup(m, SearchConfig(candidates=((0.3,), (1.5,), (2.0,)), local_proposals=0,
                                          divergence_threshold=1e6))
        assert any(np.allclose(p, [0.3]) for p, _ in rep.pruned)
        assert all(np.all(step.tau > 0.5) for step in rep.iterations)


class TestDeterminism:
    def test_parallel_matches_serial(self):
        m = GaussianMean(n=3)
        base = dict(grid_lo=(-1,), grid_hi=(1,), grid_num=(21,), seed=5)
        a = search_msup(m, SearchConfig(workers=1, **base))
        b = search_msup(m, SearchConfig(workers=4, **base))
        assert traces(a) == traces(b)
        np.testing.assert_array_equal(a.best.tau, b.best.tau)


def test_grid_respects_domain():
    pts = grid_points(BernoulliN(), SearchConfig(grid_lo=(-0.5,), grid_hi=(1.5,), grid_num=(5,)))
    assert np.all((pts >= 0) & (pts <= 1))
