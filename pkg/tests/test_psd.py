import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barankin.errors import DimensionError, InvalidInputError, RankDeficiencyError
from barankin.psd import (
    Order,
    Tolerance,
    as_sym,
    is_snnd,
    k_identity_dominates,
    lambda_max,
    loewner_compare,
    psd_limit_check,
    rayleigh_reduction,
    weighted_cauchy_schwarz,
)

TIGHT = Tolerance(psd_eps=1e-12)


def scalar_bound(t):
    # single test point t for N(theta, 1), theta_T = 0
    return t * t / math.expm1(t * t)


def random_psd(rng, n, rank=None):
    a = rng.standard_normal((n, rank or n))
    return a @ a.T


class TestIsSnnd:
    def test_identity(self):
        assert is_snnd(np.eye(3), TIGHT)

    def test_negative_eigenvalue(self):
        assert not is_snnd(np.diag([1.0, -1e-3]), TIGHT)

    def test_bernoulli_gram(self):
        assert is_snnd(np.array([[1.0, 1.0], [1.0, 1.25]]), TIGHT)

    def test_slack_is_relative(self):
        S = np.diag([1e6, -1e-4])
        assert is_snnd(S)
        assert not is_snnd(S, Tolerance(psd_eps=0.0))

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInputError):
            is_snnd(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            is_snnd(np.array([[np.nan]]))

    def test_rejects_non_square(self):
        with pytest.raises((DimensionError, InvalidInputError)):
            as_sym(np.ones((2, 3)))


class TestLoewnerCompare:
    def test_identity_vs_zero(self):
        assert loewner_compare(np.eye(2), np.zeros((2, 2))).relation is Order.GREATER_EQUAL

    def test_incomparable(self):
        v = loewner_compare(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        assert v.relation is Order.INCOMPARABLE
        assert v.witness == pytest.approx((-1.0, 1.0))

    def test_equal(self):
        X = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert loewner_compare(X, X + 1e-13).relation is Order.EQUAL

    def test_less_equal(self):
        assert loewner_compare(np.zeros((2, 2)), np.eye(2)).relation is Order.LESS_EQUAL

    def test_gaussian_scalar_bounds(self):
        w_half, w_one = scalar_bound(0.5), scalar_bound(1.0)
        assert w_one == pytest.approx(1 / (math.e - 1), rel=1e-14)
        assert w_half == pytest.approx(0.25 / math.expm1(0.25), rel=1e-14)
        assert abs(w_half - 0.8801) < 2e-4
        v = loewner_compare(np.array([[w_half]]), np.array([[w_one]]))
        assert v.relation is Order.GREATER_EQUAL

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            loewner_compare(np.eye(2), np.eye(3))


class TestLambdaMax:
    def test_diag(self):
        assert lambda_max(np.diag([3.0, 1.0, 2.0])) == pytest.approx(3.0, rel=1e-14)

    def test_two_by_two(self):
        assert lambda_max(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(3.0, rel=1e-14)

    def test_quadratic_formula(self):
        e = math.e
        B = np.array([[1.0, 1.0], [1.0, e]])
        tr, det = 1 + e, e - 1
        root = (tr + math.sqrt(tr * tr - 4 * det)) / 2
        assert lambda_max(B) == pytest.approx(root, rel=1e-12)


class TestKIdentity:
    def test_exact(self):
        assert k_identity_dominates(1.0, np.eye(4))

    def test_below(self):
        assert not k_identity_dominates(0.9, np.eye(4))

    def test_requires_snnd(self):
        with pytest.raises(InvalidInputError):
            k_identity_dominates(5.0, np.diag([1.0, -1.0]))

    def test_agrees_with_loewner(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            X = random_psd(rng, n, int(rng.integers(1, n + 1)))
            K = lambda_max(X) + 1e-6
            assert k_identity_dominates(K, X)
            assert loewner_compare(K * np.eye(n), X).dominates


class TestWeightedCauchySchwarz:
    def test_equal_rows(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((3, 3))
        H = random_psd(rng, 3) + np.eye(3)
        r = weighted_cauchy_schwarz(X, X, H)
        assert r.equality and r.gap_is_snnd
        np.testing.assert_allclose(r.lhs, r.rhs, rtol=1e-10, atol=1e-12)

    def test_orthogonal_rows(self):
        r = weighted_cauchy_schwarz([[1.0, 0.0]], [[0.0, 1.0]], np.eye(2))
        np.testing.assert_array_equal(r.rhs, [[0.0]])
        np.testing.assert_array_equal(r.lhs, [[1.0]])
        assert r.gap_is_snnd and not r.equality

    def test_singular_weight(self):
        with pytest.raises(RankDeficiencyError):
            weighted_cauchy_schwarz([[1.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]], np.eye(2))

    def test_random_gap(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            m = int(rng.integers(2, 7))
            X = rng.standard_normal((int(rng.integers(1, 4)), m))
            Y = rng.standard_normal((int(rng.integers(1, m + 1)), m))
            H = random_psd(rng, m) + 0.1 * np.eye(m)
            r = weighted_cauchy_schwarz(X, Y, H)
            assert r.gap_is_snnd
            # brute force
            gap = r.lhs - r.rhs
            assert np.linalg.eigvalsh(gap).min() >= -1e-9 * (1 + np.linalg.norm(r.lhs))


class TestRayleighReduction:
    def test_identity_compression(self):
        rng = np.random.default_rng(2)
        G = rng.standard_normal((2, 3))
        B = random_psd(rng, 3) + np.eye(3)
        r = rayleigh_reduction(G, B, np.eye(3))
        assert r.dominance.relation is Order.EQUAL
        np.testing.assert_allclose(r.V, r.W, rtol=1e-12)

    def test_selector_on_diagonal_B(self):
        G = np.array([[1.0, 2.0, 3.0]])
        b = np.array([2.0, 4.0, 8.0])
        r = rayleigh_reduction(G, np.diag(b), np.array([[1.0, 0.0, 0.0]]))
        assert r.W[0, 0] == pytest.approx(1.0 / 2.0, rel=1e-14)
        assert r.V[0, 0] == pytest.approx(1 / 2 + 4 / 4 + 9 / 8, rel=1e-14)
        assert r.dominance.relation is Order.GREATER_EQUAL

    def test_random_never_reversed(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            m = int(rng.integers(1, 6))
            G = rng.standard_normal((int(rng.integers(1, 4)), m))
            B = random_psd(rng, m) + 0.05 * np.eye(m)
            A = rng.standard_normal((int(rng.integers(1, m + 1)), m))
            r = rayleigh_reduction(G, B, A)
            assert r.dominance.relation in (Order.GREATER_EQUAL, Order.EQUAL)


class TestPsdLimit:
    def test_constant(self):
        assert psd_limit_check([np.eye(2)] * 5)

    def test_vanishing_entry(self):
        assert psd_limit_check([np.diag([1.0 / n, 1.0]) for n in range(1, 50)])

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            psd_limit_check([])


@st.composite
def psd_chain(draw):
    n = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    Z = random_psd(rng, n, int(rng.integers(1, n + 1)))
    Y = Z + random_psd(rng, n, int(rng.integers(1, n + 1)))
    X = Y + random_psd(rng, n, int(rng.integers(1, n + 1)))
    return X, Y, Z


@settings(max_examples=200, deadline=None)
@given(psd_chain())
def test_loewner_transitive(chain):
    X, Y, Z = chain
    assert loewner_compare(X, Y).dominates
    assert loewner_compare(Y, Z).dominates
    assert loewner_compare(X, Z).dominates


@settings(max_examples=200, deadline=None)
@given(psd_chain())
def test_loewner_antisymmetric(chain):
    X, Y, _ = chain
    v, w = loewner_compare(X, Y), loewner_compare(Y, X)
    if v.dominates and w.dominates:
        assert v.relation is Order.EQUAL
