"""Barankin moment matrices, covariance lower bounds and their diagnostics.

For test points ``tau = (theta_1, ..., theta_M)`` the bound engine forms

* ``G``: columns ``g(theta_i) - g(theta_true)`` (``d_g x M``),
* ``B``: Gram matrix ``E_true[pi(theta_i) pi(theta_j)]`` (``M x M``),

and from them the lower bounds ``V = G B^-1 G^T`` and, for a full-row-rank
compression ``A``, ``W = G A^T (A B A^T)^-1 A G^T``. Any unbiased estimator
with finite covariance at the true parameter has covariance >= W in the
Loewner order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DiagnosticsError,
    DimensionError,
    DomainError,
    InvalidInputError,
    ModeError,
    RankDeficiencyError,
)
from .mc import McConfig, empirical_gram
from .models import CLOSED_FORM, ENUMERATION, MONTE_CARLO, MOMENT_MODES, Model
from .psd import (
    DEFAULT_TOL,
    Tolerance,
    as_matrix,
    check_invertible,
    lambda_max,
    quad_inverse,
)

MIN_MC_SAMPLES = 1000


def as_tau(model: Model, tau) -> np.ndarray:
    """Normalize test points to an ``(M, k)`` array, validating each point."""
    arr = np.asarray(tau, dtype=float)
    k = model.param_dim
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if k == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != k or arr.shape[0] < 1:
        raise DimensionError(f"test points must form an (M, {k}) array with M >= 1, got {arr.shape}")
    return np.array([model.point(t) for t in arr])


@dataclass(frozen=True)
class MomentMatrices:
    G: np.ndarray
    B: np.ndarray
    tau: np.ndarray
    method: str
    mc_std_err: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.B.shape[0]

    def subset(self, idx: Sequence[int]) -> "MomentMatrices":
        idx = list(idx)
        se = None if self.mc_std_err is None else self.mc_std_err[np.ix_(idx, idx)]
        return replace(self, G=self.G[:, idx], B=self.B[np.ix_(idx, idx)],
                       tau=self.tau[idx], mc_std_err=se)


@dataclass(frozen=True)
class BoundMatrix:
    W: np.ndarray
    tau: np.ndarray
    a_matrix: np.ndarray | None
    condition_number: float
    in_C_A: bool = True

    @property
    def trace(self) -> float:
        return float(np.trace(self.W))

    @property
    def lambda_max(self) -> float:
        return lambda_max(self.W)


def compute_G(model: Model, tau) -> np.ndarray:
    pts = as_tau(model, tau)
    return np.column_stack([model.h(t) for t in pts])


def compute_B(model: Model, tau, method: str | None = None, mc_samples: int = 100_000,
              seed: int = 0, batches: int = 40, tol: Tolerance = DEFAULT_TOL) -> MomentMatrices:
    """Moment matrices for ``tau``; B exactly, or by Monte Carlo with std errors."""
    method = method or model.moment_mode
    if method not in MOMENT_MODES:
        raise InvalidInputError(f"unknown moment method {method!r}")
    pts = as_tau(model, tau)
    G = compute_G(model, pts)
    if method == MONTE_CARLO:
        if mc_samples < MIN_MC_SAMPLES:
            raise InvalidInputError(f"monte_carlo needs at least {MIN_MC_SAMPLES} samples")
        est = empirical_gram(model, pts, McConfig(mc_samples, seed, batches))
        B, se = est.value, est.std_err
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(se))):
            raise DiagnosticsError("Monte Carlo Gram matrix overflowed; likelihood ratios too heavy-tailed")
        B = _project_psd(B, se)
        return MomentMatrices(G, B, pts, method, se)
    if method != model.moment_mode:
        raise ModeError(
            f"{model.name} provides {model.moment_mode!r} moments, not {method!r}"
        )
    M = len(pts)
    B = np.empty((M, M))
    for i in range(M):
        for j in range(i, M):
            B[i, j] = B[j, i] = model.moment(pts[i], pts[j])
    return MomentMatrices(G, B, pts, method)


def _project_psd(B: np.ndarray, se: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh(B)
    if w[0] >= 0.0:
        return B
    if w[0] > -3.0 * float(np.max(se)):
        out = (Q * np.clip(w, 0.0, None)) @ Q.T
        return 0.5 * (out + out.T)
    raise DiagnosticsError(
        f"Monte Carlo Gram matrix has eigenvalue {w[0]:.3g}, beyond 3 standard errors"
    )


def _a_matrix(mm: MomentMatrices, A) -> np.ndarray:
    if A is None:
        return np.eye(mm.size)
    a = as_matrix(A, "A")
    if a.shape[1] != mm.size:
        raise DimensionError(f"A has {a.shape[1]} columns, expected {mm.size}")
    return a


def bound_V(mm: MomentMatrices, tol: Tolerance = DEFAULT_TOL) -> BoundMatrix:
    """``V = G B^-1 G^T``; B must be nonsingular (deflate first if not)."""
    try:
        cond = check_invertible(mm.B, tol, "B(tau)")
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(
            f"{exc}; remove dependent test points with deflate_dependent",
            singular_values=exc.singular_values,
        ) from None
    return BoundMatrix(quad_inverse(mm.G, mm.B), mm.tau, None, cond)


def bound_W(mm: MomentMatrices, A, tol: Tolerance = DEFAULT_TOL) -> BoundMatrix:
    """``W = G A^T (A B A^T)^-1 A G^T`` for a compression ``A`` (``d_A x M``)."""
    a = _a_matrix(mm, A)
    aba = a @ mm.B @ a.T
    aba = 0.5 * (aba + aba.T)
    cond = check_invertible(aba, tol, "A B(tau) A^T")
    return BoundMatrix(quad_inverse(mm.G @ a.T, aba), mm.tau, a, cond)


def lambda0(mm: MomentMatrices, A=None, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Coefficient matrix ``G A^T (A B A^T)^-1`` of the bound-attaining combination."""
    a = _a_matrix(mm, A)
    aba = a @ mm.B @ a.T
    aba = 0.5 * (aba + aba.T)
    check_invertible(aba, tol, "A B(tau) A^T")
    rhs = (mm.G @ a.T).T
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(aba, lower=True), rhs).T
    except np.linalg.LinAlgError:
        return scipy.linalg.solve(aba, rhs, assume_a="sym").T


class Relation(NamedTuple):
    """``coeffs @ beta(tau) == 0`` holds (numerically) with ``coeffs[index] == 1``."""

    index: int
    coeffs: np.ndarray


def _greedy_independent(B: np.ndarray, tol: Tolerance) -> tuple[list[int], list[Relation]]:
    """Left-to-right elimination via an incrementally grown Cholesky factor.

    Index i is kept iff its Schur complement over the kept set exceeds
    ``rank_eps * B_ii``. Dependent indices come back with the linear
    relation expressing them through the earlier kept ones.
    """
    M = B.shape[0]
    kept = [0]
    L = np.array([[np.sqrt(B[0, 0])]])
    relations = []
    for i in range(1, M):
        b = B[kept, i]
        l = scipy.linalg.solve_triangular(L, b, lower=True)
        schur = B[i, i] - l @ l
        if schur > tol.rank_eps * B[i, i]:
            n = len(kept)
            L2 = np.zeros((n + 1, n + 1))
            L2[:n, :n] = L
            L2[n, :n] = l
            L2[n, n] = np.sqrt(schur)
            L = L2
            kept.append(i)
        else:
            c = scipy.linalg.solve_triangular(L.T, l, lower=False)
            a = np.zeros(M)
            a[i] = 1.0
            a[kept] = -c
            relations.append(Relation(i, a))
    return kept, relations


class Deflation(NamedTuple):
    kept: list[int]
    reduced: MomentMatrices


def deflate_dependent(mm: MomentMatrices, tol: Tolerance = DEFAULT_TOL) -> Deflation:
    """Drop test points whose likelihood ratio depends linearly on earlier ones."""
    kept, _ = _greedy_independent(mm.B, tol)
    return Deflation(kept, mm.subset(kept))


class Compatibility(NamedTuple):
    compatible: bool
    witness: np.ndarray | None


def b0_compatibility_check(mm: MomentMatrices, tol: Tolerance = DEFAULT_TOL) -> Compatibility:
    """Check that every vanishing combination of likelihood ratios annihilates G.

    The null vectors tested are the elimination relations of
    :func:`deflate_dependent`, which span the numerical null space of B.
    The witness, if any, is scaled so that its deflated coefficient is 1.
    """
    _, relations = _greedy_independent(mm.B, tol)
    gnorm = np.linalg.norm(mm.G)
    for rel in relations:
        if np.linalg.norm(mm.G @ rel.coeffs) > tol.psd_eps * gnorm * np.linalg.norm(rel.coeffs):
            return Compatibility(False, rel.coeffs)
    return Compatibility(True, None)


def crb_test_points(model: Model, eps: float) -> np.ndarray:
    """``theta_true`` followed by one forward step of size eps per coordinate.

    A coordinate whose forward step leaves the domain steps backwards instead.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    t0 = model.theta_true
    pts = [t0]
    for j in range(model.param_dim):
        e = np.zeros_like(t0)
        e[j] = eps
        for cand in (t0 + e, t0 - e):
            if model.in_domain(cand):
                pts.append(cand)
                break
        else:
            raise DomainError(f"step eps={eps:g} leaves the domain in coordinate {j}")
    return np.array(pts)


def crb_limit(model: Model, eps: float = 1e-3, method: str | None = None,
              tol: Tolerance = DEFAULT_TOL, **mc_kw) -> np.ndarray:
    """Bound on test points collapsing onto theta_true; tends to the Cramer-Rao matrix as eps -> 0."""
    mm = compute_B(model, crb_test_points(model, eps), method, tol=tol, **mc_kw)
    return bound_V(mm, tol).W
