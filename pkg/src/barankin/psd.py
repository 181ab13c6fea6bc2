"""Symmetric-matrix utilities and the Loewner partial order.

Every PSD decision in the package goes through this module so that a
single slack convention applies: an eigenvalue ``lam`` of a matrix ``S``
counts as non-negative when ``lam >= -psd_eps * (1 + ||S||_F)``. Rank
decisions use a relative singular-value cutoff instead of determinants,
which underflow for Gram matrices of nearly dependent likelihood ratios.

Matrices are plain ``numpy`` arrays. Functions never mutate their inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, InvalidInputError, RankDeficiencyError

ASYMMETRY_LIMIT = 1e-8


@dataclass(frozen=True)
class Tolerance:
    psd_eps: float = 1e-9
    rank_eps: float = 1e-10

    def __post_init__(self):
        if not (self.psd_eps >= 0 and self.rank_eps >= 0):
            raise InvalidInputError("tolerances must be non-negative")
        if not self.rank_eps < 1:
            raise InvalidInputError("rank_eps must be < 1")


DEFAULT_TOL = Tolerance()


class Order(str, enum.Enum):
    GREATER_EQUAL = "GreaterEqual"
    LESS_EQUAL = "LessEqual"
    EQUAL = "Equal"
    INCOMPARABLE = "Incomparable"


@dataclass(frozen=True)
class LoewnerVerdict:
    """Outcome of comparing X and Y; ``witness`` holds (min, max) eigenvalue of X - Y."""

    relation: Order
    witness: tuple[float, float]

    @property
    def dominates(self) -> bool:
        """True when X >= Y (including equality)."""
        return self.relation in (Order.GREATER_EQUAL, Order.EQUAL)

    @property
    def dominated(self) -> bool:
        return self.relation in (Order.LESS_EQUAL, Order.EQUAL)


def _finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{what} has non-finite entries")
    return a


def as_matrix(a, what: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    elif m.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {m.shape}")
    return _finite(m, what)


def as_sym(S, what: str = "matrix") -> np.ndarray:
    """Validate and symmetrize ``S`` as ``(S + S.T) / 2``.

    Asymmetry above ``1e-8`` relative to the Frobenius norm is rejected;
    anything below is absorbed by the symmetrization.
    """
    m = as_matrix(S, what)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {m.shape}")
    scale = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > ASYMMETRY_LIMIT * max(scale, 1.0):
        raise InvalidInputError(f"{what} is not symmetric")
    return 0.5 * (m + m.T)


def _slack(tol: Tolerance, *norms: float) -> float:
    return tol.psd_eps * (1.0 + max(norms))


def eig_extremes(S: np.ndarray) -> tuple[float, float]:
    w = np.linalg.eigvalsh(S)
    return float(w[0]), float(w[-1])


def is_snnd(S, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Symmetric non-negative definiteness with relative eigenvalue slack."""
    m = as_sym(S)
    lo, _ = eig_extremes(m)
    return lo >= -_slack(tol, np.linalg.norm(m))


def lambda_max(S) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    return eig_extremes(as_sym(S))[1]


def loewner_compare(X, Y, tol: Tolerance = DEFAULT_TOL) -> LoewnerVerdict:
    x = as_sym(X, "X")
    y = as_sym(Y, "Y")
    if x.shape != y.shape:
        raise DimensionError(f"cannot compare {x.shape} with {y.shape}")
    d = x - y
    lo, hi = eig_extremes(d)
    slack = _slack(tol, np.linalg.norm(x), np.linalg.norm(y))
    if np.linalg.norm(d) <= slack:
        rel = Order.EQUAL
    elif lo >= -slack:
        rel = Order.GREATER_EQUAL
    elif hi <= slack:
        rel = Order.LESS_EQUAL
    else:
        rel = Order.INCOMPARABLE
    return LoewnerVerdict(rel, (lo, hi))


def k_identity_dominates(K: float, X, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Whether ``K * I >= X``; for s.n.n.d. X this is ``K >= lambda_max(X)``."""
    x = as_sym(X, "X")
    if not is_snnd(x, tol):
        raise InvalidInputError("X must be symmetric non-negative definite")
    kI = float(K) * np.eye(x.shape[0])
    return loewner_compare(kI, x, tol).dominates


def check_invertible(C: np.ndarray, tol: Tolerance, what: str) -> float:
    """Raise RankDeficiencyError unless the s.n.n.d. matrix ``C`` is numerically nonsingular.

    ``C`` counts as nonsingular when every pivot of its Cholesky factor
    satisfies ``L_ii^2 > rank_eps * C_ii``, the same relative Schur
    complement rule deflation uses, so a deflated Gram matrix always
    passes. Returns the 2-norm condition number.
    """
    s = np.linalg.svd(C, compute_uv=False)
    d = np.diag(C)
    ok = s.size > 0 and s[0] > 0.0 and bool(np.all(d > 0.0))
    if ok:
        try:
            L = scipy.linalg.cholesky(C, lower=True)
            ok = bool(np.all(np.diag(L) ** 2 > tol.rank_eps * d))
        except np.linalg.LinAlgError:
            ok = False
    if not ok:
        raise RankDeficiencyError(
            f"{what} is numerically singular (singular values {s.tolist()})",
            singular_values=s,
        )
    return float(s[0] / s[-1]) if s[-1] > 0 else math.inf


def whiten(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Return ``Z`` with ``Z.T @ Z == R.T @ inv(C) @ R`` for s.p.d. ``C``.

    Uses the Cholesky factor so that the quadratic form comes out exactly
    symmetric and non-negative; falls back to an eigendecomposition when
    round-off breaks positive definiteness.
    """
    try:
        L = scipy.linalg.cholesky(C, lower=True)
        return scipy.linalg.solve_triangular(L, R, lower=True)
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(C)
        w = np.clip(w, w[-1] * np.finfo(float).eps, None)
        return (Q / np.sqrt(w)).T @ R


def quad_inverse(F: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``F @ inv(C) @ F.T`` for s.p.d. ``C``, returned exactly symmetric."""
    Z = whiten(C, F.T)
    out = Z.T @ Z
    return 0.5 * (out + out.T)


class CauchySchwarzResult(NamedTuple):
    lhs: np.ndarray
    rhs: np.ndarray
    gap_is_snnd: bool
    equality: bool


def weighted_cauchy_schwarz(X, Y, H, tol: Tolerance = DEFAULT_TOL) -> CauchySchwarzResult:
    """Weighted matrix Cauchy-Schwarz inequality.

    ``X H X^T >= X H Y^T (Y H Y^T)^-1 Y H X^T`` for s.p.d. ``H``, with
    equality iff ``X = Lambda Y`` for some ``Lambda``.
    """
    x = as_matrix(X, "X")
    y = as_matrix(Y, "Y")
    h = as_sym(H, "H")
    if x.shape[1] != h.shape[0] or y.shape[1] != h.shape[0]:
        raise DimensionError(
            f"X {x.shape}, Y {y.shape} and H {h.shape} do not conform"
        )
    yhy = as_sym(y @ h @ y.T, "Y H Y^T")
    check_invertible(yhy, tol, "Y H Y^T")
    xhy = x @ h @ y.T
    lhs = as_sym(x @ h @ x.T)
    rhs = quad_inverse(xhy, yhy)
    proj = np.linalg.solve(yhy, xhy.T).T @ y
    equality = np.linalg.norm(x - proj) <= tol.psd_eps * (1.0 + np.linalg.norm(x))
    return CauchySchwarzResult(lhs, rhs, loewner_compare(lhs, rhs, tol).dominates, bool(equality))


class RayleighResult(NamedTuple):
    V: np.ndarray
    W: np.ndarray
    dominance: LoewnerVerdict


def rayleigh_reduction(G, B, A, tol: Tolerance = DEFAULT_TOL) -> RayleighResult:
    """Compare ``G B^-1 G^T`` with its A-compressed version ``G A^T (A B A^T)^-1 A G^T``."""
    g = as_matrix(G, "G")
    b = as_sym(B, "B")
    a = as_matrix(A, "A")
    if g.shape[1] != b.shape[0] or a.shape[1] != b.shape[0]:
        raise DimensionError(f"G {g.shape}, B {b.shape} and A {a.shape} do not conform")
    check_invertible(b, tol, "B")
    aba = as_sym(a @ b @ a.T, "A B A^T")
    check_invertible(aba, tol, "A B A^T")
    V = quad_inverse(g, b)
    W = quad_inverse(g @ a.T, aba)
    return RayleighResult(V, W, loewner_compare(V, W, tol))


def psd_limit_check(seq: Sequence, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Check that the limit proxy (last element) of a PSD sequence is s.n.n.d."""
    if len(seq) == 0:
        raise InvalidInputError("empty sequence")
    mats = [as_sym(s) for s in seq]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise DimensionError("sequence elements differ in dimension")
    return is_snnd(mats[-1], tol)
