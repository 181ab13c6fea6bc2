"""Monte Carlo and exact-enumeration verification harness.

Standard errors use batch means: ``cfg.samples`` draws are split into
``cfg.batches`` equal batches, each drawn from its own substream seeded by
``derive_seed(cfg.seed, batch_index)``, so results do not depend on how
batches are scheduled across worker threads.

This module deliberately does not import the bound engine; it serves as
the independent side of the bound/oracle checks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, ModeError
from .models import Model, derive_seed
from .psd import DEFAULT_TOL, Tolerance

Estimator = Callable[[np.ndarray], np.ndarray]

# k in the "within k standard errors" checks
SIGMA_K = 4.0


@dataclass(frozen=True)
class McConfig:
    samples: int = 100_000
    seed: int = 0
    batches: int = 40
    workers: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise InvalidInputError("samples must be positive")
        if self.batches < 2:
            raise InvalidInputError("need at least 2 batches for a standard error")
        if self.samples % self.batches:
            raise InvalidInputError(
                f"samples ({self.samples}) must be divisible by batches ({self.batches})"
            )
        if self.workers < 1:
            raise InvalidInputError("workers must be positive")

    @property
    def batch_size(self) -> int:
        return self.samples // self.batches


@dataclass(frozen=True)
class McEstimate:
    value: np.ndarray
    std_err: np.ndarray
    samples_used: int

    def within(self, expected, k: float = SIGMA_K, rtol: float = 1e-12) -> bool:
        """Entrywise ``|value - expected| <= k * std_err``, plus ``rtol`` for round-off."""
        exp = np.asarray(expected, dtype=float)
        slack = k * self.std_err + rtol * (1.0 + np.abs(exp))
        return bool(np.all(np.abs(self.value - exp) <= slack))


def run_batches(cfg: McConfig, fn: Callable[[int, int], np.ndarray]) -> McEstimate:
    """Evaluate ``fn(batch_size, batch_seed)`` per batch and combine batch means."""
    seeds = [derive_seed(cfg.seed, b) for b in range(cfg.batches)]
    n = cfg.batch_size
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            means = list(pool.map(lambda s: fn(n, s), seeds))
    else:
        means = [fn(n, s) for s in seeds]
    stack = np.stack([np.asarray(m, dtype=float) for m in means])
    value = stack.mean(axis=0)
    std_err = stack.std(axis=0, ddof=1) / np.sqrt(cfg.batches)
    return McEstimate(value, std_err, cfg.samples)


def empirical_moment(model: Model, theta1, theta2, cfg: McConfig) -> McEstimate:
    """Batch-mean estimate of E_true[pi(theta1) pi(theta2)]."""
    t1, t2 = model.point(theta1), model.point(theta2)

    def batch(n, seed):
        x = model.sample(model.theta_true, n, seed).points
        return np.mean(np.exp(model.log_pi_batch(t1, x) + model.log_pi_batch(t2, x)))

    est = run_batches(cfg, batch)
    return McEstimate(float(est.value), float(est.std_err), est.samples_used)


def empirical_gram(model: Model, tau: Sequence, cfg: McConfig) -> McEstimate:
    """Batch-mean estimate of the likelihood-ratio Gram matrix E_true[beta beta^T]."""
    pts = [model.point(t) for t in tau]

    def batch(n, seed):
        x = model.sample(model.theta_true, n, seed).points
        beta = np.exp(model.log_pi_matrix(pts, x))
        return beta.T @ beta / n

    est = run_batches(cfg, batch)
    return McEstimate(0.5 * (est.value + est.value.T), est.std_err, est.samples_used)


def empirical_bias(estimator: Estimator, model: Model, theta, cfg: McConfig) -> McEstimate:
    """Mean of ``estimator(X) - g(theta)`` with X drawn from P_theta."""
    t = model.point(theta)
    g = model.target(t)

    def batch(n, seed):
        x = model.sample(t, n, seed).points
        return np.mean(_as_outputs(estimator(x), n), axis=0) - g

    return run_batches(cfg, batch)


def empirical_cov(estimator: Estimator, model: Model, cfg: McConfig) -> McEstimate:
    """Second moment of ``estimator(X) - g(theta_true)`` under P_true.

    Centered at the known g(theta_true), not at the empirical mean.
    """
    g0 = model.target(model.theta_true)

    def batch(n, seed):
        x = model.sample(model.theta_true, n, seed).points
        d = _as_outputs(estimator(x), n) - g0
        return d.T @ d / n

    est = run_batches(cfg, batch)
    return McEstimate(0.5 * (est.value + est.value.T), est.std_err, est.samples_used)


def _as_outputs(y, n: int) -> np.ndarray:
    out = np.asarray(y, dtype=float)
    return out.reshape(n, -1)


# --- exact counterparts on finite sample spaces -------------------------------


def _require_enumeration(model: Model):
    try:
        return model.support_arrays()
    except ModeError:
        raise ModeError(f"{model.name}: exact evaluation needs a finite support") from None


def exact_cov(estimator: Estimator, model: Model) -> np.ndarray:
    """Exact E_true[(psi - g0)(psi - g0)^T] by summing over the support."""
    xs, ps = _require_enumeration(model)
    d = _as_outputs(estimator(xs), len(ps)) - model.target(model.theta_true)
    cov = (d * ps[:, None]).T @ d
    return 0.5 * (cov + cov.T)


def exact_bias(estimator: Estimator, model: Model, theta) -> np.ndarray:
    """Exact E_theta[psi] - g(theta), weighting the true law by pi(theta)."""
    xs, ps = _require_enumeration(model)
    t = model.point(theta)
    w = ps * np.exp(model.log_pi_batch(t, xs))
    vals = _as_outputs(estimator(xs), len(ps))
    return w @ vals - model.target(t)


def exact_gram(model: Model, tau: Sequence) -> np.ndarray:
    xs, ps = _require_enumeration(model)
    beta = np.exp(model.log_pi_matrix(tau, xs))
    return (beta * ps[:, None]).T @ beta


class TableEstimator:
    """Estimator defined by its value table on a finite support."""

    def __init__(self, support: np.ndarray, table: np.ndarray):
        self.table = np.asarray(table, dtype=float)
        self._index = {tuple(row): i for i, row in enumerate(np.asarray(support))}

    def __call__(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        rows = np.atleast_2d(arr)
        try:
            idx = [self._index[tuple(r)] for r in rows]
        except KeyError as exc:
            raise InvalidInputError(f"sample {exc.args[0]} not in the support") from None
        out = self.table[idx]
        return out[0] if single else out


@dataclass(frozen=True)
class UnbiasedPolytope:
    """All estimators unbiased at the test points, on a finite support.

    Every solution is ``particular + null_basis @ C`` for a coefficient
    matrix ``C`` of shape ``(r, d_g)``. ``particular`` is the
    minimum-covariance solution.
    """

    support: np.ndarray
    probs: np.ndarray
    particular: np.ndarray
    null_basis: np.ndarray

    @property
    def dimension(self) -> int:
        return self.null_basis.shape[1]

    def table(self, coeffs=None) -> np.ndarray:
        if coeffs is None:
            return self.particular
        c = np.asarray(coeffs, dtype=float).reshape(self.dimension, -1)
        return self.particular + self.null_basis @ c

    def estimator(self, coeffs=None) -> TableEstimator:
        return TableEstimator(self.support, self.table(coeffs))


def exact_unbiased_polytope(model: Model, tau: Sequence, tol: Tolerance = DEFAULT_TOL,
                            feas_tol: float = 1e-9) -> UnbiasedPolytope | None:
    """Solve E_theta_i[psi] = g(theta_i) for every test point over the support.

    Returns ``None`` when the constraints are inconsistent (no estimator is
    unbiased at all test points).
    """
    xs, ps = _require_enumeration(model)
    pts = [model.point(t) for t in tau]
    # P[i, x] = P_theta_i(x)
    P = (np.exp(model.log_pi_matrix(pts, xs)) * ps[:, None]).T
    g0 = model.target(model.theta_true)
    H = np.array([model.target(t) for t in pts]) - g0

    # minimum E_true[phi^2] subject to P phi = h: substitute u = sqrt(p) * phi
    rcond = np.sqrt(tol.rank_eps)
    scaled = P / np.sqrt(ps)
    u = np.linalg.pinv(scaled, rcond=rcond) @ H
    phi = u / np.sqrt(ps)[:, None]
    resid = np.linalg.norm(P @ phi - H)
    if resid > feas_tol * (1.0 + np.linalg.norm(H)):
        return None

    _, s, vt = np.linalg.svd(P)
    rank = int(np.sum(s > rcond * s[0])) if s.size and s[0] > 0 else 0
    null_basis = vt[rank:].T
    return UnbiasedPolytope(xs, ps, g0 + phi, null_basis)


# --- convergence experiment ----------------------------------------------------


def gram_convergence_experiment(model: Model, tau: Sequence, ladder: Sequence[int],
                                seed: int = 0, replicates: int = 1,
                                method: str = "monte_carlo") -> list[tuple[int, float]]:
    """Distance ||B_hat_N - B||_F between empirical and exact Gram matrices.

    With ``replicates > 1`` the root-mean-square distance over independent
    replicates is reported at each rung. ``method="enumeration"`` replaces
    sampling by the exact support sum, giving distance zero up to round-off.
    """
    pts = [model.point(t) for t in tau]
    B = np.array([[model.moment(a, b) for b in pts] for a in pts])
    out = []
    for rung, N in enumerate(ladder):
        N = int(N)
        if method == "enumeration":
            out.append((N, float(np.linalg.norm(exact_gram(model, pts) - B))))
            continue
        sq = 0.0
        for r in range(replicates):
            x = model.sample(model.theta_true, N, derive_seed(seed, rung * replicates + r)).points
            beta = np.exp(model.log_pi_matrix(pts, x))
            sq += np.linalg.norm(beta.T @ beta / N - B) ** 2
        out.append((N, float(np.sqrt(sq / replicates))))
    return out


def loglog_slope(points: Sequence[tuple[int, float]]) -> float:
    """Least-squares slope of log(distance) against log(N)."""
    n = np.log([p[0] for p in points])
    d = np.log([p[1] for p in points])
    return float(np.polyfit(n, d, 1)[0])
