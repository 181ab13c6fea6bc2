"""Greedy search for the tightest (matrix-supreme) Barankin bound.

Starting from ``tau = (theta_true,)`` each round scores every candidate
point (a fixed grid plus random local proposals around accepted points)
by ``trace(V)`` of the enlarged test set, and accepts the best one if it
raises the trace. Because the enlarged set contains the old one, V can
only grow in the Loewner order, so the accepted trace sequence is
non-decreasing.

Candidates are scored with a rank-one update of V: for a new point c with
moment column ``b`` and Schur complement ``s = b_cc - b^T B^-1 b``,

    V(tau + c) = V(tau) + r r^T / s,   r = h(c) - G B^-1 b.

A candidate with ``s`` below the rank cutoff is linearly dependent on
``tau``; if its ``r`` is nonzero the target is incompatible with the
model (no unbiased estimator exists) and the report says so.
"""

from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .bounds import (
    BoundMatrix,
    MomentMatrices,
    as_tau,
    bound_V,
    compute_B,
    compute_G,
    crb_limit,
    deflate_dependent,
)
from .errors import BarankinError, DiagnosticsError, DomainError, PostulateViolationError
from .models import MONTE_CARLO, Model, make_rng
from .psd import DEFAULT_TOL, Tolerance, k_identity_dominates


class Boundedness(str, enum.Enum):
    BOUNDED_EVIDENCE = "BoundedEvidence"
    DIVERGENCE_DETECTED = "DivergenceDetected"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SearchConfig:
    """Search settings.

    ``candidates`` (explicit points) and the product grid
    ``grid_lo``/``grid_hi``/``grid_num`` may be combined; at least one
    candidate source (including local proposals) should be present.
    ``divergence_threshold=None`` means ``1e3 * trace(crb_limit(eps=crb_eps))``.
    A candidate whose relative Schur complement against the current test
    set is below ``separation_tol`` is skipped as too close to it: such
    points add almost nothing and make B(tau) ill-conditioned.
    """

    candidates: tuple = ()
    grid_lo: tuple = ()
    grid_hi: tuple = ()
    grid_num: tuple = ()
    budget: int = 50
    stall_tol: float = 1e-4
    patience: int = 3
    divergence_threshold: float | None = None
    local_proposals: int = 8
    local_scale: float = 0.1
    seed: int = 0
    method: str | None = None
    mc_samples: int = 100_000
    workers: int = 1
    crb_eps: float = 1e-3
    separation_tol: float = 1e-6


@dataclass(frozen=True)
class SearchStep:
    tau: np.ndarray
    trace: float
    lambda_max: float
    new_point: np.ndarray | None
    W: np.ndarray


@dataclass
class SearchReport:
    iterations: list[SearchStep]
    best: BoundMatrix
    boundedness: Boundedness
    K_witness: float
    divergence_threshold: float
    compatible: bool = True
    witness: np.ndarray | None = None
    witness_tau: np.ndarray | None = None
    pruned: list[tuple[np.ndarray, str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def check_k_witness(self, tol: Tolerance = DEFAULT_TOL) -> bool:
        """Every visited bound is dominated by ``K_witness * I``."""
        return all(k_identity_dominates(self.K_witness, step.W, tol) for step in self.iterations)


def grid_points(model: Model, cfg: SearchConfig) -> np.ndarray:
    pts = []
    if len(cfg.candidates):
        pts.extend(as_tau(model, cfg.candidates))
    if len(cfg.grid_num):
        k = model.param_dim
        lo = np.broadcast_to(np.asarray(cfg.grid_lo, float), (k,))
        hi = np.broadcast_to(np.asarray(cfg.grid_hi, float), (k,))
        num = np.broadcast_to(np.asarray(cfg.grid_num, int), (k,))
        axes = [np.linspace(a, b, n) for a, b, n in zip(lo, hi, num)]
        for p in itertools.product(*axes):
            p = np.array(p)
            if model.in_domain(p):
                pts.append(p)
    return np.array(pts).reshape(-1, model.param_dim)


def _local_proposals(model: Model, tau: np.ndarray, cfg: SearchConfig, rnd: int) -> np.ndarray:
    if cfg.local_proposals <= 0:
        return np.empty((0, model.param_dim))
    rng = make_rng(cfg.seed, rnd)
    lo = np.array([d[0] for d in model.domain])
    hi = np.array([d[1] for d in model.domain])
    out = []
    for _ in range(cfg.local_proposals):
        center = tau[rng.integers(len(tau))]
        scale = cfg.local_scale * 10.0 ** (-3.0 * rng.random())
        out.append(np.clip(center + scale * rng.standard_normal(model.param_dim), lo, hi))
    return np.array(out)


class _MomentSource:
    """Pairwise moments, exact or from one shared Monte Carlo sample (common random numbers)."""

    def __init__(self, model: Model, method: str | None, samples: int, seed: int):
        self.model = model
        self.mc = (method or model.moment_mode) == MONTE_CARLO
        if self.mc:
            self.x = model.sample(model.theta_true, samples, seed).points

    def column(self, tau: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, float]:
        if not self.mc:
            b = np.array([self.model.moment(t, c) for t in tau])
            return b, self.model.moment(c, c)
        lp = self.model.log_pi_matrix(np.vstack([tau, c[None, :]]), self.x)
        beta = np.exp(lp)
        col = beta.T @ beta[:, -1] / len(self.x)
        if not np.all(np.isfinite(col)):
            raise DiagnosticsError("Monte Carlo moment overflow")
        return col[:-1], float(col[-1])


_ROUNDOFF = 1e3 * np.finfo(float).eps
_INCOMPAT_GAIN = 1e8
# scores this close (relative) count as tied; ties go to the earliest candidate
_TIE_RTOL = 1e-8


@dataclass(frozen=True)
class _State:
    tau: np.ndarray
    G: np.ndarray
    L: np.ndarray  # Cholesky factor of B(tau)
    W: np.ndarray


@dataclass(frozen=True)
class _Score:
    trace: float
    dependent: bool
    incompatible: bool
    coeffs: np.ndarray | None
    error: str | None = None


def _score(model: Model, src: _MomentSource, st: _State, c: np.ndarray, tol: Tolerance,
           separation: float) -> _Score:
    try:
        b, bcc = src.column(st.tau, c)
        hc = model.h(c)
    except (PostulateViolationError, DiagnosticsError, DomainError) as exc:
        return _Score(-math.inf, False, False, None, str(exc))
    l = scipy.linalg.solve_triangular(st.L, b, lower=True)
    s = bcc - l @ l
    u = scipy.linalg.solve_triangular(st.L.T, l, lower=False)  # B^-1 b
    r = hc - st.G @ u
    if s <= tol.rank_eps * bcc:
        coeffs = np.append(-u, 1.0)
        gnorm = np.linalg.norm(np.column_stack([st.G, hc]))
        bad = np.linalg.norm(r) > tol.psd_eps * gnorm * np.linalg.norm(coeffs)
        # points merely very close to tau are numerically dependent too, but
        # their implied gain r r^T / s stays bounded; a true incompatibility
        # has r of order G against an s at round-off level
        floor = _ROUNDOFF * bcc * (1.0 + u @ u)
        gain = (r @ r) / max(s, floor)
        huge = gain > _INCOMPAT_GAIN * (1.0 + float(np.trace(st.W)))
        return _Score(float(np.trace(st.W)), True, bool(bad and huge), coeffs)
    if s <= separation * bcc:
        return _Score(float(np.trace(st.W)), True, False, None)
    return _Score(float(np.trace(st.W) + r @ r / s), False, False, None)


def _state_for(model: Model, tau: np.ndarray, cfg: SearchConfig, src: _MomentSource,
               tol: Tolerance) -> tuple[_State, BoundMatrix]:
    if src.mc:
        lp = np.exp(model.log_pi_matrix(tau, src.x))
        B = lp.T @ lp / len(src.x)
        mm = MomentMatrices(compute_G(model, tau), 0.5 * (B + B.T), tau, MONTE_CARLO)
    else:
        mm = compute_B(model, tau, cfg.method, tol=tol)
    kept, reduced = deflate_dependent(mm, tol)
    bm = bound_V(reduced, tol)
    L = scipy.linalg.cholesky(reduced.B, lower=True)
    return _State(reduced.tau, reduced.G, L, bm.W), bm


def search_msup(model: Model, cfg: SearchConfig = SearchConfig(),
                tol: Tolerance = DEFAULT_TOL) -> SearchReport:
    threshold = cfg.divergence_threshold
    if threshold is None:
        threshold = 1e3 * float(np.trace(crb_limit(model, cfg.crb_eps, tol=tol)))
    src = _MomentSource(model, cfg.method, cfg.mc_samples, cfg.seed)
    grid = grid_points(model, cfg)

    state, best = _state_for(model, model.theta_true[None, :], cfg, src, tol)
    lam = best.lambda_max
    steps = [SearchStep(state.tau, best.trace, lam, None, best.W)]
    k_witness = lam
    report = SearchReport(steps, best, Boundedness.INCONCLUSIVE, k_witness, threshold)
    seen_pruned = set()

    def prune(c: np.ndarray, reason: str) -> None:
        key = tuple(c.tolist())
        if key not in seen_pruned:
            seen_pruned.add(key)
            report.pruned.append((c, reason))
    stall = 0

    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for rnd in range(cfg.budget):
            cands = np.vstack([grid, _local_proposals(model, state.tau, cfg, rnd)])
            if len(cands) == 0:
                report.notes.append("no candidate points")
                break
            fn: Callable[[np.ndarray], _Score] = lambda c: _score(model, src, state, c, tol,
                                                                  cfg.separation_tol)
            scores = list(pool.map(fn, cands)) if pool else [fn(c) for c in cands]

            for c, sc in zip(cands, scores):
                if sc.error is not None:
                    prune(c, sc.error)
                elif sc.incompatible and report.compatible:
                    report.compatible = False
                    report.witness = sc.coeffs
                    report.witness_tau = np.vstack([state.tau, c[None, :]])

            # deterministic reduction: highest score up to round-off ties, then
            # lowest candidate index (grid before local proposals)
            ok = [i for i, sc in enumerate(scores) if sc.error is None and not sc.dependent]
            cur = float(np.trace(state.W))
            accepted = False
            new_state = None
            while ok and new_state is None:
                top = max(scores[i].trace for i in ok)
                if top <= cur:
                    break
                band = _TIE_RTOL * abs(top)
                pick = min(i for i in ok if scores[i].trace >= top - band)
                if scores[pick].trace <= cur:
                    pick = min(i for i in ok if scores[i].trace == top)
                c = cands[pick]
                try:
                    new_state, new_best = _state_for(model, np.vstack([state.tau, c[None, :]]), cfg, src, tol)
                except BarankinError as exc:
                    prune(c, str(exc))
                    ok.remove(pick)
            if new_state is not None:
                grew = len(new_state.tau) > len(state.tau)
                if grew and new_best.trace >= cur:
                    gain = new_best.trace - cur
                    state, best = new_state, new_best
                    lam = best.lambda_max
                    k_witness = max(k_witness, lam)
                    steps.append(SearchStep(state.tau, best.trace, lam, c, best.W))
                    accepted = True
                    rel = gain / cur if cur > 0 else math.inf
                    stall = stall + 1 if rel < cfg.stall_tol else 0
            if not accepted:
                stall += 1
            if lam > threshold:
                report.boundedness = Boundedness.DIVERGENCE_DETECTED
                break
            if stall >= cfg.patience:
                report.boundedness = Boundedness.BOUNDED_EVIDENCE
                break
    finally:
        if pool is not None:
            pool.shutdown()

    report.best = best
    report.K_witness = k_witness
    if cfg.budget == 0:
        report.notes.append("budget 0: only theta_true evaluated, no evidence either way")
    if not report.compatible:
        report.notes.append(
            "target is not compatible with the model's likelihood ratios: "
            "no unbiased estimator exists"
        )
    return report
