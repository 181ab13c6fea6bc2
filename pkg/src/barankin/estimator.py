"""Estimators built from the equality condition, and their certification.

The candidate optimal estimator for test points ``tau`` and compression
``A`` is ``psi(x) = g(theta_true) + Lambda0 A beta(tau; x)`` with
``beta_i(tau; x) = pi(theta_i; x)``. By construction it is unbiased at
every test point and its covariance equals the bound W; it is efficient
only if it is also unbiased everywhere else, which certification probes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import MomentMatrices, _a_matrix, bound_W, lambda0
from .errors import InvalidInputError, ModeError, PostulateViolationError
from .mc import SIGMA_K, McConfig, empirical_bias, empirical_cov, exact_bias, exact_cov
from .models import ENUMERATION, Model
from .psd import DEFAULT_TOL, Tolerance


class SpanEstimator:
    """``x -> g(theta_true) + Lambda0 A beta(tau; x)``; accepts one sample or a batch."""

    def __init__(self, model: Model, tau: np.ndarray, coeffs: np.ndarray, A: np.ndarray,
                 lambda0: np.ndarray):
        self.model = model
        self.tau = tau
        self.A = A
        self.lambda0 = lambda0
        self.g0 = model.target(model.theta_true)
        # weights on beta directly, (d_g, M)
        self._weights = coeffs

    @property
    def output_dim(self) -> int:
        return self.g0.shape[0]

    @property
    def is_constant(self) -> bool:
        return not np.any(self._weights)

    def __call__(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        beta = np.exp(self.model.log_pi_matrix(self.tau, np.atleast_2d(arr)))
        out = self.g0 + beta @ self._weights.T
        return out[0] if single else out


def construct_estimator(model: Model, mm: MomentMatrices, A=None,
                        tol: Tolerance = DEFAULT_TOL) -> SpanEstimator:
    a = _a_matrix(mm, A)
    lam = lambda0(mm, a, tol)
    return SpanEstimator(model, mm.tau, lam @ a, a, lam)


class Verdict(str, enum.Enum):
    ATTAINED_ON_SPAN = "AttainedOnSpan"
    NOT_ATTAINED = "NotAttained"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ProbeResult:
    theta: np.ndarray
    bias: np.ndarray
    std_err: np.ndarray | None
    passed: bool
    exact_bias: np.ndarray | None = None


@dataclass(frozen=True)
class EfficiencyCertificate:
    lambda0: np.ndarray
    bound: np.ndarray
    residual_trace: float
    residual_std_err: float | None
    probes: list[ProbeResult]
    verdict: Verdict
    notes: list[str] = field(default_factory=list)


def _closed_form_bias(model: Model, est: SpanEstimator, theta) -> np.ndarray | None:
    # E_theta[pi(tau_i)] = E_true[pi(theta) pi(tau_i)]
    try:
        m = np.array([model.moment(theta, t) for t in est.tau])
    except (ModeError, PostulateViolationError, ArithmeticError):
        return None
    return est.g0 + est._weights @ m - model.target(theta)


def certify_efficiency(model: Model, mm: MomentMatrices, A=None, probes: Sequence = (),
                       mc: McConfig | None = None, tol: Tolerance = DEFAULT_TOL,
                       certify_tol: float = 1e-10, resolution: float = 1e-2,
                       k: float = SIGMA_K) -> EfficiencyCertificate:
    """Check whether the span estimator attains the bound and is unbiased at ``probes``.

    Finite-support models are evaluated exactly. Otherwise ``mc`` drives
    Monte Carlo estimates and a probe fails only if its bias exceeds
    ``k`` standard errors; a passing probe whose ``k * std_err`` exceeds
    ``resolution`` makes the verdict Inconclusive.
    """
    exact = model.moment_mode == ENUMERATION
    if not exact and mc is None:
        raise InvalidInputError("Monte Carlo configuration required for a non-enumerable model")
    est = construct_estimator(model, mm, A, tol)
    W = bound_W(mm, est.A, tol).W
    scale = 1.0 + abs(np.trace(W))
    notes = []

    if exact:
        residual = float(np.trace(exact_cov(est, model) - W))
        res_se = None
        res_ok = abs(residual) <= certify_tol * scale
    else:
        cov = empirical_cov(est, model, mc)
        residual = float(np.trace(cov.value) - np.trace(W))
        res_se = float(np.sum(np.diag(cov.std_err)))
        res_ok = abs(residual) <= k * res_se + certify_tol * scale

    results = []
    blurry = False
    for i, theta in enumerate(probes):
        t = model.point(theta)
        if exact:
            bias = exact_bias(est, model, t)
            ok = bool(np.all(np.abs(bias) <= certify_tol * (1.0 + np.abs(model.target(t)))))
            results.append(ProbeResult(t, bias, None, ok, bias))
            continue
        probe_cfg = McConfig(mc.samples, mc.seed + 1 + i, mc.batches, mc.workers)
        b = empirical_bias(est, model, t, probe_cfg)
        finite = bool(np.all(np.isfinite(b.value)) and np.all(np.isfinite(b.std_err)))
        ok = finite and bool(np.all(np.abs(b.value) <= k * b.std_err))
        if not finite or (ok and np.any(k * b.std_err > resolution)):
            blurry = True
        results.append(ProbeResult(t, b.value, b.std_err, ok, _closed_form_bias(model, est, t)))

    if est.is_constant:
        notes.append(
            "estimator is constant: the test set carries no information about the target"
        )
    if not probes:
        notes.append("no probes: residual-only certificate")

    decisive_fail = (not res_ok) or any(
        not r.passed and (r.std_err is None or np.all(np.isfinite(r.std_err))) for r in results
    )
    if decisive_fail:
        verdict = Verdict.NOT_ATTAINED
    elif not probes or blurry:
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = Verdict.ATTAINED_ON_SPAN
    return EfficiencyCertificate(est.lambda0, W, residual, res_se, results, verdict, notes)
