"""Subcommand implementations; each returns ``(result, warnings)``."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .bounds import (
    as_tau,
    b0_compatibility_check,
    bound_V,
    bound_W,
    compute_B,
    crb_limit,
    deflate_dependent,
    lambda0,
)
from .config import RunConfig
from .errors import ConfigError, DimensionError, RankDeficiencyError
from .estimator import certify_efficiency, construct_estimator
from .mc import empirical_bias, empirical_cov, exact_bias, exact_cov
from .models import ENUMERATION, MONTE_CARLO
from .psd import eig_extremes, loewner_compare
from .report import decode_matrix, read_report
from .search import search_msup


def _moments(cfg: RunConfig, tau):
    return compute_B(cfg.model, tau, cfg.method, mc_samples=cfg.mc.samples,
                     seed=cfg.mc.seed, batches=cfg.mc.batches, tol=cfg.tol)


def _require_tau(cfg: RunConfig, cmd: str) -> np.ndarray:
    if cfg.tau is None:
        raise ConfigError(f"`{cmd}` needs explicit test points `tau`")
    return as_tau(cfg.model, cfg.tau)


def _deflated_bound(cfg: RunConfig, mm):
    kept, reduced = deflate_dependent(mm, cfg.tol)
    try:
        bm = bound_V(reduced, cfg.tol)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(f"rank deficient after deflation: {exc}") from None
    return kept, reduced, bm


def _moment_block(mm) -> dict:
    out = {"tau": mm.tau, "G": mm.G, "B": mm.B, "method": mm.method}
    if mm.mc_std_err is not None:
        out["B_std_err"] = mm.mc_std_err
    return out


def _degenerate(cfg: RunConfig, tau: np.ndarray) -> bool:
    return bool(np.all(tau == cfg.model.theta_true))


def cmd_bound(cfg: RunConfig):
    tau = _require_tau(cfg, "bound")
    mm = _moments(cfg, tau)
    compat = b0_compatibility_check(mm, cfg.tol)
    kept, reduced, V = _deflated_bound(cfg, mm)
    warnings = []
    if _degenerate(cfg, tau):
        warnings.append("degenerate test set: only theta_true, bound is zero")
    if not compat.compatible:
        warnings.append("target not compatible with the likelihood ratios: no unbiased estimator exists")
    result = {
        "moments": _moment_block(mm),
        "kept_indices": kept,
        "V": {"matrix": V.W, "tau": V.tau, "condition_number": V.condition_number,
              "trace": V.trace, "lambda_max": V.lambda_max},
        "compatibility": {"compatible": compat.compatible, "witness": compat.witness},
    }
    if cfg.a_matrix is not None:
        try:
            W = bound_W(mm, cfg.a_matrix, cfg.tol)
        except RankDeficiencyError as exc:
            raise RankDeficiencyError(f"A B A^T singular: {exc}") from None
        result["W"] = {"matrix": W.W, "A": W.a_matrix, "condition_number": W.condition_number,
                       "trace": W.trace, "lambda_max": W.lambda_max, "in_C_A": W.in_C_A,
                       "lambda0": lambda0(mm, W.a_matrix, cfg.tol)}
    return result, warnings


def _search_result(report) -> dict:
    return {
        "boundedness": report.boundedness,
        "K_witness": report.K_witness,
        "divergence_threshold": report.divergence_threshold,
        "best": {"tau": report.best.tau, "W": report.best.W, "trace": report.best.trace,
                 "lambda_max": report.best.lambda_max,
                 "condition_number": report.best.condition_number},
        "compatibility": {"compatible": report.compatible, "witness": report.witness,
                          "witness_tau": report.witness_tau},
        "iterations": [
            {"iteration": i, "tau": s.tau, "trace": s.trace, "lambda_max": s.lambda_max,
             "new_point": s.new_point}
            for i, s in enumerate(report.iterations)
        ],
        "pruned": [{"point": p, "reason": r} for p, r in report.pruned],
        "notes": report.notes,
    }


def cmd_search(cfg: RunConfig):
    if cfg.search is None:
        raise ConfigError("`search` needs a [search] table")
    report = search_msup(cfg.model, cfg.search, cfg.tol)
    warnings = list(report.notes)
    return _search_result(report), warnings


def _probe_block(p) -> dict:
    return {"theta": p.theta, "bias": p.bias, "std_err": p.std_err, "passed": p.passed,
            "exact_bias": p.exact_bias}


def cmd_certify(cfg: RunConfig):
    tau = _require_tau(cfg, "certify")
    mm = _moments(cfg, tau)
    kept, reduced, _ = _deflated_bound(cfg, mm)
    a = cfg.a_matrix[:, kept] if cfg.a_matrix is not None else None
    cert = certify_efficiency(cfg.model, reduced, a, cfg.probes, cfg.mc, cfg.tol)
    result = {
        "kept_indices": kept,
        "tau": reduced.tau,
        "lambda0": cert.lambda0,
        "W": cert.bound,
        "residual_trace": cert.residual_trace,
        "residual_std_err": cert.residual_std_err,
        "probes": [_probe_block(p) for p in cert.probes],
        "verdict": cert.verdict,
        "notes": cert.notes,
    }
    return result, list(cert.notes)


def cmd_crb(cfg: RunConfig):
    if cfg.crb_eps is None:
        raise ConfigError("`crb` needs [crb] eps")
    crb = crb_limit(cfg.model, cfg.crb_eps, cfg.method, cfg.tol, mc_samples=cfg.mc.samples,
                    seed=cfg.mc.seed, batches=cfg.mc.batches)
    result = {"eps": cfg.crb_eps, "crb_limit": crb}
    fisher = getattr(cfg.model, "fisher_information", None)
    if fisher is not None and cfg.model.target_name == "identity":
        result["fisher_inverse"] = np.linalg.inv(fisher())
    best = None
    if cfg.tau is not None:
        _, _, bm = _deflated_bound(cfg, _moments(cfg, as_tau(cfg.model, cfg.tau)))
        best = ("tau", bm)
    elif cfg.search is not None:
        best = ("search", search_msup(cfg.model, cfg.search, cfg.tol).best)
    if best is not None:
        source, bm = best
        verdict = loewner_compare(bm.W, crb, cfg.tol)
        result["comparison"] = {"source": source, "best_W": bm.W, "tau": bm.tau,
                                "relation": verdict.relation, "witness": list(verdict.witness)}
    return result, []


def _verify_tau(cfg: RunConfig):
    """Test points and bound for `verify`, from the config or an earlier report."""
    ref = cfg.verify.get("report")
    if ref is not None:
        path = Path(ref)
        if not path.is_absolute():
            path = cfg.base_dir / path
        try:
            rep = read_report(path)
            res = rep["result"]
            if "best" in res:
                tau = decode_matrix(res["best"]["tau"])
            else:
                tau = decode_matrix(res["V"]["tau"])
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot use report {path}: {exc}") from None
        return as_tau(cfg.model, tau)
    if cfg.tau is not None:
        return as_tau(cfg.model, cfg.tau)
    if cfg.search is not None:
        return search_msup(cfg.model, cfg.search, cfg.tol).best.tau
    raise ConfigError("`verify` needs tau, [search] or verify.report")


def _build_estimator(cfg: RunConfig, reduced):
    kind = cfg.verify["estimator"]
    model = cfg.model
    if kind == "sample_mean":
        return model.sample_mean, "sample_mean"
    if kind == "constructed":
        return construct_estimator(model, reduced, None, cfg.tol), "constructed"
    coeffs = np.array(cfg.verify.get("coefficients", []), dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs.reshape(1, -1)
    offset = np.array(cfg.verify.get("offset", np.zeros(coeffs.shape[0])), dtype=float).ravel()
    if coeffs.shape[1] != model.sample_dim or offset.shape[0] != coeffs.shape[0]:
        raise DimensionError(
            f"linear estimator coefficients {coeffs.shape} / offset {offset.shape} do not fit "
            f"samples of length {model.sample_dim}"
        )
    return (lambda X: offset + np.atleast_2d(X) @ coeffs.T), "linear"


def cmd_verify(cfg: RunConfig):
    model = cfg.model
    tau = _verify_tau(cfg)
    mm = _moments(cfg, tau)
    kept, reduced, bm = _deflated_bound(cfg, mm)
    W = bm.W
    est, kind = _build_estimator(cfg, reduced)

    probe = np.atleast_2d(model.sample(model.theta_true, 1, cfg.mc.seed).points)
    out_dim = np.asarray(est(probe)).reshape(1, -1).shape[1]
    if out_dim != model.target_dim:
        raise DimensionError(
            f"estimator returns {out_dim} value(s) but the target has dimension {model.target_dim}"
        )

    exact = model.moment_mode == ENUMERATION and cfg.method != MONTE_CARLO
    d = model.target_dim
    if exact:
        cov = exact_cov(est, model)
        cov_se = None
        verdict = loewner_compare(cov, W, cfg.tol)
        dominates = verdict.dominates
        biases = [{"theta": t, "bias": exact_bias(est, model, t), "std_err": None}
                  for t in cfg.probes]
    else:
        c = empirical_cov(est, model, cfg.mc)
        cov, cov_se = c.value, c.std_err
        verdict = loewner_compare(cov, W, cfg.tol)
        lo, _ = eig_extremes(cov - W)
        dominates = lo >= -3.0 * float(np.max(cov_se)) * d
        biases = []
        for t in cfg.probes:
            b = empirical_bias(est, model, t, cfg.mc)
            biases.append({"theta": model.point(t), "bias": b.value, "std_err": b.std_err})
    result = {
        "estimator": kind,
        "tau": reduced.tau,
        "W": W,
        "covariance": cov,
        "covariance_std_err": cov_se,
        "method": "enumeration" if exact else MONTE_CARLO,
        "dominance": {"holds": bool(dominates), "relation": verdict.relation,
                      "witness": list(verdict.witness)},
        "biases": biases,
    }
    warnings = [] if dominates else ["estimator covariance does not dominate the bound"]
    return result, warnings


COMMANDS = {
    "bound": cmd_bound,
    "search": cmd_search,
    "certify": cmd_certify,
    "crb": cmd_crb,
    "verify": cmd_verify,
}
