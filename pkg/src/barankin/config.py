"""Run configuration: a TOML file of key/value tables.

Example::

    tau = [0.0, 1.0]            # explicit test points (scalar or list per point)
    # a_matrix = [[1.0, 1.0]]   # optional compression, row-major

    [model]
    name = "gaussian_mean"      # gaussian_mean | gaussian_mean_vector | bernoulli | exponential_rate
    theta_true = 0.0
    target = "identity"
    n = 1
    sigma = 1.0

    [moments]
    method = "closed_form"      # closed_form | enumeration | monte_carlo

    [mc]
    samples = 100000
    seed = 7
    batches = 40

    [tolerance]
    psd_eps = 1e-9
    rank_eps = 1e-10

    [search]                    # instead of `tau`
    grid = { lo = -1.0, hi = 1.0, num = 41 }
    candidates = [0.5, 0.75]
    budget = 50

    [certify]
    probes = [0.5]

    [crb]
    eps = 1e-3

    [verify]
    estimator = "sample_mean"   # sample_mean | constructed | linear
    report = "search.json"      # take tau from a previous bound/search report

    [output]
    path = "report.json"
    trajectory_csv = "trajectory.csv"

Exactly one of ``tau`` and ``[search]`` may be present.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import BarankinError, ConfigError
from .mc import McConfig
from .models import MODEL_REGISTRY, MOMENT_MODES, Model, build_model
from .psd import Tolerance
from .search import SearchConfig

# name of the true-parameter argument per model constructor
_THETA_KEY = {
    "gaussian_mean": "theta_true",
    "gaussian_mean_vector": "theta_true",
    "bernoulli": "p_true",
    "exponential_rate": "rate_true",
}

_TOP_KEYS = {"tau", "a_matrix", "model", "moments", "mc", "tolerance", "search",
             "certify", "crb", "verify", "output"}

ESTIMATORS = ("sample_mean", "constructed", "linear")


@dataclass
class RunConfig:
    raw: dict
    model: Model
    tau: np.ndarray | None = None
    a_matrix: np.ndarray | None = None
    search: SearchConfig | None = None
    method: str | None = None
    mc: McConfig = field(default_factory=McConfig)
    tol: Tolerance = field(default_factory=Tolerance)
    probes: list = field(default_factory=list)
    crb_eps: float | None = None
    verify: dict = field(default_factory=dict)
    output_path: str | None = None
    trajectory_csv: str | None = None
    base_dir: Path = Path(".")


def _table(raw: dict, key: str) -> dict:
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"[{key}] must be a table")
    return val


def _matrix(val, what: str) -> np.ndarray:
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a numeric (nested) array") from None
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what} has non-finite entries")
    return arr


def parse_config(raw: dict, base_dir: Path | str = ".", *, seed: int | None = None,
                 samples: int | None = None, psd_eps: float | None = None) -> RunConfig:
    """Validate a decoded config table and build the run objects.

    ``seed``, ``samples`` and ``psd_eps`` override the file (CLI flags).
    """
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    mtab = dict(_table(raw, "model"))
    name = mtab.pop("name", None)
    if name not in MODEL_REGISTRY:
        raise ConfigError(f"model.name must be one of {sorted(MODEL_REGISTRY)}, got {name!r}")
    if "theta_true" in mtab:
        mtab[_THETA_KEY[name]] = mtab.pop("theta_true")
    if name in ("gaussian_mean_vector", "exponential_rate") and mtab.get("target", "identity") != "identity":
        raise ConfigError(f"{name} supports only the identity target")
    if name in ("gaussian_mean_vector", "exponential_rate"):
        mtab.pop("target", None)
    try:
        model = build_model(name, **mtab)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from None
    except (ValueError, BarankinError) as exc:
        raise ConfigError(f"model {name!r}: {exc}") from None

    if "tau" in raw and "search" in raw:
        raise ConfigError("give either explicit `tau` or a [search] table, not both")

    mc_tab = _table(raw, "mc")
    try:
        mc = McConfig(
            samples=int(samples if samples is not None else mc_tab.get("samples", 100_000)),
            seed=int(seed if seed is not None else mc_tab.get("seed", 0)),
            batches=int(mc_tab.get("batches", 40)),
            workers=int(mc_tab.get("workers", 1)),
        )
        ttab = _table(raw, "tolerance")
        tol = Tolerance(
            psd_eps=float(psd_eps if psd_eps is not None else ttab.get("psd_eps", 1e-9)),
            rank_eps=float(ttab.get("rank_eps", 1e-10)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    method = _table(raw, "moments").get("method")
    if method is not None and method not in MOMENT_MODES:
        raise ConfigError(f"moments.method must be one of {MOMENT_MODES}")

    cfg = RunConfig(raw=raw, model=model, method=method, mc=mc, tol=tol, base_dir=Path(base_dir))
    if "tau" in raw:
        cfg.tau = _matrix(raw["tau"], "tau")
    if "a_matrix" in raw:
        cfg.a_matrix = _matrix(raw["a_matrix"], "a_matrix")
        if cfg.a_matrix.ndim == 1:
            cfg.a_matrix = cfg.a_matrix.reshape(1, -1)
    if "search" in raw:
        cfg.search = _search_config(_table(raw, "search"), model, mc, method)

    cert = _table(raw, "certify")
    cfg.probes = list(_matrix(cert.get("probes", []), "certify.probes"))
    crb = _table(raw, "crb")
    if "eps" in crb:
        cfg.crb_eps = float(crb["eps"])
        if not cfg.crb_eps > 0:
            raise ConfigError("crb.eps must be positive")

    ver = dict(_table(raw, "verify"))
    est = ver.get("estimator", "sample_mean")
    if est not in ESTIMATORS:
        raise ConfigError(f"verify.estimator must be one of {ESTIMATORS}")
    ver["estimator"] = est
    cfg.verify = ver

    out = _table(raw, "output")
    cfg.output_path = out.get("path")
    cfg.trajectory_csv = out.get("trajectory_csv")
    return cfg


def _search_config(tab: dict, model: Model, mc: McConfig, method: str | None) -> SearchConfig:
    kw: dict[str, Any] = {}
    grid = tab.get("grid")
    if grid is not None:
        try:
            kw["grid_lo"] = tuple(np.atleast_1d(np.asarray(grid["lo"], float)))
            kw["grid_hi"] = tuple(np.atleast_1d(np.asarray(grid["hi"], float)))
            kw["grid_num"] = tuple(np.atleast_1d(np.asarray(grid["num"], int)))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("search.grid needs numeric lo, hi and num") from None
    if "candidates" in tab:
        pts = _matrix(tab["candidates"], "search.candidates").reshape(-1, model.param_dim)
        kw["candidates"] = tuple(map(tuple, pts))
    casts = {"budget": int, "stall_tol": float, "patience": int, "divergence_threshold": float,
             "local_proposals": int, "local_scale": float, "workers": int, "crb_eps": float,
             "separation_tol": float}
    for key, cast in casts.items():
        if key in tab:
            try:
                kw[key] = cast(tab[key])
            except (TypeError, ValueError):
                raise ConfigError(f"search.{key} must be {cast.__name__}") from None
    extra = set(tab) - set(casts) - {"grid", "candidates"}
    if extra:
        raise ConfigError(f"unknown search keys: {sorted(extra)}")
    if kw.get("budget", 0) < 0:
        raise ConfigError("search.budget must be >= 0")
    return SearchConfig(seed=mc.seed, method=method, mc_samples=mc.samples, **kw)


def load_config(path: str | Path, **overrides) -> RunConfig:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}") from None
    return parse_config(raw, p.parent, **overrides)
