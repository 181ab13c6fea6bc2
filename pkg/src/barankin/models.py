"""Parametric families with likelihood ratios against a fixed true parameter.

A model fixes the true parameter ``theta_true`` and exposes

* ``log_pi(theta, x)``: log of the likelihood ratio dP_theta/dP_true at x,
* ``target(theta)``: the quantity to be estimated,
* ``moment(theta1, theta2)``: E_true[pi(theta1) pi(theta2)],
* ``sample(theta, count, seed)``: reproducible draws from P_theta.

The parameter space is a box in R^k. Samples are vectors of length
``sample_dim``; batches are ``(count, sample_dim)`` arrays.

Random numbers come from numpy's counter-based Philox bit generator keyed
by a ``SeedSequence``; independent substreams are obtained by appending a
stream index to the entropy (see :func:`make_rng`, :func:`derive_seed`).
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import (
    DiagnosticsError,
    DimensionError,
    DomainError,
    ModeError,
    PostulateViolationError,
    SupportError,
)

MASK64 = (1 << 64) - 1

CLOSED_FORM = "closed_form"
ENUMERATION = "enumeration"
MONTE_CARLO = "monte_carlo"
MOMENT_MODES = (CLOSED_FORM, ENUMERATION, MONTE_CARLO)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    entropy = [int(seed) & MASK64, *(int(s) & MASK64 for s in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, index: int) -> int:
    """Deterministic 64-bit child seed for substream ``index``."""
    ss = np.random.SeedSequence([int(seed) & MASK64, int(index) & MASK64])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SampleBatch:
    points: np.ndarray
    seed: int
    theta: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]


class Model(ABC):
    """Base class for the built-in families.

    Subclasses set ``name``, ``theta_true``, ``sample_dim``, ``target_dim``,
    ``domain`` and ``moment_mode`` and implement the abstract hooks.
    """

    name: str
    theta_true: np.ndarray
    sample_dim: int
    target_dim: int
    domain: tuple[tuple[float, float], ...]
    moment_mode: str

    @property
    def param_dim(self) -> int:
        return len(self.domain)

    def point(self, theta) -> np.ndarray:
        """Coerce ``theta`` to a parameter vector and check the domain box."""
        t = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
        if t.shape != (self.param_dim,):
            raise DimensionError(
                f"{self.name}: parameter must have {self.param_dim} coordinate(s), got {t.shape}"
            )
        if not np.all(np.isfinite(t)):
            raise DomainError(f"{self.name}: non-finite parameter {t.tolist()}")
        for v, (lo, hi) in zip(t, self.domain):
            if not lo <= v <= hi:
                raise DomainError(
                    f"{self.name}: parameter {t.tolist()} outside domain {list(self.domain)}"
                )
        return t

    def in_domain(self, theta) -> bool:
        try:
            self.point(theta)
        except (DomainError, DimensionError):
            return False
        return True

    def batch(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.sample_dim:
            raise DimensionError(
                f"{self.name}: samples must have length {self.sample_dim}, got shape {x.shape}"
            )
        self._check_support(x)
        return x

    def log_pi(self, theta, x) -> float:
        """Log likelihood ratio of P_theta against P_true at one sample."""
        return float(self.log_pi_batch(theta, x)[0])

    def log_pi_batch(self, theta, X) -> np.ndarray:
        return self._log_pi(self.point(theta), self.batch(X))

    def log_pi_matrix(self, tau, X) -> np.ndarray:
        """``(N, M)`` array of log pi(tau_i; x_n)."""
        x = self.batch(X)
        pts = [self.point(t) for t in tau]
        out = np.empty((x.shape[0], len(pts)))
        for i, t in enumerate(pts):
            out[:, i] = self._log_pi(t, x)
        return out

    def target(self, theta) -> np.ndarray:
        return np.asarray(self._target(self.point(theta)), dtype=float).reshape(self.target_dim)

    def h(self, theta) -> np.ndarray:
        """Target increment g(theta) - g(theta_true)."""
        return self.target(theta) - self.target(self.theta_true)

    def moment(self, theta1, theta2) -> float:
        """E_true[pi(theta1) pi(theta2)]."""
        t1, t2 = self.point(theta1), self.point(theta2)
        if self.moment_mode == CLOSED_FORM:
            val = self._moment(t1, t2)
        elif self.moment_mode == ENUMERATION:
            val = self._enumerated_moment(t1, t2)
        else:
            raise ModeError(f"{self.name}: no exact moments in mode {self.moment_mode!r}")
        if not math.isfinite(val):
            raise DiagnosticsError(
                f"{self.name}: moment at ({t1.tolist()}, {t2.tolist()}) overflows"
            )
        return val

    def sample(self, theta, count: int, seed: int) -> SampleBatch:
        t = self.point(theta)
        if int(count) < 1:
            raise ValueError("count must be positive")
        pts = self._sample(t, int(count), make_rng(seed))
        return SampleBatch(pts, int(seed), t)

    def enumerate_support(self) -> list[tuple[np.ndarray, float]]:
        raise ModeError(f"{self.name} has no finite support (mode {self.moment_mode!r})")

    def support_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Support as a ``(s, sample_dim)`` array plus true probabilities."""
        supp = self.enumerate_support()
        xs = np.array([x for x, _ in supp], dtype=float)
        ps = np.array([p for _, p in supp], dtype=float)
        return xs, ps

    def sample_mean(self, X) -> np.ndarray:
        """Natural sample-mean estimator, ``(N, d)``."""
        x = self.batch(X)
        return x.mean(axis=1, keepdims=True)

    def describe(self) -> dict:
        return {"name": self.name, **self._params()}

    def _enumerated_moment(self, t1, t2) -> float:
        xs, ps = self.support_arrays()
        p1 = np.exp(self._log_pi(t1, xs))
        p2 = np.exp(self._log_pi(t2, xs))
        # symmetric in (t1, t2) bit-for-bit
        return float(np.sum(ps * (p1 * p2)))

    def _check_support(self, x: np.ndarray) -> None:
        pass

    @abstractmethod
    def _log_pi(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _target(self, theta: np.ndarray): ...

    def _moment(self, t1: np.ndarray, t2: np.ndarray) -> float:
        raise ModeError(f"{self.name}: no closed-form moment")

    @abstractmethod
    def _sample(self, theta: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def _params(self) -> dict: ...

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self._params().items())
        return f"{type(self).__name__}({args})"


def _box(domain, k: int) -> tuple[tuple[float, float], ...]:
    if domain is None:
        return tuple((-math.inf, math.inf) for _ in range(k))
    dom = np.asarray(domain, dtype=float).reshape(-1, 2)
    if dom.shape[0] == 1 and k > 1:
        dom = np.repeat(dom, k, axis=0)
    if dom.shape[0] != k or np.any(dom[:, 0] > dom[:, 1]):
        raise DomainError(f"invalid domain {domain!r} for {k} coordinate(s)")
    return tuple((float(lo), float(hi)) for lo, hi in dom)


class GaussianMean(Model):
    """n iid N(theta, sigma^2) observations, scalar mean parameter.

    ``target`` is ``"identity"`` or ``"affine"`` (``slope * theta + intercept``).
    """

    moment_mode = CLOSED_FORM

    def __init__(self, n: int = 1, sigma: float = 1.0, theta_true: float = 0.0,
                 target: str = "identity", slope: float = 1.0, intercept: float = 0.0,
                 domain=None):
        if n < 1 or sigma <= 0:
            raise ValueError("need n >= 1 and sigma > 0")
        if target not in ("identity", "affine"):
            raise ValueError(f"unknown target {target!r} for gaussian_mean")
        self.name = "gaussian_mean"
        self.n = int(n)
        self.sigma = float(sigma)
        self.target_name = target
        self.slope = float(slope) if target == "affine" else 1.0
        self.intercept = float(intercept) if target == "affine" else 0.0
        self.domain = _box(domain, 1)
        self.sample_dim = self.n
        self.target_dim = 1
        self.theta_true = self.point(theta_true)

    def _log_pi(self, theta, x):
        t, t0, s2 = theta[0], self.theta_true[0], self.sigma ** 2
        return (t - t0) / s2 * x.sum(axis=1) - self.n * (t * t - t0 * t0) / (2 * s2)

    def _target(self, theta):
        return [self.slope * theta[0] + self.intercept]

    def _moment(self, t1, t2):
        t0 = self.theta_true[0]
        with np.errstate(over="ignore"):
            return float(np.exp(self.n * (t1[0] - t0) * (t2[0] - t0) / self.sigma ** 2))

    def _sample(self, theta, count, rng):
        return rng.normal(theta[0], self.sigma, size=(count, self.n))

    def fisher_information(self) -> np.ndarray:
        return np.array([[self.n / self.sigma ** 2]])

    def _params(self):
        p = {"n": self.n, "sigma": self.sigma, "theta_true": float(self.theta_true[0]),
             "target": self.target_name}
        if self.target_name == "affine":
            p.update(slope=self.slope, intercept=self.intercept)
        return p


class GaussianMeanVector(Model):
    """n iid N(theta, diag(sigmas^2)) observations in R^d, identity target.

    A sample vector stores the n observations row-major, length ``n * d``.
    """

    moment_mode = CLOSED_FORM

    def __init__(self, d: int = 2, n: int = 1, sigmas: Sequence[float] | float = 1.0,
                 theta_true: Sequence[float] | None = None, domain=None):
        if d < 1 or n < 1:
            raise ValueError("need d >= 1 and n >= 1")
        sig = np.broadcast_to(np.asarray(sigmas, dtype=float), (d,)).copy()
        if np.any(sig <= 0):
            raise ValueError("sigmas must be positive")
        self.name = "gaussian_mean_vector"
        self.d, self.n, self.sigmas = int(d), int(n), sig
        self.target_name = "identity"
        self.domain = _box(domain, self.d)
        self.sample_dim = self.n * self.d
        self.target_dim = self.d
        self.theta_true = self.point(np.zeros(d) if theta_true is None else theta_true)

    def _obs(self, x):
        return x.reshape(x.shape[0], self.n, self.d)

    def _log_pi(self, theta, x):
        t0, s2 = self.theta_true, self.sigmas ** 2
        total = self._obs(x).sum(axis=1)
        return total @ ((theta - t0) / s2) - self.n * np.sum((theta ** 2 - t0 ** 2) / (2 * s2))

    def _target(self, theta):
        return theta

    def _moment(self, t1, t2):
        t0 = self.theta_true
        with np.errstate(over="ignore"):
            return float(np.exp(self.n * np.sum((t1 - t0) * (t2 - t0) / self.sigmas ** 2)))

    def _sample(self, theta, count, rng):
        obs = rng.normal(size=(count, self.n, self.d)) * self.sigmas + theta
        return obs.reshape(count, self.sample_dim)

    def sample_mean(self, X):
        return self._obs(self.batch(X)).mean(axis=1)

    def fisher_information(self) -> np.ndarray:
        return np.diag(self.n / self.sigmas ** 2)

    def _params(self):
        return {"d": self.d, "n": self.n, "sigmas": self.sigmas.tolist(),
                "theta_true": self.theta_true.tolist(), "target": "identity"}


_BERNOULLI_TARGETS: dict[str, Callable[[float], float]] = {
    "identity": lambda p: p,
    "odds": lambda p: p / (1.0 - p),
    "square": lambda p: p * p,
}


class BernoulliN(Model):
    """n iid Bernoulli(p) observations; finite support, exact moments by enumeration.

    ``target`` is one of ``identity`` (p), ``odds`` (p / (1 - p)) or
    ``square`` (p^2). The odds target is undefined at p = 1.
    """

    moment_mode = ENUMERATION

    def __init__(self, n: int = 1, p_true: float = 0.5, target: str = "identity", domain=None):
        if n < 1:
            raise ValueError("need n >= 1")
        if not 0.0 < p_true < 1.0:
            raise ValueError("p_true must lie strictly inside (0, 1)")
        if target not in _BERNOULLI_TARGETS:
            raise ValueError(f"unknown target {target!r} for bernoulli")
        self.name = "bernoulli"
        self.n = int(n)
        self.target_name = target
        self.domain = _box((0.0, 1.0) if domain is None else domain, 1)
        lo, hi = self.domain[0]
        if lo < 0.0 or hi > 1.0:
            raise DomainError("bernoulli domain must lie within [0, 1]")
        self.sample_dim = self.n
        self.target_dim = 1
        self.theta_true = self.point(p_true)

    def _check_support(self, x):
        if not np.all((x == 0.0) | (x == 1.0)):
            raise SupportError("bernoulli samples must be 0/1")

    def _log_pi(self, theta, x):
        p, p0 = theta[0], self.theta_true[0]
        k = x.sum(axis=1)
        with np.errstate(divide="ignore"):
            return xlogy(k, p / p0) + xlogy(self.n - k, (1.0 - p) / (1.0 - p0))

    def _target(self, theta):
        p = theta[0]
        if self.target_name == "odds" and p >= 1.0:
            raise DomainError("odds target undefined at p = 1")
        return [_BERNOULLI_TARGETS[self.target_name](p)]

    def _sample(self, theta, count, rng):
        return (rng.random(size=(count, self.n)) < theta[0]).astype(float)

    def enumerate_support(self):
        p0 = self.theta_true[0]
        out = []
        for bits in itertools.product((0.0, 1.0), repeat=self.n):
            k = sum(bits)
            out.append((np.array(bits), p0 ** k * (1.0 - p0) ** (self.n - k)))
        return out

    def fisher_information(self) -> np.ndarray:
        p0 = self.theta_true[0]
        return np.array([[self.n / (p0 * (1.0 - p0))]])

    def _params(self):
        return {"n": self.n, "p_true": float(self.theta_true[0]), "target": self.target_name}


class ExponentialRate(Model):
    """n iid Exponential(rate) observations, identity target.

    E_true[pi(l1) pi(l2)] is finite only when ``l1 + l2 > rate_true``;
    other pairs raise :class:`PostulateViolationError`.
    """

    moment_mode = CLOSED_FORM

    def __init__(self, n: int = 1, rate_true: float = 1.0, domain=None):
        if n < 1 or rate_true <= 0:
            raise ValueError("need n >= 1 and rate_true > 0")
        self.name = "exponential_rate"
        self.n = int(n)
        self.target_name = "identity"
        self.domain = _box((1e-12, math.inf) if domain is None else domain, 1)
        if self.domain[0][0] <= 0.0:
            raise DomainError("exponential rates must be positive")
        self.sample_dim = self.n
        self.target_dim = 1
        self.theta_true = self.point(rate_true)

    def _check_support(self, x):
        if not np.all(x > 0.0):
            raise SupportError("exponential samples must be positive")

    def _log_pi(self, theta, x):
        lam, lam0 = theta[0], self.theta_true[0]
        return self.n * math.log(lam / lam0) - (lam - lam0) * x.sum(axis=1)

    def _target(self, theta):
        return [theta[0]]

    def _moment(self, t1, t2):
        l1, l2, l0 = t1[0], t2[0], self.theta_true[0]
        s = l1 + l2 - l0
        if s <= 0.0:
            raise PostulateViolationError(
                t1.copy(), t2.copy(), f"rate sum {l1 + l2:g} <= true rate {l0:g}"
            )
        return float((l1 * l2 / (l0 * s)) ** self.n)

    def _sample(self, theta, count, rng):
        return rng.exponential(1.0 / theta[0], size=(count, self.n))

    def fisher_information(self) -> np.ndarray:
        return np.array([[self.n / self.theta_true[0] ** 2]])

    def _params(self):
        return {"n": self.n, "rate_true": float(self.theta_true[0]), "target": "identity"}


MODEL_REGISTRY: dict[str, type[Model]] = {
    "gaussian_mean": GaussianMean,
    "gaussian_mean_vector": GaussianMeanVector,
    "bernoulli": BernoulliN,
    "exponential_rate": ExponentialRate,
}


def build_model(name: str, **params) -> Model:
    """Construct a built-in model by registry name."""
    try:
        cls = MODEL_REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; choose from {sorted(MODEL_REGISTRY)}"
        ) from None
    return cls(**params)
