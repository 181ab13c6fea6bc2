"""Exception types shared across the package."""

from __future__ import annotations


class BarankinError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(BarankinError, ValueError):
    """Non-finite, asymmetric or otherwise malformed numerical input."""


class DimensionError(BarankinError, ValueError):
    """Operands have incompatible shapes."""


class RankDeficiencyError(BarankinError, ArithmeticError):
    """A matrix that must be invertible is numerically singular."""

    def __init__(self, message: str, *, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values


class DomainError(BarankinError, ValueError):
    """A parameter point lies outside the model's admissible box."""


class SupportError(BarankinError, ValueError):
    """A sample lies outside the support of the true distribution."""


class ModeError(BarankinError, TypeError):
    """Operation not available for the model's moment mode."""


class PostulateViolationError(BarankinError, ArithmeticError):
    """The likelihood-ratio product has infinite expectation.

    Raised when E[pi(theta1) pi(theta2)] diverges, i.e. the likelihood
    ratios are not square integrable under the true distribution. The
    offending pair is kept so callers (the search) can prune it.
    """

    def __init__(self, theta1, theta2, detail: str = ""):
        self.theta1 = theta1
        self.theta2 = theta2
        msg = (
            "square-integrability postulate violated: "
            f"E[pi({_fmt(theta1)}) pi({_fmt(theta2)})] is infinite"
        )
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DiagnosticsError(BarankinError, RuntimeError):
    """Monte Carlo estimates overflowed or are otherwise unusable."""


class ConfigError(BarankinError, ValueError):
    """Run configuration cannot be parsed or validated."""


def _fmt(theta) -> str:
    try:
        vals = [float(v) for v in theta]
    except TypeError:
        return f"{float(theta):g}"
    if len(vals) == 1:
        return f"{vals[0]:g}"
    return "(" + ", ".join(f"{v:g}" for v in vals) + ")"
