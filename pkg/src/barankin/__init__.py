"""Vector Barankin covariance lower bounds."""

__version__ = "0.1.0"

from .bounds import (
    BoundMatrix,
    MomentMatrices,
    b0_compatibility_check,
    bound_V,
    bound_W,
    compute_B,
    compute_G,
    crb_limit,
    deflate_dependent,
    lambda0,
)
from .errors import (
    BarankinError,
    ConfigError,
    DiagnosticsError,
    DimensionError,
    DomainError,
    InvalidInputError,
    ModeError,
    PostulateViolationError,
    RankDeficiencyError,
    SupportError,
)
from .estimator import EfficiencyCertificate, SpanEstimator, Verdict, certify_efficiency, construct_estimator
from .mc import (
    McConfig,
    McEstimate,
    empirical_bias,
    empirical_cov,
    empirical_gram,
    exact_unbiased_polytope,
    gram_convergence_experiment,
)
from .models import BernoulliN, ExponentialRate, GaussianMean, GaussianMeanVector, Model, build_model
from .psd import (
    Order,
    Tolerance,
    is_snnd,
    k_identity_dominates,
    lambda_max,
    loewner_compare,
    psd_limit_check,
    rayleigh_reduction,
    weighted_cauchy_schwarz,
)
from .search import Boundedness, SearchConfig, SearchReport, search_msup
