"""Bayesian binary classification with Besov-Laplace wavelet priors."""

from .errors import (
    BesovError,
    ConfigurationError,
    DomainError,
    NumericError,
    ShapeError,
    StudyError,
    UsageError,
)
from .experiment import (
    RateStudyConfig,
    RateStudyResult,
    compare_priors,
    fit_slope,
    l2_error,
    run_rate_study,
)
from .inference import (
    ChainOptions,
    ChainResult,
    MapOptions,
    MapResult,
    map_estimate,
    posterior_mean,
    run_pcn,
    unwhiten,
    whiten,
)
from .link import log_logistic, logistic, logit
from .model import Dataset, MuSpec, build_cache, grad_log_likelihood, log_likelihood, make_truth, simulate
from .prior import (
    BesovNormQuery,
    PriorSpec,
    besov_norm,
    prior_scales,
    sample_prior,
    small_ball_estimate,
)
from .wavelet import (
    CoefficientVector,
    WaveletBasis,
    build_basis,
    evaluate_basis,
    forward_transform,
    inverse_transform,
    synthesize_at,
)

__version__ = "0.1.0"
