"""Survey-weighted Bayesian inference with a post-hoc curvature adjustment.

Fits weighted pseudo-posteriors by MCMC and rescales the draws so their
covariance matches the sandwich (Godambe) asymptotic covariance implied
by the survey design, estimated via replicate weights.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .adjust import (
    AdjustmentResult,
    adjust_draws,
    estimate_H,
    estimate_J,
    score_at,
    sqrt_spd,
)
from .design import (
    ReplicateDesign,
    SurveyDesign,
    build_replicates,
    ht_mean,
    normalize_weights,
    replicate_covariance,
    tl_variance_mean,
)
from .models import (
    BernoulliLogit,
    ModelFamily,
    MultinomialGamma,
    NormalLinear,
    ParameterSpace,
)
from .pipeline import FitConfig, FitResult, export_pairs_data, fit, summarize
from .sampler import (
    DrawsMatrix,
    SamplerControl,
    mcmc_diagnostics,
    sample_pseudo_posterior,
)
from .simulate import SimScenario, coverage_study, draw_sample, generate_population

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "AdjustmentResult",
    "BernoulliLogit",
    "DrawsMatrix",
    "FitConfig",
    "FitResult",
    "ModelFamily",
    "MultinomialGamma",
    "NormalLinear",
    "ParameterSpace",
    "ReplicateDesign",
    "SamplerControl",
    "SimScenario",
    "SurveyDesign",
    "adjust_draws",
    "build_replicates",
    "coverage_study",
    "draw_sample",
    "estimate_H",
    "estimate_J",
    "export_pairs_data",
    "fit",
    "generate_population",
    "ht_mean",
    "mcmc_diagnostics",
    "normalize_weights",
    "replicate_covariance",
    "sample_pseudo_posterior",
    "score_at",
    "sqrt_spd",
    "summarize",
    "tl_variance_mean",
]
