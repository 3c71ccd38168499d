"""Conformal and Bayesian confidence regions for kernel ridge regression."""

from .conformal import (
    NCM,
    CoverageProfile,
    PValue,
    ResidualKind,
    ResidualLine,
    brute_force_membership,
    brute_force_region,
    conformal_p_value,
    conformal_region,
    crr_region,
    default_oracle_grid,
    regions_agree,
    residual_line,
    residual_line_matrices,
    residual_lines,
    rrcm_region,
)
from .errors import (
    AllPointsFailed,
    ConformaError,
    DimensionMismatch,
    EmptyRegion,
    InvalidAlpha,
    InvalidProbability,
    MissingLevel,
    NotPositiveDefinite,
    UnknownFunction,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    coverage_and_width,
    mad,
    run_experiment,
    sample_gp_path,
    test_function,
)
from .gpr import (
    GPRPrediction,
    MLEResult,
    gpr_interval,
    gpr_posterior,
    log_marginal_likelihood,
    mle_theta,
    profile_sigma2,
    std_normal_quantile,
)
from .kernel import Dataset, KernelParams, cross_gram, eval_kernel, gram
from .krr import (
    FittedKRR,
    krr_fit,
    krr_predict,
    leverage,
    residuals_in_sample,
    residuals_loo,
)
from .linalg import CholFactor, cholesky_factorize, log_det, solve_spd, spd_inverse_diagonal
from .region import ConfidenceRegion, region_contains, region_hull_width

__version__ = "0.1.0"
