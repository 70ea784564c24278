"""
latcount estimation package

Sample and theoretical block autocovariances, the plug-in latent estimator,
constants of the concentration bounds, and the sparse VAR LASSO.
"""

from .logger_config import get_logger, LoggerConfig
from .acvf import (
    BlockAcvf,
    SparseNorm,
    block_toeplitz,
    sample_block_acvf,
    theoretical_count_acvf,
    sparse_norm,
)
from .latent_estimator import (
    DiagMode,
    LatentEstimate,
    RecoveryError,
    estimate_latent_acvf,
    recovery_error,
)
from .bounds import (
    MomentSuprema,
    BoundConstants,
    VarBounds,
    moment_suprema,
    c_of_delta,
    q_of_gamma,
    mu_max,
    var_bound_quantities,
)
from .sparse_var import (
    LassoProblem,
    LassoSolution,
    RECheck,
    LassoErrorBounds,
    SupportMetrics,
    coeffs_to_beta,
    beta_to_coeffs,
    build_problem,
    problem_from_estimate,
    project_psd,
    lasso_solve,
    objective,
    kkt_residual,
    check_re,
    deviation_check,
    lasso_error_bounds,
    default_lambda_grid,
    support_metrics,
)

__all__ = [
    "get_logger",
    "LoggerConfig",
    "BlockAcvf",
    "SparseNorm",
    "block_toeplitz",
    "sample_block_acvf",
    "theoretical_count_acvf",
    "sparse_norm",
    "DiagMode",
    "LatentEstimate",
    "RecoveryError",
    "estimate_latent_acvf",
    "recovery_error",
    "MomentSuprema",
    "BoundConstants",
    "VarBounds",
    "moment_suprema",
    "c_of_delta",
    "q_of_gamma",
    "mu_max",
    "var_bound_quantities",
    "LassoProblem",
    "LassoSolution",
    "RECheck",
    "LassoErrorBounds",
    "SupportMetrics",
    "coeffs_to_beta",
    "beta_to_coeffs",
    "build_problem",
    "problem_from_estimate",
    "project_psd",
    "lasso_solve",
    "objective",
    "kkt_residual",
    "check_re",
    "deviation_check",
    "lasso_error_bounds",
    "default_lambda_grid",
    "support_metrics",
]
