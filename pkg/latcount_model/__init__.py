"""
latcount model package

Count marginals, link functions between latent correlation and count
covariance, and the latent causal VAR process.
"""

from .logger_config import get_logger, LoggerConfig
from .marginals import (
    Family,
    MarginalSpec,
    ThresholdTable,
    M3Series,
    MarginalFit,
    make_spec,
    pmf,
    cdf,
    sf,
    quantile,
    cdf_grad,
    threshold_table,
    moment_m,
    moment_mu,
    delta_big,
    m3_series,
    m3_series_sweep,
    theta_box,
    family_variance,
    tail_sum_inequality,
    fit_theta,
)
from .link import (
    LinkContext,
    HermiteCoeffs,
    link_context,
    link_eval,
    link_deriv,
    link_deriv2,
    link_at_one,
    link_invert,
    link_invert_diagonal,
    inverse_link_derivs,
    hermite_coeff,
    hermite_coeffs,
    hermite_series_link,
)
from .var_model import (
    VarModel,
    LatentAcvf,
    CausalityCheck,
    check_causal,
    stationary_acvf,
    standardize,
    simulate,
    transform_counts,
    spectral_density,
)

__all__ = [
    "get_logger",
    "LoggerConfig",
    "Family",
    "MarginalSpec",
    "ThresholdTable",
    "M3Series",
    "MarginalFit",
    "make_spec",
    "pmf",
    "cdf",
    "sf",
    "quantile",
    "cdf_grad",
    "threshold_table",
    "moment_m",
    "moment_mu",
    "delta_big",
    "m3_series",
    "m3_series_sweep",
    "theta_box",
    "family_variance",
    "tail_sum_inequality",
    "fit_theta",
    "LinkContext",
    "HermiteCoeffs",
    "link_context",
    "link_eval",
    "link_deriv",
    "link_deriv2",
    "link_at_one",
    "link_invert",
    "link_invert_diagonal",
    "inverse_link_derivs",
    "hermite_coeff",
    "hermite_coeffs",
    "hermite_series_link",
    "VarModel",
    "LatentAcvf",
    "CausalityCheck",
    "check_causal",
    "stationary_acvf",
    "standardize",
    "simulate",
    "transform_counts",
    "spectral_density",
]
