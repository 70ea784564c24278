"""
latcount harness package

Experiment configuration, Monte Carlo sweeps, CSV output and the command line.
"""

from .logger_config import get_logger, LoggerConfig
from .schemas import (
    CoefficientPattern,
    ModelConfig,
    ConstantsConfig,
    OutputConfig,
    ExperimentConfig,
    ExperimentResult,
    load_config,
    parse_config,
    parse_marginal,
)
from .experiment import (
    RateFit,
    ExperimentRunner,
    build_model,
    run_experiment,
    replay_cell,
    summarize,
    rate_fit,
    fit_log_log,
)

__all__ = [
    "get_logger",
    "LoggerConfig",
    "CoefficientPattern",
    "ModelConfig",
    "ConstantsConfig",
    "OutputConfig",
    "ExperimentConfig",
    "ExperimentResult",
    "load_config",
    "parse_config",
    "parse_marginal",
    "RateFit",
    "ExperimentRunner",
    "build_model",
    "run_experiment",
    "replay_cell",
    "summarize",
    "rate_fit",
    "fit_log_log",
]
