"""
latcount core package

Shared plumbing for the latcount packages: centralized logging, the error
hierarchy, environment settings and small utilities.
"""

from .logging import get_latcount_logger, LatCountLoggerConfig
from .errors import LatCountError
from .utils import measure_time, ordered_map, derive_seed, make_rng

__all__ = [
    "get_latcount_logger",
    "LatCountLoggerConfig",
    "LatCountError",
    "measure_time",
    "ordered_map",
    "derive_seed",
    "make_rng",
]
