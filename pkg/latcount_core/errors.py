"""Exception hierarchy shared by every latcount package."""

from typing import Optional


class LatCountError(Exception):
    """Base class for all latcount errors."""


class ParameterDomainError(LatCountError, ValueError):
    """Invalid marginal parameters or an invalid VAR model."""


class DomainError(LatCountError, ValueError):
    """Argument outside the domain of an operation."""


class TruncationError(LatCountError):
    """A truncated series hit its hard cap before reaching the tail tolerance."""

    def __init__(self, message: str, tail_mass: float, n_terms: int):
        super().__init__(f"{message} (tail mass {tail_mass:.3e} after {n_terms} terms)")
        self.tail_mass = tail_mass
        self.n_terms = n_terms


class UnsupportedFitError(LatCountError, ValueError):
    """Parameter fitting is not available for this family."""


class DegenerateMarginalError(LatCountError, ValueError):
    """An observed column carries no variation."""


class AccuracyError(LatCountError):
    """Numerical integration did not reach the requested accuracy."""

    def __init__(self, message: str, estimate: float, abs_error: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate
        self.abs_error = abs_error


class HermiteOverflowError(LatCountError, OverflowError):
    """Hermite recurrence left the representable range."""


class NonCausalError(LatCountError, ValueError):
    """The VAR model has companion spectral radius at or above one."""


class DegenerateModelError(LatCountError, ValueError):
    """A latent component has zero stationary variance."""


class InsufficientDataError(LatCountError, ValueError):
    pass


class DimensionMismatchError(LatCountError, ValueError):
    pass


class BudgetError(LatCountError):
    """Exact enumeration would exceed the allowed number of subsets."""


class IndefiniteProblemError(LatCountError):
    """Coordinate descent increased the objective; the quadratic form is indefinite."""


class RateFitError(LatCountError, ValueError):
    pass


class ConfigError(LatCountError, ValueError):
    pass
