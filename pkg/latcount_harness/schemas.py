import hashlib
import json
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from latcount_core.errors import ConfigError
from latcount_core.settings import DEFAULT_TAIL_TOL
from latcount_estimation.latent_estimator import DiagMode
from latcount_model.link import DEFAULT_U_CLAMP
from latcount_model.marginals import FITTABLE, Family, MarginalSpec, make_spec


class CoefficientPattern(str, Enum):
    DIAGONAL = "diagonal"
    SPARSE_RANDOM = "sparse_random"
    EXPLICIT = "explicit"


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(ge=1, description="Latent dimension.")
    p: int = Field(default=1, ge=1, description="VAR order.")
    pattern: CoefficientPattern = Field(
        default=CoefficientPattern.DIAGONAL,
        description="How coefficients are generated: a_1 = magnitude * I, random sparse, or explicit.",
    )
    sparsity: Optional[int] = Field(
        default=None, ge=1, description="Number of nonzero coefficients for sparse_random."
    )
    magnitude: float = Field(default=0.3, description="Absolute value of generated coefficients.")
    coeffs: Optional[List[List[List[float]]]] = Field(
        default=None, description="Explicit coefficients A_1..A_p, shape (p, d, d)."
    )
    noise_scale: float = Field(default=1.0, gt=0.0, description="Noise covariance is noise_scale * I.")
    noise_cov: Optional[List[List[float]]] = Field(
        default=None, description="Explicit noise covariance; overrides noise_scale."
    )

    @model_validator(mode="after")
    def _check_pattern(self):
        if self.pattern == CoefficientPattern.EXPLICIT:
            if self.coeffs is None:
                raise ValueError("pattern 'explicit' needs coeffs")
            shape_ok = len(self.coeffs) == self.p and all(
                len(a) == self.d and all(len(row) == self.d for row in a) for a in self.coeffs
            )
            if not shape_ok:
                raise ValueError(f"coeffs must have shape ({self.p}, {self.d}, {self.d})")
        if self.pattern == CoefficientPattern.SPARSE_RANDOM and self.sparsity is None:
            raise ValueError("pattern 'sparse_random' needs sparsity")
        if self.noise_cov is not None and (
            len(self.noise_cov) != self.d or any(len(row) != self.d for row in self.noise_cov)
        ):
            raise ValueError(f"noise_cov must be {self.d}x{self.d}")
        return self

    @property
    def n_nonzero(self) -> int:
        if self.pattern == CoefficientPattern.DIAGONAL:
            return self.d if self.magnitude != 0.0 else 0
        if self.pattern == CoefficientPattern.SPARSE_RANDOM:
            return self.sparsity
        return sum(1 for a in self.coeffs for row in a for v in row if v != 0.0)


class ConstantsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = Field(default=False, description="Compute bound constants once per N.")
    eps: float = Field(default=0.0, ge=0.0, description="Parameter box radius.")
    delta_tilde: float = Field(default=0.0, ge=0.0)
    eps_tilde: float = Field(default=0.0, ge=0.0)
    grid: int = Field(default=5, ge=1, description="Grid points per parameter axis.")


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    results: Optional[str] = Field(default=None, description="Per-row results CSV.")
    summary: Optional[str] = Field(default=None, description="Median/IQR summary CSV.")
    failures: Optional[str] = Field(default=None, description="Failed cells CSV.")
    constants: Optional[str] = Field(default=None, description="Bound constants CSV.")


class ExperimentConfig(BaseModel):
    """
    Monte Carlo sweep over an N grid.

    threads and output do not enter the config hash: they change neither the
    numbers nor their order.
    """

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig
    marginals: List[MarginalSpec] = Field(
        min_length=1, description="One marginal per dimension, or one broadcast to all."
    )
    n_grid: List[int] = Field(min_length=1, description="Effective sample sizes N = T - L.")
    replicates: int = Field(default=1, ge=1)
    master_seed: int = Field(default=0, ge=0)
    lambda_grid: Optional[List[float]] = Field(
        default=None, description="LASSO penalties; default is a geometric grid per N."
    )
    L: Optional[int] = Field(default=None, ge=1, description="Lag blocks; defaults to p.")
    diag_mode: DiagMode = Field(default=DiagMode.ESTIMATE_CLAMPED)
    norm_s: int = Field(default=1, ge=1, description="Sparsity of the reported sparse-norm error.")
    norm_mode: str = Field(default="auto", description="exact, heuristic or auto.")
    plug_in_truth: bool = Field(
        default=False, description="Use the true marginals instead of moment fits."
    )
    tail_tol: float = Field(default=DEFAULT_TAIL_TOL, gt=0.0)
    u_clamp: float = Field(default=DEFAULT_U_CLAMP, gt=0.0, lt=1.0)
    lasso_tol: float = Field(default=1e-9, gt=0.0)
    lasso_max_iter: int = Field(default=100000, ge=1)
    constants: ConstantsConfig = Field(default_factory=ConstantsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    threads: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_experiment(self):
        if any(n < 1 for n in self.n_grid):
            raise ValueError("n_grid entries must be positive")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if len(self.marginals) not in (1, self.model.d):
            raise ValueError(f"need 1 or {self.model.d} marginals, got {len(self.marginals)}")
        q = self.model.p * self.model.d**2
        if self.model.n_nonzero > q:
            raise ValueError(f"sparsity {self.model.n_nonzero} exceeds p*d^2 = {q}")
        if self.L is not None and self.L < self.model.p:
            raise ValueError(f"L={self.L} must be at least p={self.model.p}")
        if self.lambda_grid is not None and (
            not self.lambda_grid or any(lam < 0.0 for lam in self.lambda_grid)
        ):
            raise ValueError("lambda_grid must be nonempty and nonnegative")
        if self.norm_mode not in ("exact", "heuristic", "auto"):
            raise ValueError(f"unknown norm_mode {self.norm_mode!r}")
        if not self.plug_in_truth:
            unfit = {m.family.value for m in self.marginals if m.family not in FITTABLE}
            if unfit:
                raise ValueError(
                    f"families {sorted(unfit)} cannot be fitted; set plug_in_truth"
                )
        return self

    @property
    def lags(self) -> int:
        return self.L if self.L is not None else self.model.p

    @property
    def specs(self) -> List[MarginalSpec]:
        if len(self.marginals) == 1:
            return list(self.marginals) * self.model.d
        return list(self.marginals)

    @property
    def families(self) -> List[Family]:
        return [spec.family for spec in self.specs]

    @property
    def known(self) -> List[Dict[str, int]]:
        return [
            {k: v for k, v in (("n_trials", s.n_trials), ("r", s.r)) if v is not None}
            for s in self.specs
        ]

    def canonical_json(self) -> str:
        payload = self.model_dump(mode="json", by_alias=True, exclude={"threads", "output"})
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]


class ExperimentResult(BaseModel):
    config_hash: str
    rows: List[Dict[str, Any]] = Field(description="One row per (N, replicate, lambda).")
    summary: List[Dict[str, Any]] = Field(description="Median and IQR per (N, lambda, metric).")
    failures: List[Dict[str, Any]] = Field(default_factory=list)
    constants: List[Dict[str, Any]] = Field(default_factory=list)


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def parse_marginal(text: str) -> MarginalSpec:
    """
    Parse "family:key=value,key=value"; list values use '|'.

    Examples: "poisson:lambda=2", "binomial:n_trials=5,p=0.3",
    "mixture_poisson:weights=0.3|0.7,lambdas=1|4".
    """
    family, _, rest = text.partition(":")
    params: Dict[str, Any] = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"cannot parse marginal parameter {item!r} in {text!r}")
        key = key.strip()
        key = "lam" if key == "lambda" else key
        if key in ("weights", "lambdas"):
            params[key] = tuple(float(v) for v in value.split("|"))
        elif key in ("n_trials", "r"):
            params[key] = int(value)
        else:
            params[key] = float(value)
    try:
        return make_spec(family.strip(), **params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
