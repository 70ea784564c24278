"""
Count marginal distributions.

CDF, survival function, quantile and pmf for the supported families, analytic
parameter gradients of the CDF, threshold tables Q_n = Phi^{-1}(C_n), the
threshold moments m^(k), mu^(k) and Delta, and the tail-series checks used to
decide whether those moments stay bounded.
"""

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import special, stats

from latcount_core.errors import (
    DomainError,
    ParameterDomainError,
    TruncationError,
    UnsupportedFitError,
)
from latcount_core.settings import DEFAULT_TAIL_TOL

from .logger_config import get_logger

logger = get_logger(__name__)

N_MAX_CAP = 10**6
CMP_TERM_CAP = 10**5
CMP_REL_TOL = 1e-16
QUANTILE_TAIL_TOL = 1e-17
FIT_MARGIN = 1e-6
WEIGHT_SUM_TOL = 1e-12
SQRT_2PI = math.sqrt(2.0 * math.pi)


class Family(str, Enum):
    BERNOULLI = "bernoulli"
    BINOMIAL = "binomial"
    POISSON = "poisson"
    NEGBINOMIAL = "negbinomial"
    MIXTURE_POISSON = "mixture_poisson"
    CMP = "cmp"


FITTABLE = (Family.BERNOULLI, Family.BINOMIAL, Family.POISSON, Family.NEGBINOMIAL)

_REQUIRED = {
    Family.BERNOULLI: ("p",),
    Family.BINOMIAL: ("n_trials", "p"),
    Family.POISSON: ("lam",),
    Family.NEGBINOMIAL: ("r", "p"),
    Family.MIXTURE_POISSON: ("weights", "lambdas"),
    Family.CMP: ("lam", "nu"),
}


class MarginalSpec(BaseModel):
    """
    A count marginal: family plus parameters.

    theta holds the free parameters only; known constants (Binomial n_trials,
    NegBinomial r) are fields but not part of theta.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    family: Family = Field(description="Marginal family name.")
    p: Optional[float] = Field(default=None, description="Success probability.")
    n_trials: Optional[int] = Field(default=None, description="Binomial trial count.")
    lam: Optional[float] = Field(
        default=None, alias="lambda", description="Poisson or CMP rate."
    )
    r: Optional[int] = Field(default=None, description="NegBinomial size (known).")
    nu: Optional[float] = Field(default=None, description="CMP dispersion.")
    weights: Optional[Tuple[float, ...]] = Field(
        default=None, description="Mixture weights, summing to one."
    )
    lambdas: Optional[Tuple[float, ...]] = Field(
        default=None, description="Mixture component rates."
    )

    @model_validator(mode="after")
    def _check_domain(self):
        required = _REQUIRED[self.family]
        for name in ("p", "n_trials", "lam", "r", "nu", "weights", "lambdas"):
            value = getattr(self, name)
            if name in required and value is None:
                raise ValueError(f"{self.family.value} requires parameter '{name}'")
            if name not in required and value is not None:
                raise ValueError(f"{self.family.value} does not take parameter '{name}'")

        if self.p is not None and not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.n_trials is not None and self.n_trials < 1:
            raise ValueError(f"n_trials must be a positive integer, got {self.n_trials}")
        if self.r is not None and self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r}")
        if self.lam is not None and not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.nu is not None and not (self.nu > 0.0 and math.isfinite(self.nu)):
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.family == Family.MIXTURE_POISSON:
            if len(self.weights) == 0 or len(self.weights) != len(self.lambdas):
                raise ValueError("weights and lambdas must be nonempty and equally long")
            if any(w <= 0.0 for w in self.weights):
                raise ValueError("mixture weights must be strictly positive")
            if abs(math.fsum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("mixture weights must sum to 1")
            if any(not (lam > 0.0 and math.isfinite(lam)) for lam in self.lambdas):
                raise ValueError("mixture rates must be positive")
        return self

    # Convenience constructors raising ParameterDomainError on invalid input

    @classmethod
    def bernoulli(cls, p: float) -> "MarginalSpec":
        return make_spec(Family.BERNOULLI, p=p)

    @classmethod
    def binomial(cls, n_trials: int, p: float) -> "MarginalSpec":
        return make_spec(Family.BINOMIAL, n_trials=n_trials, p=p)

    @classmethod
    def poisson(cls, lam: float) -> "MarginalSpec":
        return make_spec(Family.POISSON, lam=lam)

    @classmethod
    def negbinomial(cls, r: int, p: float) -> "MarginalSpec":
        return make_spec(Family.NEGBINOMIAL, r=r, p=p)

    @classmethod
    def mixture_poisson(
        cls, weights: Sequence[float], lambdas: Sequence[float]
    ) -> "MarginalSpec":
        return make_spec(
            Family.MIXTURE_POISSON,
            weights=tuple(float(w) for w in weights),
            lambdas=tuple(float(v) for v in lambdas),
        )

    @classmethod
    def cmp(cls, lam: float, nu: float) -> "MarginalSpec":
        return make_spec(Family.CMP, lam=lam, nu=nu)

    @property
    def param_names(self) -> List[str]:
        if self.family in (Family.BERNOULLI, Family.BINOMIAL, Family.NEGBINOMIAL):
            return ["p"]
        if self.family == Family.POISSON:
            return ["lambda"]
        if self.family == Family.CMP:
            return ["lambda", "nu"]
        m = len(self.weights)
        return [f"w{i}" for i in range(m)] + [f"lambda{i}" for i in range(m)]

    @property
    def theta(self) -> np.ndarray:
        if self.family in (Family.BERNOULLI, Family.BINOMIAL, Family.NEGBINOMIAL):
            return np.array([self.p])
        if self.family == Family.POISSON:
            return np.array([self.lam])
        if self.family == Family.CMP:
            return np.array([self.lam, self.nu])
        return np.array(self.weights + self.lambdas)

    def with_theta(self, theta: Sequence[float]) -> "MarginalSpec":
        """Same family and known constants, new free parameters."""
        theta = [float(v) for v in theta]
        if len(theta) != len(self.param_names):
            raise DomainError(
                f"expected {len(self.param_names)} parameters, got {len(theta)}"
            )
        if self.family in (Family.BERNOULLI, Family.BINOMIAL, Family.NEGBINOMIAL):
            return make_spec(self.family, p=theta[0], n_trials=self.n_trials, r=self.r)
        if self.family == Family.POISSON:
            return make_spec(self.family, lam=theta[0])
        if self.family == Family.CMP:
            return make_spec(self.family, lam=theta[0], nu=theta[1])
        m = len(self.weights)
        return make_spec(
            self.family, weights=tuple(theta[:m]), lambdas=tuple(theta[m:])
        )

    def describe(self) -> str:
        names = {"lam": "lambda"}
        parts = [
            f"{names.get(k, k)}={v}"
            for k, v in self.model_dump(exclude_none=True, exclude={"family"}).items()
        ]
        return f"{self.family.value}({', '.join(parts)})"


def make_spec(family, **params) -> MarginalSpec:
    """Build a spec, turning validation failures into ParameterDomainError."""
    params = {k: v for k, v in params.items() if v is not None}
    try:
        return MarginalSpec(family=Family(family), **params)
    except (ValidationError, ValueError) as exc:
        raise ParameterDomainError(f"invalid {family} marginal: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ThresholdTable:
    """
    Q_n = Phi^{-1}(C_n) for n = 0..n_max.

    Saturated entries (C_n == 1 in floating point) are dropped; their Gaussian
    weight is exactly zero. tail_mass is 1 - C at the truncation point.
    """

    n_values: np.ndarray
    q_values: np.ndarray
    c_values: np.ndarray
    sf_values: np.ndarray
    tail_tol: float
    tail_mass: float
    n_max: int

    def __len__(self) -> int:
        return len(self.q_values)


@dataclass(frozen=True)
class M3Series:
    partial_sum: float
    converged: bool
    tail_ratio: float
    n_terms: int


@dataclass(frozen=True)
class MarginalFit:
    spec: MarginalSpec
    clipped: bool


@dataclass(frozen=True)
class TailSumCheck:
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True, eq=False)
class SupportTable:
    n: np.ndarray
    pmf: np.ndarray
    cdf: np.ndarray
    sf: np.ndarray


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _tail_sums(values: np.ndarray) -> np.ndarray:
    """t_n = sum_{k > n} values_k along the first axis."""
    rev = np.cumsum(values[::-1], axis=0)[::-1]
    zeros = np.zeros((1,) + values.shape[1:])
    return np.concatenate((rev[1:], zeros), axis=0)


def _finite_upper(spec: MarginalSpec) -> Optional[int]:
    if spec.family == Family.BERNOULLI:
        return 1
    if spec.family == Family.BINOMIAL:
        return spec.n_trials
    return None


def _scipy_dist(spec: MarginalSpec):
    if spec.family == Family.BERNOULLI:
        return stats.bernoulli(spec.p)
    if spec.family == Family.BINOMIAL:
        return stats.binom(spec.n_trials, spec.p)
    if spec.family == Family.POISSON:
        return stats.poisson(spec.lam)
    if spec.family == Family.NEGBINOMIAL:
        # number of failures before the r-th success
        return stats.nbinom(spec.r, spec.p)
    return None


@lru_cache(maxsize=256)
def _cmp_log_terms(lam: float, nu: float) -> np.ndarray:
    """Unnormalized log pmf terms k log(lam) - nu log(k!) up to truncation."""
    k_hi = 256
    log_tol = math.log(CMP_REL_TOL)
    while True:
        k = np.arange(k_hi, dtype=float)
        logs = k * math.log(lam) - nu * special.gammaln(k + 1.0)
        running = np.logaddexp.accumulate(logs)
        decreasing = np.diff(logs, prepend=np.inf) < 0
        done = np.flatnonzero((logs - running < log_tol) & decreasing)
        if done.size:
            logger.debug("CMP(%s, %s) truncated after %d terms", lam, nu, done[0] + 1)
            return _frozen(logs[: done[0] + 1])
        if k_hi >= CMP_TERM_CAP:
            raise TruncationError(
                f"CMP normalizing constant for lambda={lam}, nu={nu} did not converge",
                tail_mass=float(np.exp(logs[-1] - running[-1])),
                n_terms=k_hi,
            )
        k_hi = min(2 * k_hi, CMP_TERM_CAP)


def _cmp_pmf(spec: MarginalSpec) -> np.ndarray:
    logs = _cmp_log_terms(spec.lam, spec.nu)
    return np.exp(logs - special.logsumexp(logs))


def _mixture_values(spec: MarginalSpec, ns: np.ndarray, kind: str) -> np.ndarray:
    w = np.asarray(spec.weights)
    lams = np.asarray(spec.lambdas)
    func = getattr(stats.poisson, kind)
    return func(ns[:, None], lams[None, :]) @ w


def _values(spec: MarginalSpec, ns: np.ndarray, kind: str) -> np.ndarray:
    """Vectorized pmf/cdf/sf for integer ns (negative n allowed)."""
    ns = np.asarray(ns, dtype=np.int64)
    dist = _scipy_dist(spec)
    if dist is not None:
        return np.asarray(getattr(dist, kind)(ns), dtype=float)
    if spec.family == Family.MIXTURE_POISSON:
        return _mixture_values(spec, ns, kind)

    pmf = _cmp_pmf(spec)
    table = {
        "pmf": pmf,
        "cdf": np.minimum(np.cumsum(pmf), 1.0),
        "sf": _tail_sums(pmf),
    }[kind]
    beyond = {"pmf": 0.0, "cdf": 1.0, "sf": 0.0}[kind]
    below = {"pmf": 0.0, "cdf": 0.0, "sf": 1.0}[kind]
    out = np.full(ns.shape, beyond, dtype=float)
    inside = (ns >= 0) & (ns < len(pmf))
    out[inside] = table[ns[inside]]
    out[ns < 0] = below
    return out


def _check_n(n: int) -> int:
    if int(n) != n or n < -1:
        raise DomainError(f"n must be an integer >= -1, got {n}")
    return int(n)


def pmf(spec: MarginalSpec, n: int) -> float:
    return float(_values(spec, np.array([_check_n(n)]), "pmf")[0])


def cdf(spec: MarginalSpec, n: int) -> float:
    """
    P[X <= n]. n = -1 returns 0.

    :param spec: marginal
    :param n: integer >= -1
    """
    n = _check_n(n)
    if n < 0:
        return 0.0
    return float(_values(spec, np.array([n]), "cdf")[0])


def sf(spec: MarginalSpec, n: int) -> float:
    """P[X > n], computed directly rather than as 1 - cdf."""
    n = _check_n(n)
    if n < 0:
        return 1.0
    return float(_values(spec, np.array([n]), "sf")[0])


def cdf_values(spec: MarginalSpec, ns) -> np.ndarray:
    return _values(spec, np.asarray(ns), "cdf")


def sf_values(spec: MarginalSpec, ns) -> np.ndarray:
    return _values(spec, np.asarray(ns), "sf")


@lru_cache(maxsize=512)
def support_table(spec: MarginalSpec, tail_tol: float) -> SupportTable:
    """pmf/cdf/sf on n = 0..n_hi where n_hi is the first n with sf < tail_tol."""
    upper = _finite_upper(spec)
    if upper is not None:
        n_hi = upper
    elif spec.family == Family.CMP:
        n_hi = len(_cmp_log_terms(spec.lam, spec.nu)) - 1
    else:
        n_hi = 64
        while _values(spec, np.array([n_hi]), "sf")[0] >= tail_tol:
            if n_hi >= N_MAX_CAP:
                raise TruncationError(
                    f"{spec.describe()} tail did not fall below {tail_tol:g}",
                    tail_mass=float(_values(spec, np.array([n_hi]), "sf")[0]),
                    n_terms=n_hi + 1,
                )
            n_hi = min(2 * n_hi, N_MAX_CAP)

    ns = np.arange(n_hi + 1)
    tail = _values(spec, ns, "sf")
    below = np.flatnonzero(tail < tail_tol)
    if below.size:
        ns = ns[: below[0] + 1]
        tail = tail[: below[0] + 1]
    return SupportTable(
        n=_frozen(ns),
        pmf=_frozen(_values(spec, ns, "pmf")),
        cdf=_frozen(_values(spec, ns, "cdf")),
        sf=_frozen(tail),
    )


def quantile(spec: MarginalSpec, u: float) -> int:
    """Smallest x with F(x) >= u, for 0 < u < 1."""
    if not 0.0 < u < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {u}")
    return int(quantile_values(spec, np.array([u]))[0])


def quantile_values(spec: MarginalSpec, u: np.ndarray) -> np.ndarray:
    """Unchecked vectorized quantile; levels at or beyond the table end map to its last n."""
    table = support_table(spec, QUANTILE_TAIL_TOL)
    idx = np.searchsorted(table.cdf, np.asarray(u, dtype=float), side="left")
    return table.n[np.minimum(idx, len(table.n) - 1)]


@lru_cache(maxsize=256)
def _nb_tail_table(r: int, p: float) -> SupportTable:
    return support_table(make_spec(Family.NEGBINOMIAL, r=r, p=p), 1e-300)


def _grad_values(
    spec: MarginalSpec, ns: np.ndarray, include_fixed: bool, tail: bool
) -> np.ndarray:
    """
    Gradient of C_n (tail=False) or of P[X > n] (tail=True) for every n in ns,
    shape (len(ns), K). Tail gradients use direct tail sums where a cumulative
    form would cancel.
    """
    ns = np.asarray(ns, dtype=np.int64)
    sign = -1.0 if tail else 1.0
    fam = spec.family

    if fam in (Family.BERNOULLI, Family.BINOMIAL):
        big_n = _finite_upper(spec)
        g = -big_n * stats.binom.pmf(ns, big_n - 1, spec.p)
        return sign * g[:, None]

    if fam == Family.POISSON:
        return sign * (-stats.poisson.pmf(ns, spec.lam))[:, None]

    if fam == Family.NEGBINOMIAL:
        r, p = spec.r, spec.p
        safe = np.maximum(ns, 0)
        g_p = np.exp(
            (r - 1) * math.log(p) + safe * math.log1p(-p) - special.betaln(r, safe + 1)
        )
        g_p[ns < 0] = 0.0
        cols = [sign * g_p]
        if include_fixed:
            table = _nb_tail_table(r, p)
            k = table.n.astype(float)
            weight = table.pmf * (special.digamma(k + r) - special.digamma(r) + math.log(p))
            acc = -_tail_sums(weight) if tail else np.cumsum(weight)
            cols.append(_lookup(acc, ns, below=0.0, beyond=0.0))
        return np.column_stack(cols)

    if fam == Family.MIXTURE_POISSON:
        w = np.asarray(spec.weights)
        lams = np.asarray(spec.lambdas)
        n2 = ns[:, None]
        g_w = stats.poisson.sf(n2, lams) if tail else stats.poisson.cdf(n2, lams)
        g_l = sign * (-w * stats.poisson.pmf(n2, lams))
        return np.hstack((g_w, g_l))

    # CMP
    probs = _cmp_pmf(spec)
    k = np.arange(len(probs), dtype=float)
    log_fact = special.gammaln(k + 1.0)
    mean = float(probs @ k)
    mean_log_fact = float(probs @ log_fact)
    if tail:
        g_lam = _tail_sums((k - mean) * probs) / spec.lam
        g_nu = _tail_sums(probs * (mean_log_fact - log_fact))
    else:
        c = np.cumsum(probs)
        g_lam = (np.cumsum(k * probs) - c * mean) / spec.lam
        g_nu = -np.cumsum(probs * log_fact) + c * mean_log_fact
    return np.column_stack(
        (
            _lookup(g_lam, ns, below=0.0, beyond=0.0),
            _lookup(g_nu, ns, below=0.0, beyond=0.0),
        )
    )


def _lookup(table: np.ndarray, ns: np.ndarray, below: float, beyond: float) -> np.ndarray:
    out = np.full(ns.shape, beyond, dtype=float)
    inside = (ns >= 0) & (ns < len(table))
    out[inside] = table[ns[inside]]
    out[ns < 0] = below
    return out


def cdf_grad(spec: MarginalSpec, n: int, include_fixed: bool = False) -> np.ndarray:
    """
    Analytic gradient of C_n with respect to theta.

    Args:
        spec: marginal
        n: integer >= -1 (n = -1 gives zeros)
        include_fixed: for NegBinomial also append the derivative in r

    Returns:
        Vector of length len(theta) (+1 for NegBinomial with include_fixed).
    """
    n = _check_n(n)
    return _grad_values(spec, np.array([n]), include_fixed, tail=False)[0]


def cdf_grad_values(spec: MarginalSpec, ns, include_fixed: bool = False) -> np.ndarray:
    return _grad_values(spec, np.asarray(ns), include_fixed, tail=False)


def sf_grad_values(spec: MarginalSpec, ns, include_fixed: bool = False) -> np.ndarray:
    return _grad_values(spec, np.asarray(ns), include_fixed, tail=True)


@lru_cache(maxsize=512)
def threshold_table(spec: MarginalSpec, tail_tol: float = DEFAULT_TAIL_TOL) -> ThresholdTable:
    """
    Thresholds Q_n = Phi^{-1}(C_n) up to the first n with 1 - C_n < tail_tol.

    Above the median Q_n is taken as -Phi^{-1}(P[X > n]) so that upper
    thresholds keep full relative accuracy.
    """
    if not 0.0 < tail_tol < 1.0:
        raise DomainError(f"tail_tol must lie in (0, 1), got {tail_tol}")
    sup = support_table(spec, tail_tol)
    c = sup.cdf
    tail = sup.sf
    with np.errstate(divide="ignore"):
        q = np.where(c <= 0.5, special.ndtri(c), -special.ndtri(tail))
    finite = np.isfinite(q)
    n_values = sup.n[finite]
    table = ThresholdTable(
        n_values=_frozen(n_values.copy()),
        q_values=_frozen(q[finite].copy()),
        c_values=_frozen(c[finite].copy()),
        sf_values=_frozen(tail[finite].copy()),
        tail_tol=tail_tol,
        tail_mass=float(tail[-1]),
        n_max=int(n_values[-1]) if n_values.size else -1,
    )
    logger.debug(
        "Threshold table for %s: %d entries, tail mass %.3e",
        spec.describe(),
        len(table),
        table.tail_mass,
    )
    return table


def moment_m(spec: MarginalSpec, k: int, u: float, tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """m^(k)(u) = (2 pi)^{-1/2} sum_n exp(-Q_n^2 / (2u)) |Q_n|^k."""
    if k < 0 or not u > 0.0:
        raise DomainError(f"moment_m needs k >= 0 and u > 0, got k={k}, u={u}")
    q = threshold_table(spec, tail_tol).q_values
    return float(np.sum(np.exp(-(q**2) / (2.0 * u)) * np.abs(q) ** k) / SQRT_2PI)


def moment_mu(spec: MarginalSpec, k: int, u: float, tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """
    mu^(k)(u) = (2 pi)^{-1/2} sum_n exp(-Q_n^2 / (2u)) |Q_n|^k ||grad Q_n||_1
    with grad Q_n = grad C_n / phi(Q_n).

    The Gaussian factors are combined into exp(Q_n^2 (1 - 1/u) / 2) so that
    large thresholds do not overflow through 1 / phi(Q_n).
    """
    if k < 0 or not u > 0.0:
        raise DomainError(f"moment_mu needs k >= 0 and u > 0, got k={k}, u={u}")
    table = threshold_table(spec, tail_tol)
    q = table.q_values
    grad_l1 = np.abs(cdf_grad_values(spec, table.n_values)).sum(axis=1)
    weight = np.exp(0.5 * q**2 * (1.0 - 1.0 / u))
    return float(np.sum(weight * np.abs(q) ** k * grad_l1))


def delta_big(spec: MarginalSpec, tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """Delta = sum_n n ||grad C_n||_1 over the truncated support."""
    ns = support_table(spec, tail_tol).n
    grad_l1 = np.abs(cdf_grad_values(spec, ns)).sum(axis=1)
    return float(np.sum(ns * grad_l1))


def m3_series(spec: MarginalSpec, n_cap: int = 500, block: int = 10) -> M3Series:
    """
    Partial sums of sum_n P[X > n]^{-1/2} sum_j |d P[X > n] / d theta_j|.

    NegBinomial includes the r-derivative. Convergence is declared when the
    two latest block-sum ratios are below 0.9 and the latest term is below
    1e-12; finite supports converge trivially.
    """
    if n_cap < 1:
        raise DomainError(f"n_cap must be >= 1, got {n_cap}")

    upper = _finite_upper(spec)
    last = upper - 1 if upper is not None else n_cap
    ns = np.arange(last + 1)
    tail = sf_values(spec, ns)
    grads = np.abs(sf_grad_values(spec, ns, include_fixed=True)).sum(axis=1)
    positive = tail > 0.0
    terms = np.zeros(len(ns))
    terms[positive] = grads[positive] / np.sqrt(tail[positive])

    if upper is not None:
        return M3Series(float(terms.sum()), True, 0.0, len(ns))

    ratio = float("nan")
    below_count = 0
    prev = None
    for start in range(0, len(terms), block):
        chunk = terms[start : start + block]
        current = float(chunk.sum())
        if prev is not None:
            ratio = current / prev if prev > 0.0 else 0.0
            below_count = below_count + 1 if ratio < 0.9 else 0
            if below_count >= 2 and chunk[-1] < 1e-12:
                end = start + len(chunk)
                return M3Series(float(terms[:end].sum()), True, ratio, end)
        prev = current

    logger.warning(
        "M3 series for %s not converged after %d terms (ratio %.3f)",
        spec.describe(),
        len(terms),
        ratio,
    )
    return M3Series(float(terms.sum()), False, ratio, len(terms))


def m3_series_sweep(
    spec: MarginalSpec, n_cap: int = 500, eps: float = 0.0, grid: int = 1
) -> M3Series:
    """Worst (largest) M3 partial sum over the eps-box grid around theta."""
    results = [m3_series(point, n_cap) for point in theta_box(spec, eps, grid)]
    worst = max(results, key=lambda res: res.partial_sum)
    return M3Series(
        partial_sum=worst.partial_sum,
        converged=all(res.converged for res in results),
        tail_ratio=worst.tail_ratio,
        n_terms=worst.n_terms,
    )


def theta_box(spec: MarginalSpec, eps: float, grid: int = 5) -> List[MarginalSpec]:
    """
    Tensor grid of specs with ||theta' - theta||_max <= eps.

    Mixture weights stay on the simplex: the last weight absorbs the slack of
    the others. grid == 1 or eps == 0 gives [spec].
    """
    if eps < 0.0 or grid < 1:
        raise DomainError(f"eps must be >= 0 and grid >= 1, got eps={eps}, grid={grid}")
    if eps == 0.0 or grid == 1:
        return [spec]

    theta = spec.theta
    free = list(range(len(theta)))
    if spec.family == Family.MIXTURE_POISSON:
        free.remove(len(spec.weights) - 1)
    axes = [np.linspace(theta[i] - eps, theta[i] + eps, grid) for i in free]

    points = []
    for combo in itertools.product(*axes):
        point = theta.copy()
        point[free] = combo
        if spec.family == Family.MIXTURE_POISSON:
            m = len(spec.weights)
            point[m - 1] = 1.0 - point[: m - 1].sum()
        try:
            points.append(spec.with_theta(point))
        except ParameterDomainError as exc:
            raise DomainError(
                f"eps-box of radius {eps} around {spec.describe()} leaves the parameter domain"
            ) from exc
    return points


def family_variance(spec: MarginalSpec) -> float:
    fam = spec.family
    if fam == Family.BERNOULLI:
        return spec.p * (1.0 - spec.p)
    if fam == Family.BINOMIAL:
        return spec.n_trials * spec.p * (1.0 - spec.p)
    if fam == Family.POISSON:
        return spec.lam
    if fam == Family.NEGBINOMIAL:
        return spec.r * (1.0 - spec.p) / spec.p**2
    if fam == Family.MIXTURE_POISSON:
        w = np.asarray(spec.weights)
        lams = np.asarray(spec.lambdas)
        mean = float(w @ lams)
        return float(w @ (lams + lams**2)) - mean**2
    return raw_moment(spec, 2) - raw_moment(spec, 1) ** 2


def raw_moment(spec: MarginalSpec, order: int) -> float:
    """E[X^order] by truncated summation."""
    sup = support_table(spec, QUANTILE_TAIL_TOL)
    return float(np.sum(sup.n.astype(float) ** order * sup.pmf))


def tail_sum_inequality(spec: MarginalSpec) -> TailSumCheck:
    """
    Both sides of sum_n P[X > n]^{1/2} <= sqrt(pi^2 / 6) E[X^3]^{1/2} + 1,
    valid for any nonnegative integer random variable.
    """
    sup = support_table(spec, 1e-30)
    lhs = float(np.sum(np.sqrt(sup.sf)))
    rhs = math.sqrt(math.pi**2 / 6.0) * math.sqrt(raw_moment(spec, 3)) + 1.0
    return TailSumCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs)


def fit_theta(
    samples,
    family,
    n_trials: Optional[int] = None,
    r: Optional[int] = None,
) -> MarginalFit:
    """
    Moment estimate of theta from one observed column.

    The estimate is clipped into the open parameter domain with margin 1e-6;
    clipping is logged and reported through MarginalFit.clipped.

    :param samples: nonempty integer sequence
    :param family: one of bernoulli, binomial (n_trials known), poisson,
        negbinomial (r known)
    """
    family = Family(family)
    if family not in FITTABLE:
        raise UnsupportedFitError(f"fitting is not supported for {family.value}")

    x = np.asarray(samples)
    if x.size == 0:
        raise DomainError("cannot fit a marginal to an empty sample")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise DomainError("samples must be nonnegative integers")
    mean = float(x.mean())

    if family == Family.BERNOULLI:
        if np.any(x > 1):
            raise DomainError("Bernoulli samples must be 0 or 1")
        raw = {"p": mean}
    elif family == Family.BINOMIAL:
        if n_trials is None:
            raise ParameterDomainError("binomial fit needs a known n_trials")
        if np.any(x > n_trials):
            raise DomainError(f"Binomial samples must not exceed n_trials={n_trials}")
        raw = {"p": mean / n_trials}
    elif family == Family.POISSON:
        raw = {"lam": mean}
    else:
        if r is None:
            raise ParameterDomainError("negative binomial fit needs a known r")
        raw = {"p": r / (r + mean)}

    clipped = False
    params = dict(raw)
    if "p" in params:
        p = min(max(params["p"], FIT_MARGIN), 1.0 - FIT_MARGIN)
        clipped = p != params["p"]
        params["p"] = p
    if "lam" in params and params["lam"] < FIT_MARGIN:
        params["lam"] = FIT_MARGIN
        clipped = True
    if clipped:
        logger.warning(
            "%s estimate %s clipped into the open domain: %s", family.value, raw, params
        )
    if family == Family.BINOMIAL:
        params["n_trials"] = n_trials
    elif family == Family.NEGBINOMIAL:
        params["r"] = r
    spec = make_spec(family, **params)
    return MarginalFit(spec=spec, clipped=clipped)
