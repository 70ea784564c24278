"""
Link functions between latent correlation and count covariance.

For a pair of marginals the link l(u) = Cov(G_i(Z_i), G_j(Z_j)) with
Corr(Z_i, Z_j) = u is evaluated by integrating its derivative, which is a
positive double sum over the threshold tables. The inverse g = l^{-1} is found
by safeguarded Newton in angle space and clamped outside l([-u_clamp, u_clamp]).
Hermite coefficients and the Hermite series of l are provided as an
independent check.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, special

from latcount_core.errors import AccuracyError, DomainError, HermiteOverflowError
from latcount_core.settings import DEFAULT_TAIL_TOL

from .marginals import (
    QUANTILE_TAIL_TOL,
    MarginalSpec,
    ThresholdTable,
    support_table,
    threshold_table,
)
from .logger_config import get_logger

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_U_CLAMP = 1.0 - 1e-6
OFF_DIAGONAL_LIMIT = 1.0 - 1e-9
DIAGONAL_LIMIT = 1.0 - 1e-6
QUAD_ABS_TOL = 1e-10
INVERT_TOL = 1e-12
HERMITE_LIMIT = 1e300


@dataclass(frozen=True, eq=False)
class LinkContext:
    """
    A pair of marginals with their threshold tables.

    Pairwise threshold products are precomputed once; contexts are immutable
    and safe to share between threads. Build with LinkContext.build.
    """

    spec_i: MarginalSpec
    spec_j: MarginalSpec
    table_i: ThresholdTable
    table_j: ThresholdTable
    u_clamp: float = DEFAULT_U_CLAMP
    quad_limit: int = 200
    diagonal: bool = False
    ell_lo: float = float("nan")
    ell_hi: float = float("nan")
    _prod: np.ndarray = field(default=None, repr=False, compare=False)
    _diff_sq: np.ndarray = field(default=None, repr=False, compare=False)
    _sum_sq: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def build(
        cls,
        spec_i: MarginalSpec,
        spec_j: MarginalSpec,
        tail_tol: float = DEFAULT_TAIL_TOL,
        u_clamp: float = DEFAULT_U_CLAMP,
        quad_limit: int = 200,
        diagonal: Optional[bool] = None,
    ) -> "LinkContext":
        """
        Args:
            spec_i, spec_j: the two marginals
            tail_tol: threshold-table tail tolerance
            u_clamp: inversion range is [-u_clamp, u_clamp]
            quad_limit: maximum number of adaptive quadrature subintervals
            diagonal: whether this is the link of a series with itself;
                defaults to spec_i == spec_j
        """
        if not 0.0 < u_clamp < 1.0:
            raise DomainError(f"u_clamp must lie in (0, 1), got {u_clamp}")
        table_i = threshold_table(spec_i, tail_tol)
        table_j = threshold_table(spec_j, tail_tol)
        qi = table_i.q_values[:, None]
        qj = table_j.q_values[None, :]
        ctx = cls(
            spec_i=spec_i,
            spec_j=spec_j,
            table_i=table_i,
            table_j=table_j,
            u_clamp=u_clamp,
            quad_limit=quad_limit,
            diagonal=(spec_i == spec_j) if diagonal is None else diagonal,
            _prod=qi * qj,
            _diff_sq=(qi - qj) ** 2,
            _sum_sq=(qi + qj) ** 2,
        )
        ctx = replace(
            ctx,
            ell_lo=_integrate(ctx, 0.0, -math.asin(u_clamp)),
            ell_hi=_integrate(ctx, 0.0, math.asin(u_clamp)),
        )
        logger.debug(
            "Link context %s x %s: %dx%d thresholds, range [%.6g, %.6g]",
            spec_i.describe(),
            spec_j.describe(),
            len(table_i),
            len(table_j),
            ctx.ell_lo,
            ctx.ell_hi,
        )
        return ctx


@lru_cache(maxsize=1024)
def link_context(
    spec_i: MarginalSpec,
    spec_j: MarginalSpec,
    tail_tol: float = DEFAULT_TAIL_TOL,
    u_clamp: float = DEFAULT_U_CLAMP,
) -> LinkContext:
    """Cached LinkContext.build."""
    return LinkContext.build(spec_i, spec_j, tail_tol=tail_tol, u_clamp=u_clamp)


@dataclass(frozen=True)
class HermiteCoeffs:
    """c_1..c_K; scaled[k-1] = c_k / sqrt((k-1)!) is what the series uses."""

    values: np.ndarray
    scaled: np.ndarray
    K: int

    def variance_partial_sum(self) -> float:
        """sum_{k<=K} c_k^2 / k!"""
        k = np.arange(1, self.K + 1)
        return float(np.sum(self.scaled**2 / k))


def _exponent(ctx: LinkContext, u: float, one_minus: float, one_plus: float) -> np.ndarray:
    """
    -(Qi^2 - 2u QiQj + Qj^2) / (2 (1 - u^2)), with the quadratic form written
    around the nearer endpoint to avoid cancellation near u = +-1.
    """
    if u >= 0.0:
        quad = ctx._diff_sq + 2.0 * one_minus * ctx._prod
    else:
        quad = ctx._sum_sq - 2.0 * one_plus * ctx._prod
    return -quad / (2.0 * one_minus * one_plus)


def _kernel(ctx: LinkContext, u: float, one_minus: float, one_plus: float) -> np.ndarray:
    with np.errstate(under="ignore"):
        return np.exp(_exponent(ctx, u, one_minus, one_plus))


def _s1_at_angle(ctx: LinkContext, phi: float) -> float:
    u = math.sin(phi)
    one_minus = 2.0 * math.sin(0.25 * math.pi - 0.5 * phi) ** 2
    one_plus = 2.0 * math.sin(0.25 * math.pi + 0.5 * phi) ** 2
    if one_minus == 0.0 or one_plus == 0.0:
        # at u = +-1 only pairs with Qi = +-Qj survive, each with weight exp(-Qi^2 / 2)
        mask = (ctx._diff_sq if u > 0 else ctx._sum_sq) == 0.0
        return float(np.sum(np.exp(-0.5 * np.abs(ctx._prod[mask]))))
    return float(np.sum(_kernel(ctx, u, one_minus, one_plus)))


def _integrate(ctx: LinkContext, phi_a: float, phi_b: float) -> float:
    """(1/2pi) * integral of S1(sin phi) d phi from phi_a to phi_b."""
    if phi_a == phi_b:
        return 0.0
    value, abserr = integrate.quad(
        lambda phi: _s1_at_angle(ctx, phi),
        phi_a,
        phi_b,
        epsabs=1e-13,
        epsrel=1e-12,
        limit=ctx.quad_limit,
    )
    value /= TWO_PI
    abserr /= TWO_PI
    if abserr > QUAD_ABS_TOL:
        raise AccuracyError(
            f"link quadrature on [{phi_a:.6g}, {phi_b:.6g}] reached only {abserr:.2e}",
            estimate=value,
            abs_error=abserr,
        )
    return value


def _check_u(ctx: LinkContext, u: float, limit: float) -> None:
    if not abs(u) <= limit:
        raise DomainError(f"|u| must be at most {limit!r}, got {u!r}")


def link_deriv(ctx: LinkContext, u: float) -> float:
    """l'(u) = S1(u) / (2 pi sqrt(1 - u^2)); strictly positive."""
    _check_u(ctx, u, DIAGONAL_LIMIT if ctx.diagonal else OFF_DIAGONAL_LIMIT)
    one_minus, one_plus = 1.0 - u, 1.0 + u
    s1 = float(np.sum(_kernel(ctx, u, one_minus, one_plus)))
    return s1 / (TWO_PI * math.sqrt(one_minus * one_plus))


def link_deriv2(ctx: LinkContext, u: float) -> float:
    """
    l''(u) from the three double sums
    S1 = sum e, S2G = sum e * G, S3g = sum e * QiQj, with
    G = Qi^2 - 2u QiQj + Qj^2 and e the kernel of l'.
    """
    _check_u(ctx, u, DIAGONAL_LIMIT)
    one_minus, one_plus = 1.0 - u, 1.0 + u
    w = one_minus * one_plus
    kern = _kernel(ctx, u, one_minus, one_plus)
    g_form = -2.0 * w * _exponent(ctx, u, one_minus, one_plus)
    s1 = float(np.sum(kern))
    s2g = float(np.sum(kern * g_form))
    s3g = float(np.sum(kern * ctx._prod))
    return (
        u * s1 / (TWO_PI * w**1.5)
        - u * s2g / (TWO_PI * w**2.5)
        + s3g / (TWO_PI * w**1.5)
    )


def link_eval(ctx: LinkContext, u: float) -> float:
    """
    l(u) for |u| <= 1, as the integral of l' from 0.

    Integration runs over phi = arcsin(u), where the integrand S1(sin phi)/(2pi)
    is bounded up to the endpoints. For a diagonal context l(1) is the
    variance identity.
    """
    _check_u(ctx, u, 1.0)
    if u == 0.0:
        return 0.0
    if ctx.diagonal and u == 1.0:
        return link_at_one(ctx.spec_i)
    return _integrate(ctx, 0.0, math.asin(u))


@lru_cache(maxsize=256)
def link_at_one(spec: MarginalSpec) -> float:
    """l_ii(1) = Var[X] = sum_n (2n+1) P[X > n] - (sum_n P[X > n])^2."""
    sup = support_table(spec, QUANTILE_TAIL_TOL)
    tail = sup.sf
    return float(np.sum((2.0 * sup.n + 1.0) * tail) - np.sum(tail) ** 2)


def link_invert(ctx: LinkContext, x: float) -> float:
    """
    g(x) = l^{-1}(x) on [l(-u_clamp), l(u_clamp)], clamped to +-u_clamp outside.

    Newton on phi = arcsin(u) with d l / d phi = S1(sin phi) / 2pi, falling
    back to bisection whenever a step leaves the current bracket. l is
    updated incrementally between iterates.
    """
    if x >= ctx.ell_hi:
        return ctx.u_clamp
    if x <= ctx.ell_lo:
        return -ctx.u_clamp
    if x == 0.0:
        return 0.0

    phi_clamp = math.asin(ctx.u_clamp)
    lo, hi = (0.0, phi_clamp) if x > 0.0 else (-phi_clamp, 0.0)
    slope0 = _s1_at_angle(ctx, 0.0) / TWO_PI
    phi = min(max(x / slope0, lo), hi) if slope0 > 0.0 else 0.5 * (lo + hi)
    value = _integrate(ctx, 0.0, phi)

    for iteration in range(200):
        resid = value - x
        if abs(resid) < INVERT_TOL:
            break
        if resid > 0.0:
            hi = phi
        else:
            lo = phi
        if hi - lo < 1e-15:
            break
        slope = _s1_at_angle(ctx, phi) / TWO_PI
        step = phi - resid / slope if slope > 0.0 else None
        new_phi = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        value += _integrate(ctx, phi, new_phi)
        phi = new_phi
    else:
        logger.warning("link inversion at x=%.6g stopped after %d steps", x, iteration + 1)

    return math.sin(phi)


def link_invert_diagonal(ctx: LinkContext, x: float) -> float:
    """
    Diagonal lag-0 inversion, clamped to [0, 1].

    Values at or above l(u_clamp) map to 1, nonpositive values to 0.
    """
    if x >= ctx.ell_hi:
        return 1.0
    if x <= 0.0:
        return 0.0
    return link_invert(ctx, x)


def inverse_link_derivs(ctx: LinkContext, x: float):
    """
    First and second derivatives of g = l^{-1} at x.

    :return: (g1, g2) with g1 = 1 / l'(g(x)) and g2 = -l''(g(x)) / l'(g(x))^3
    """
    if not ctx.ell_lo < x < ctx.ell_hi:
        raise DomainError(
            f"x={x!r} outside the open range ({ctx.ell_lo!r}, {ctx.ell_hi!r})"
        )
    u = link_invert(ctx, x)
    d1 = link_deriv(ctx, u)
    d2 = link_deriv2(ctx, u)
    return 1.0 / d1, -d2 / d1**3


def hermite_coeffs(table: ThresholdTable, K: int) -> HermiteCoeffs:
    """
    c_k = (2 pi)^{-1/2} sum_n exp(-Q_n^2 / 2) He_{k-1}(Q_n), k = 1..K.

    Runs the recurrence on He_k / sqrt(k!) and rescales at the end.
    """
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    q = table.q_values
    damp = np.exp(-0.5 * q**2) / math.sqrt(TWO_PI)

    scaled = np.empty(K)
    h_prev = np.zeros_like(q)
    h_cur = np.ones_like(q)
    max_log_he = np.zeros(K)
    for k in range(K):
        # h_cur = He_k(q) / sqrt(k!)
        scaled[k] = float(np.sum(damp * h_cur))
        with np.errstate(divide="ignore"):
            max_log_he[k] = np.max(np.log(np.abs(h_cur)), initial=-np.inf) + 0.5 * special.gammaln(k + 1.0)
        h_prev, h_cur = h_cur, (q * h_cur - math.sqrt(k) * h_prev) / math.sqrt(k + 1.0)

    if np.any(max_log_he > math.log(HERMITE_LIMIT)):
        first = int(np.argmax(max_log_he > math.log(HERMITE_LIMIT))) + 1
        raise HermiteOverflowError(f"He_{first - 1} exceeds {HERMITE_LIMIT:g} on this table")

    values = scaled * np.exp(0.5 * special.gammaln(np.arange(K, dtype=float) + 1.0))
    return HermiteCoeffs(values=values, scaled=scaled, K=K)


def hermite_coeff(table: ThresholdTable, k: int) -> float:
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    return float(hermite_coeffs(table, k).values[k - 1])


def hermite_series_link(coeffs_i: HermiteCoeffs, coeffs_j: HermiteCoeffs, u: float) -> float:
    """Truncated sum_k c_ik c_jk u^k / k!, using the scaled coefficients."""
    K = min(coeffs_i.K, coeffs_j.K)
    k = np.arange(1, K + 1)
    return float(np.sum(coeffs_i.scaled[:K] * coeffs_j.scaled[:K] * u**k / k))
