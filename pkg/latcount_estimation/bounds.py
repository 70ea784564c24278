"""
Constants of the concentration results.

Threshold-moment suprema over an eps-box of parameters, their composites
D, R, S, T, U and Q(Gamma_Z), and the quantities of the sparse VAR error
bound (alpha, tau, nu, Q(beta0), lambda threshold).
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from latcount_core.errors import (
    BudgetError,
    DimensionMismatchError,
    DomainError,
    NonCausalError,
)
from latcount_core.settings import DEFAULT_TAIL_TOL
from latcount_model.link import link_context, link_eval, link_invert
from latcount_model.marginals import (
    MarginalSpec,
    delta_big,
    moment_m,
    moment_mu,
    theta_box,
)
from latcount_model.var_model import LatentAcvf, VarModel, check_causal, spectral_density

from .acvf import sparse_norm
from .logger_config import get_logger

logger = get_logger(__name__)

C_DELTA_CAP = 1.0 - 1e-6
FREQ_GRID = 2048
OBSERVED_FREQ_GRID = 256


@dataclass(frozen=True)
class MomentSuprema:
    m_big: float
    mu_big: float
    m1: float
    m2: float
    delta_eps: float
    grid_sup: bool


@dataclass(frozen=True)
class BoundConstants:
    """Composite constants together with the inputs they were computed from."""

    m_big: float
    mu_big: float
    m1: float
    m2: float
    delta_eps: float
    d_const: float
    r_const: float
    s_const: float
    t_const: float
    u_const: float
    q_const: float
    q1: float
    q2: float
    c_z: float
    eps: float
    delta_tilde: float
    eps_tilde: float
    c_delta: float
    gamma_norm: float
    gamma_norm_exact: bool
    grid_sup: bool
    capped: bool


@dataclass(frozen=True)
class VarBounds:
    alpha: float
    tau: float
    nu: float
    q_beta0: float
    lambda_threshold: float
    mu_max: float
    c0: float
    c0_observed: float
    q_beta0_observed: float
    lambda_threshold_observed: float


def _unique(specs: Sequence[MarginalSpec]) -> List[MarginalSpec]:
    seen = []
    for spec in specs:
        if spec not in seen:
            seen.append(spec)
    return seen


def moment_suprema(
    specs: Sequence[MarginalSpec],
    c_z: float,
    eps: float = 0.0,
    grid: int = 5,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> MomentSuprema:
    """
    Grid suprema over the eps-boxes of all marginals:

        M   = max m^(k)(1 + c),        k in {0, 3}
        mu  = max mu^(k)(1 + c),       k in {0, 3}
        M1  = max 1 / m^(0)(1 - c)^2
        M2  = max m^(k)(1/(1 - c))^2 / m^(0)(1 - c)^4,   k in {0, 2}
        Delta = max sum_n n ||grad C_n||_1

    :param c_z: latent correlation bound, 0 <= c_z < 1
    :param grid: points per parameter axis; 1 evaluates at theta only
    """
    if not 0.0 <= c_z < 1.0:
        raise DomainError(f"c_z must lie in [0, 1), got {c_z}")
    if eps < 0.0:
        raise DomainError(f"eps must be >= 0, got {eps}")

    m_big = mu_big = m1 = m2 = delta = 0.0
    for spec in _unique(specs):
        for point in theta_box(spec, eps, grid):
            m_big = max(m_big, *(moment_m(point, k, 1.0 + c_z, tail_tol) for k in (0, 3)))
            mu_big = max(mu_big, *(moment_mu(point, k, 1.0 + c_z, tail_tol) for k in (0, 3)))
            base = np.float64(moment_m(point, 0, 1.0 - c_z, tail_tol))
            # base underflows for c close to 1; the ratios are then infinite
            with np.errstate(divide="ignore", over="ignore", under="ignore"):
                m1 = max(m1, float(1.0 / base**2))
                m2 = max(
                    m2,
                    *(
                        float(np.float64(moment_m(point, k, 1.0 / (1.0 - c_z), tail_tol)) ** 2 / base**4)
                        for k in (0, 2)
                    ),
                )
            delta = max(delta, delta_big(point, tail_tol))
    return MomentSuprema(
        m_big=m_big,
        mu_big=mu_big,
        m1=m1,
        m2=m2,
        delta_eps=delta,
        grid_sup=eps > 0.0 and grid > 1,
    )


def c_of_delta(
    specs: Sequence[MarginalSpec],
    acvf_z: LatentAcvf,
    delta_tilde: float,
    tail_tol: float = DEFAULT_TAIL_TOL,
):
    """
    max |g_ij(l_ij(gamma) +- 2 delta_tilde)| over every entry of Gamma_Z(0..L)
    except the lag-0 diagonal, capped at 1 - 1e-6.

    :return: (value, capped)
    """
    if delta_tilde < 0.0:
        raise DomainError(f"delta_tilde must be >= 0, got {delta_tilde}")
    d = acvf_z.d
    worst = 0.0
    for h in range(acvf_z.max_lag + 1):
        for i in range(d):
            for j in range(d):
                if h == 0 and i == j:
                    continue
                ctx = link_context(specs[i], specs[j], tail_tol, C_DELTA_CAP)
                x = link_eval(ctx, float(acvf_z.lags[h, i, j]))
                for shifted in (x + 2.0 * delta_tilde, x - 2.0 * delta_tilde):
                    worst = max(worst, abs(link_invert(ctx, shifted)))
    return worst, worst >= C_DELTA_CAP


def q_of_gamma(
    specs: Sequence[MarginalSpec],
    acvf_z: LatentAcvf,
    s: int,
    c_z: Optional[float] = None,
    eps: float = 0.0,
    delta_tilde: float = 0.0,
    eps_tilde: float = 0.0,
    grid: int = 5,
    norm_mode: str = "auto",
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> BoundConstants:
    """
    Q(Gamma_Z) = 4 max{D, 4R, 2U, T} max{S^2, 1} with

        D = M1(1/2)^{1/2} 2 max{3 Delta, 1}
        R = (8 pi M1(0) + 24 pi M2(c) / (1 - c^2)^2) ||Gamma_Z||_s
        S = 12 M(c) mu(c) ||Gamma_Z||_s / (1 - c^2)^{7/2}
        T = 6 M1(c(dt)) M2(c(dt)) / (1 - c(dt)^2)
        U = T evaluated at dt = max{S^2, 1} eps_tilde

    Also returns Q1 = 4 max{4R, 2U, T} max{S^2, 1} and Q2 = max{2R, T} at eps = 0.

    Args:
        specs: true marginals, one per component
        acvf_z: standardized latent ACVF; its L = max_lag + 1 blocks enter ||Gamma_Z||_s
        s: sparsity of the norm
        c_z: bound on the off-diagonal latent correlations; defaults to their maximum
    """
    if not acvf_z.standardized:
        raise DomainError("q_of_gamma needs a standardized latent ACVF")
    if len(specs) != acvf_z.d:
        raise DimensionMismatchError(f"{len(specs)} marginals for dimension {acvf_z.d}")
    if c_z is None:
        off = np.abs(acvf_z.lags.copy())
        off[0][np.diag_indices(acvf_z.d)] = 0.0
        c_z = float(np.max(off))

    norm = sparse_norm(acvf_z.to_block(acvf_z.max_lag + 1), s, mode=norm_mode)
    gamma_norm = norm.value

    at_c = moment_suprema(specs, c_z, eps, grid, tail_tol)
    at_half = moment_suprema(specs, 0.5, eps, grid, tail_tol)
    at_zero = moment_suprema(specs, 0.0, eps, grid, tail_tol)

    def r_const(sup_zero: MomentSuprema, sup_c: MomentSuprema) -> float:
        return (
            8.0 * math.pi * sup_zero.m1 + 24.0 * math.pi / (1.0 - c_z**2) ** 2 * sup_c.m2
        ) * gamma_norm

    def t_const(dt: float, box_eps: float):
        c_dt, capped = c_of_delta(specs, acvf_z, dt, tail_tol)
        sup = moment_suprema(specs, c_dt, box_eps, grid, tail_tol)
        return 6.0 / (1.0 - c_dt**2) * sup.m1 * sup.m2, c_dt, capped

    d_const = math.sqrt(at_half.m1) * 2.0 * max(3.0 * at_c.delta_eps, 1.0)
    r_val = r_const(at_zero, at_c)
    s_val = 12.0 / (1.0 - c_z**2) ** 3.5 * at_c.m_big * at_c.mu_big * gamma_norm
    s_factor = max(s_val**2, 1.0)
    t_val, c_delta, capped_t = t_const(delta_tilde, eps)
    u_val, _, capped_u = t_const(s_factor * eps_tilde, eps)

    q_const = 4.0 * max(d_const, 4.0 * r_val, 2.0 * u_val, t_val) * s_factor
    q1 = 4.0 * max(4.0 * r_val, 2.0 * u_val, t_val) * s_factor
    if eps > 0.0:
        r_zero = r_const(
            moment_suprema(specs, 0.0, 0.0, 1, tail_tol),
            moment_suprema(specs, c_z, 0.0, 1, tail_tol),
        )
        t_zero = t_const(delta_tilde, 0.0)[0]
    else:
        r_zero, t_zero = r_val, t_val
    q2 = max(2.0 * r_zero, t_zero)

    capped = capped_t or capped_u
    if capped:
        logger.warning("c(delta) reached the cap %.6g; T and U are capped values", C_DELTA_CAP)
    logger.debug(
        "Q(Gamma_Z)=%.6g (D=%.4g R=%.4g S=%.4g T=%.4g U=%.4g)",
        q_const,
        d_const,
        r_val,
        s_val,
        t_val,
        u_val,
    )
    return BoundConstants(
        m_big=at_c.m_big,
        mu_big=at_c.mu_big,
        m1=at_c.m1,
        m2=at_c.m2,
        delta_eps=at_c.delta_eps,
        d_const=d_const,
        r_const=r_val,
        s_const=s_val,
        t_const=t_val,
        u_const=u_val,
        q_const=q_const,
        q1=q1,
        q2=q2,
        c_z=c_z,
        eps=eps,
        delta_tilde=delta_tilde,
        eps_tilde=eps_tilde,
        c_delta=c_delta,
        gamma_norm=gamma_norm,
        gamma_norm_exact=not norm.lower_bound,
        grid_sup=at_c.grid_sup,
        capped=capped,
    )


def _ar_poly_top_eig(model: VarModel, omega: float) -> float:
    z = np.exp(1j * omega)
    poly = np.eye(model.d) - sum(model.coeffs[u] * z ** (u + 1) for u in range(model.p))
    return float(np.linalg.eigvalsh(poly.conj().T @ poly)[-1])


def mu_max(model: VarModel) -> float:
    """max over |z| = 1 of the largest eigenvalue of A(z)* A(z), A(z) = I - sum_u A_u z^u."""
    omegas = np.linspace(0.0, math.pi, FREQ_GRID)
    values = np.array([_ar_poly_top_eig(model, w) for w in omegas])
    k = int(np.argmax(values))
    step = omegas[1] - omegas[0]
    lo, hi = max(omegas[k] - step, 0.0), min(omegas[k] + step, math.pi)
    refined = minimize_scalar(
        lambda w: -_ar_poly_top_eig(model, w),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(values[k]), -float(refined.fun))


def spectral_sparse_sup(model: VarModel, s: int) -> float:
    """max over frequencies of the largest s-sparse principal operator norm of f_Z."""
    omegas = np.linspace(0.0, math.pi, OBSERVED_FREQ_GRID)
    dens = spectral_density(model, omegas)
    best = 0.0
    for f in dens:
        try:
            value = sparse_norm(f, s, mode="exact", support_size=s).value
        except BudgetError:
            value = sparse_norm(f.real, s, mode="heuristic", support_size=s).value
        best = max(best, value)
    return best


def var_bound_quantities(
    model: VarModel,
    s: int,
    N: int,
    q_gamma: float,
    b0: Optional[np.ndarray] = None,
) -> VarBounds:
    """
    alpha = lambda_min(noise) / (2 mu_max)
    nu = lambda_min(noise) / (54 mu_max Q(Gamma_Z) c0)
    tau = alpha max{nu^-2, 1} log(d p) / N
    Q(beta0) = 2 max_j{||B0 e_j||, 1} Q(Gamma_Z) c0
    lambda_threshold = 4 Q(beta0) sqrt(log(p d^2) / N)

    c0 = s; the *_observed fields use c0 = 2 pi max_w ||f_Z(w)||_s instead.
    """
    if s < 1 or N < 1:
        raise DomainError(f"s and N must be >= 1, got s={s}, N={N}")
    if not q_gamma > 0.0:
        raise DomainError(f"Q(Gamma_Z) must be positive, got {q_gamma}")
    causality = check_causal(model)
    if not causality.causal:
        raise NonCausalError(
            f"VAR model is not causal (companion spectral radius {causality.spectral_radius:.6g})"
        )
    d, p = model.d, model.p
    if b0 is None:
        b0 = model.b0()
    b0 = np.asarray(b0, dtype=float)
    if b0.shape != (p * d, d):
        raise DimensionMismatchError(f"B0 must have shape {(p * d, d)}, got {b0.shape}")

    lam_min = float(np.linalg.eigvalsh(model.noise_cov)[0])
    top = mu_max(model)
    alpha = lam_min / (2.0 * top)
    c0 = float(s)
    nu = lam_min / (54.0 * top * q_gamma * c0)
    tau = alpha * max(nu**-2, 1.0) * math.log(d * p) / N if nu > 0.0 else math.inf
    factor = max(float(np.max(np.linalg.norm(b0, axis=0))), 1.0)
    root = math.sqrt(math.log(p * d * d) / N)
    q_beta0 = 2.0 * factor * q_gamma * c0

    c0_obs = 2.0 * math.pi * spectral_sparse_sup(model, s)
    q_beta0_obs = 2.0 * factor * q_gamma * c0_obs
    return VarBounds(
        alpha=alpha,
        tau=tau,
        nu=nu,
        q_beta0=q_beta0,
        lambda_threshold=4.0 * q_beta0 * root,
        mu_max=top,
        c0=c0,
        c0_observed=c0_obs,
        q_beta0_observed=q_beta0_obs,
        lambda_threshold_observed=4.0 * q_beta0_obs * root,
    )
