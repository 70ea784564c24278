"""
Latent causal VAR(p) process.

Convention throughout: Gamma(h) = E[Z_{t+h} Z_t'], so Gamma(-h) = Gamma(h)'.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import linalg, special

from latcount_core.errors import (
    AccuracyError,
    DegenerateModelError,
    DimensionMismatchError,
    DomainError,
    NonCausalError,
    ParameterDomainError,
)

from .marginals import MarginalSpec, quantile_values
from .logger_config import get_logger

logger = get_logger(__name__)

CAUSAL_MARGIN = 1e-9
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
LYAPUNOV_TOL = 1e-9

SeedLike = Union[int, np.random.SeedSequence, None]


@dataclass(frozen=True, eq=False)
class VarModel:
    """
    Z_t = A_1 Z_{t-1} + ... + A_p Z_{t-p} + eps_t, eps_t ~ N(0, noise_cov).

    coeffs has shape (p, d, d).
    """

    coeffs: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim == 2:
            coeffs = coeffs[None, :, :]
        noise = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2] or coeffs.shape[0] < 1:
            raise ParameterDomainError(f"coefficients must have shape (p, d, d), got {coeffs.shape}")
        d = coeffs.shape[1]
        if noise.shape != (d, d):
            raise ParameterDomainError(f"noise covariance must be {d}x{d}, got {noise.shape}")
        if np.max(np.abs(noise - noise.T)) > SYMMETRY_TOL:
            raise ParameterDomainError("noise covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(noise)) < -PSD_TOL:
            raise ParameterDomainError("noise covariance is not positive semidefinite")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "noise_cov", 0.5 * (noise + noise.T))

    @property
    def p(self) -> int:
        return self.coeffs.shape[0]

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    def companion(self) -> np.ndarray:
        return companion_matrix(self.coeffs)

    def b0(self) -> np.ndarray:
        """B0 = [A_1' ; ... ; A_p'] of shape (p d, d)."""
        return np.vstack([a.T for a in self.coeffs])


@dataclass(frozen=True, eq=False)
class CausalityCheck:
    causal: bool
    spectral_radius: float


@dataclass(frozen=True, eq=False)
class LatentAcvf:
    """Gamma(0..L) as an array of shape (L+1, d, d)."""

    lags: np.ndarray
    standardized: bool = False

    @property
    def max_lag(self) -> int:
        return self.lags.shape[0] - 1

    @property
    def d(self) -> int:
        return self.lags.shape[1]

    def at(self, h: int) -> np.ndarray:
        """Gamma(h) for any |h| <= max_lag."""
        return self.lags[h] if h >= 0 else self.lags[-h].T

    def to_block(self, L: int) -> np.ndarray:
        """Ld x Ld population block matrix, block (a, b) = Gamma(b - a)."""
        if not 1 <= L <= self.max_lag + 1:
            raise DomainError(f"L must lie in [1, {self.max_lag + 1}], got {L}")
        d = self.d
        big = np.empty((L * d, L * d))
        for a in range(L):
            for b in range(L):
                big[a * d : (a + 1) * d, b * d : (b + 1) * d] = self.at(b - a)
        return big


@dataclass(frozen=True, eq=False)
class Standardized:
    model: VarModel
    acvf: LatentAcvf
    scale: np.ndarray


def companion_matrix(coeffs: np.ndarray) -> np.ndarray:
    """pd x pd companion matrix of a VAR(p)."""
    coeffs = np.asarray(coeffs, dtype=float)
    p, d, _ = coeffs.shape
    comp = np.zeros((p * d, p * d))
    comp[:d, :] = np.hstack(list(coeffs))
    if p > 1:
        comp[d:, :-d] = np.eye((p - 1) * d)
    return comp


def check_causal(model: VarModel) -> CausalityCheck:
    """Causal iff the companion spectral radius is below 1 - 1e-9."""
    radius = float(np.max(np.abs(np.linalg.eigvals(model.companion()))))
    return CausalityCheck(causal=radius < 1.0 - CAUSAL_MARGIN, spectral_radius=radius)


def _require_causal(model: VarModel) -> None:
    check = check_causal(model)
    if not check.causal:
        raise NonCausalError(
            f"VAR model is not causal (companion spectral radius {check.spectral_radius:.6g})"
        )


def stationary_acvf(model: VarModel, max_lag: int) -> LatentAcvf:
    """
    Stationary Gamma(0..max_lag) from the companion Lyapunov equation
    P = F P F' + Q, extended beyond lag p-1 by Gamma(h) = sum_u A_u Gamma(h-u).
    """
    if max_lag < 0:
        raise DomainError(f"max_lag must be >= 0, got {max_lag}")
    _require_causal(model)
    p, d = model.p, model.d
    comp = model.companion()
    q = np.zeros((p * d, p * d))
    q[:d, :d] = model.noise_cov
    big_p = linalg.solve_discrete_lyapunov(comp, q)
    big_p = 0.5 * (big_p + big_p.T)
    resid = float(np.max(np.abs(comp @ big_p @ comp.T + q - big_p)))
    if resid > LYAPUNOV_TOL:
        raise AccuracyError(f"Lyapunov residual {resid:.3e} above tolerance", estimate=resid)

    lags = np.zeros((max(max_lag, p - 1) + 1, d, d))
    for h in range(p):
        # E[Z_t Z_{t-h}'] sits in the first block row of the state covariance
        lags[h] = big_p[:d, h * d : (h + 1) * d]
    for h in range(p, len(lags)):
        lags[h] = sum(
            model.coeffs[u - 1] @ (lags[h - u] if h >= u else lags[u - h].T)
            for u in range(1, p + 1)
        )
    logger.debug("Stationary ACVF up to lag %d, Lyapunov residual %.2e", max_lag, resid)
    return LatentAcvf(lags=lags[: max_lag + 1], standardized=False)


def standardize(model: VarModel, max_lag: int = 0) -> Standardized:
    """
    Rescale so that every latent component has unit variance:
    A'_u = D^{-1} A_u D, noise' = D^{-1} noise D^{-1}, D = diag(Gamma(0))^{1/2}.
    """
    acvf = stationary_acvf(model, max_lag)
    var = np.diag(acvf.lags[0])
    if np.any(var <= 0.0):
        raise DegenerateModelError(
            f"latent components {np.flatnonzero(var <= 0.0).tolist()} have zero variance"
        )
    scale = np.sqrt(var)
    inv = 1.0 / scale
    coeffs = inv[None, :, None] * model.coeffs * scale[None, None, :]
    noise = inv[:, None] * model.noise_cov * inv[None, :]
    lags = inv[None, :, None] * acvf.lags * inv[None, None, :]
    idx = np.arange(model.d)
    lags[0][idx, idx] = 1.0
    return Standardized(
        model=VarModel(coeffs=coeffs, noise_cov=noise),
        acvf=LatentAcvf(lags=lags, standardized=True),
        scale=scale,
    )


def spectral_density(model: VarModel, omegas: Sequence[float]) -> np.ndarray:
    """
    f(w) = (2 pi)^{-1} A(e^{-iw})^{-1} noise A(e^{-iw})^{-*} with
    A(z) = I - sum_u A_u z^u; shape (len(omegas), d, d), Hermitian.
    """
    omegas = np.asarray(omegas, dtype=float)
    out = np.empty((len(omegas), model.d, model.d), dtype=complex)
    eye = np.eye(model.d)
    for k, omega in enumerate(omegas):
        z = np.exp(-1j * omega)
        poly = eye - sum(model.coeffs[u] * z ** (u + 1) for u in range(model.p))
        inv = np.linalg.inv(poly)
        out[k] = inv @ model.noise_cov @ inv.conj().T / (2.0 * np.pi)
    return out


def _noise_factor(noise_cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(noise_cov)
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate(
    model: VarModel,
    T: int,
    seed: SeedLike = None,
    burn_in: Optional[int] = None,
) -> np.ndarray:
    """
    Simulate T observations after discarding burn_in steps (default 10 p + 500).

    The output is a deterministic function of (seed, T, burn_in).

    :param model: causal VAR model
    :param T: number of kept observations
    :param seed: integer or SeedSequence for numpy.random.default_rng
    """
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    _require_causal(model)
    if burn_in is None:
        burn_in = 10 * model.p + 500
    p, d = model.p, model.d
    rng = np.random.default_rng(seed)
    total = T + burn_in
    eps = rng.standard_normal((total, d)) @ _noise_factor(model.noise_cov).T

    stacked = np.hstack(list(model.coeffs))
    hist = np.zeros((total + p, d))
    for t in range(p, total + p):
        window = hist[t - p : t][::-1].ravel()
        hist[t] = stacked @ window + eps[t - p]
    return hist[p + burn_in :]


def transform_counts(Z: np.ndarray, specs: List[MarginalSpec]) -> np.ndarray:
    """X[t, i] = F_i^{-1}(Phi(Z[t, i]))."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != len(specs):
        raise DimensionMismatchError(
            f"Z has {Z.shape[1]} columns but {len(specs)} marginals were given"
        )
    X = np.empty(Z.shape, dtype=np.int64)
    for i, spec in enumerate(specs):
        X[:, i] = quantile_values(spec, special.ndtr(Z[:, i]))
    return X
