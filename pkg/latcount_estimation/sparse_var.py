"""
LASSO estimation of the latent VAR coefficients.

    beta_hat = argmin  -2 beta' gamma + beta' (I_d kron G) beta + lam ||beta||_1

with G the estimated pd x pd latent block matrix and gamma = vec of the
estimated lag blocks. beta = vec(B0), B0 = [A_1' ; ... ; A_p'] (column-major),
so column j of B0 holds row j of every A_u and the problem splits into d
subproblems sharing G.

Worked example for d = 2, p = 1: A_1 = [[a, b], [c, e]] gives
B0 = [[a, c], [b, e]] and beta = (a, b, c, e).
"""

import itertools
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np

from latcount_core.errors import (
    DimensionMismatchError,
    DomainError,
    IndefiniteProblemError,
    InsufficientDataError,
)
from latcount_core.settings import DEFAULT_TAIL_TOL
from latcount_core.utils import make_rng
from latcount_model.link import DEFAULT_U_CLAMP
from latcount_model.marginals import MarginalSpec

from .latent_estimator import DiagMode, LatentEstimate, estimate_latent_acvf
from .logger_config import get_logger

logger = get_logger(__name__)

DIVERGENCE_LIMIT = 1e12
RE_VIOLATION_TOL = 1e-12
SIGN_PATTERN_CAP = 1024


@dataclass(frozen=True, eq=False)
class LassoProblem:
    gamma_hat: np.ndarray
    gamma_big: np.ndarray
    lam: float
    d: int
    p: int
    estimate: Optional[LatentEstimate] = None

    @property
    def q(self) -> int:
        return self.p * self.d * self.d

    @property
    def gamma_cols(self) -> np.ndarray:
        """gamma_hat as a (pd, d) matrix, one column per response."""
        return self.gamma_hat.reshape((self.p * self.d, self.d), order="F")

    def with_lambda(self, lam: float) -> "LassoProblem":
        return replace(self, lam=float(lam))


@dataclass(frozen=True, eq=False)
class LassoSolution:
    beta_hat: np.ndarray
    coeff_hats: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool


@dataclass(frozen=True, eq=False)
class RECheck:
    violated: bool
    witness: Optional[np.ndarray]
    margin: float
    exhaustive: bool


@dataclass(frozen=True)
class LassoErrorBounds:
    """Error bounds in the assignment derived in the proof; the *_displayed fields swap l1 and l2."""

    l2: float
    l1: float
    quad: float
    l2_displayed: float
    l1_displayed: float


@dataclass(frozen=True)
class SupportMetrics:
    precision: float
    recall: float
    f1: float
    support_size: int


def coeffs_to_beta(coeffs: np.ndarray) -> np.ndarray:
    """vec(B0) for coefficients of shape (p, d, d)."""
    coeffs = np.asarray(coeffs, dtype=float)
    b0 = np.vstack([a.T for a in coeffs])
    return b0.ravel(order="F")


def beta_to_coeffs(beta: np.ndarray, d: int, p: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (p * d * d,):
        raise DimensionMismatchError(f"beta must have length {p * d * d}, got {beta.shape}")
    b0 = beta.reshape((p * d, d), order="F")
    return np.stack([b0[u * d : (u + 1) * d, :].T for u in range(p)])


def build_problem(
    X: np.ndarray,
    p: int,
    families: Optional[Sequence] = None,
    lam: float = 0.0,
    known: Optional[Sequence[Optional[Dict]]] = None,
    specs: Optional[Sequence[MarginalSpec]] = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
    u_clamp: float = DEFAULT_U_CLAMP,
    max_workers: int = 1,
) -> LassoProblem:
    """
    Estimated LASSO inputs from counts: the latent estimator with L = p and
    unit lag-0 diagonals.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if X.shape[0] <= p + 1:
        raise InsufficientDataError(f"need T > p + 1, got T={X.shape[0]}, p={p}")
    if lam < 0.0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    est = estimate_latent_acvf(
        X,
        p,
        families,
        diag_mode=DiagMode.FORCE_ONE,
        known=known,
        specs=specs,
        tail_tol=tail_tol,
        u_clamp=u_clamp,
        max_workers=max_workers,
    )
    return problem_from_estimate(est, p, lam)


def problem_from_estimate(est: LatentEstimate, p: int, lam: float = 0.0) -> LassoProblem:
    """
    LASSO inputs from a latent estimate with at least p lag blocks.

    The leading p blocks are used and the lag-0 diagonal is set to 1.
    """
    acvf = est.acvf_hat
    if acvf.L < p:
        raise DomainError(f"estimate has {acvf.L} lag blocks, need at least {p}")
    size = p * acvf.d
    big = acvf.big[:size, :size].copy()
    np.fill_diagonal(big, 1.0)
    return LassoProblem(
        gamma_hat=acvf.gamma_vec[:size].ravel(order="F"),
        gamma_big=big,
        lam=float(lam),
        d=acvf.d,
        p=p,
        estimate=est,
    )


def project_psd(G: np.ndarray) -> np.ndarray:
    """
    Clip negative eigenvalues at 0 and rescale so the diagonal is unchanged.

    The rescaling is a congruence by a positive diagonal matrix, so the
    result stays positive semidefinite.
    """
    G = 0.5 * (G + G.T)
    w, v = np.linalg.eigh(G)
    if w[0] >= 0.0:
        return G
    clipped = (v * np.clip(w, 0.0, None)) @ v.T
    clipped = 0.5 * (clipped + clipped.T)
    target, current = np.diag(G), np.diag(clipped)
    scale = np.sqrt(np.divide(target, current, out=np.ones_like(target), where=current > 0.0))
    logger.debug("PSD projection clipped %d negative eigenvalues", int(np.sum(w < 0.0)))
    return scale[:, None] * clipped * scale[None, :]


def soft_threshold(x, t: float):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _objective(G: np.ndarray, C: np.ndarray, B: np.ndarray, lam: float) -> float:
    return float(np.sum(-2.0 * B * C + B * (G @ B)) + lam * np.sum(np.abs(B)))


def _kkt(G: np.ndarray, C: np.ndarray, B: np.ndarray, lam: float) -> float:
    grad = 2.0 * (G @ B - C)
    active = B != 0.0
    resid = np.where(
        active,
        np.abs(grad + lam * np.sign(B)),
        np.maximum(np.abs(grad) - lam, 0.0),
    )
    return float(np.max(resid)) if resid.size else 0.0


def objective(prob: LassoProblem, beta: np.ndarray) -> float:
    """-2 beta' gamma + beta' (I kron G) beta + lam ||beta||_1."""
    B = np.asarray(beta, dtype=float).reshape((prob.p * prob.d, prob.d), order="F")
    return _objective(prob.gamma_big, prob.gamma_cols, B, prob.lam)


def kkt_residual(prob: LassoProblem, beta: np.ndarray) -> float:
    B = np.asarray(beta, dtype=float).reshape((prob.p * prob.d, prob.d), order="F")
    return _kkt(prob.gamma_big, prob.gamma_cols, B, prob.lam)


def lasso_solve(
    prob: LassoProblem,
    tol: float = 1e-9,
    max_iter: int = 100000,
    psd_project: bool = True,
) -> LassoSolution:
    """
    Cyclic coordinate descent, all d response columns updated together:

        B[k, :] <- soft(C[k, :] - G[k, :] B + G[k, k] B[k, :], lam / 2) / G[k, k]

    Stops when the largest coordinate change in a sweep is below tol or after
    max_iter sweeps (converged=False, logged).

    :param prob: the problem; gamma_big must have a strictly positive diagonal
    :param psd_project: clip negative eigenvalues of gamma_big first
    """
    G = np.asarray(prob.gamma_big, dtype=float)
    if np.any(np.diag(G) <= 0.0):
        raise DomainError("gamma_big must have a strictly positive diagonal")
    if psd_project:
        G = project_psd(G)
    C = prob.gamma_cols
    lam = prob.lam
    size = G.shape[0]
    diag = np.diag(G).copy()

    B = np.zeros_like(C)
    GB = np.zeros_like(C)
    obj = _objective(G, C, B, lam)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_change = 0.0
        for k in range(size):
            old = B[k].copy()
            resid = C[k] - GB[k] + diag[k] * old
            new = soft_threshold(resid, lam / 2.0) / diag[k]
            delta = new - old
            if np.any(delta != 0.0):
                B[k] = new
                GB += np.outer(G[:, k], delta)
                max_change = max(max_change, float(np.max(np.abs(delta))))

        new_obj = _objective(G, C, B, lam)
        if (
            new_obj > obj + 1e-12 * (1.0 + abs(obj))
            or not np.isfinite(new_obj)
            or np.max(np.abs(B)) > DIVERGENCE_LIMIT
        ):
            raise IndefiniteProblemError(
                "coordinate descent did not decrease the objective; "
                "gamma_big looks indefinite, solve with PSD projection enabled"
            )
        obj = new_obj
        if max_change < tol:
            converged = True
            break

    if not converged:
        logger.warning("Coordinate descent stopped after %d sweeps without converging", sweeps)
    logger.debug("LASSO lam=%.4g: %d sweeps, objective %.10g", lam, sweeps, obj)
    beta = B.ravel(order="F")
    return LassoSolution(
        beta_hat=beta,
        coeff_hats=beta_to_coeffs(beta, prob.d, prob.p),
        objective=obj,
        iterations=sweeps,
        kkt_residual=_kkt(G, C, B, lam),
        converged=converged,
    )


def _re_margin(M: np.ndarray, x: np.ndarray, alpha: float, tau: float) -> float:
    x = x / np.linalg.norm(x)
    return float(x @ M @ x - alpha + tau * np.sum(np.abs(x)) ** 2)


def check_re(
    M: np.ndarray,
    alpha: float,
    tau: float,
    trials: int = 2000,
    s: int = 1,
    seed: int = 0,
    support_budget: int = 20000,
) -> RECheck:
    """
    Search for a unit x with x'Mx < alpha - tau ||x||_1^2.

    Candidates: coordinate vectors, eigenvectors of M, on every support of
    size <= 2s (sampled when there are more than support_budget) the smallest
    eigenvector of the principal submatrix and the sign patterns, and `trials`
    Gaussian directions. No witness is evidence, not proof.
    """
    if alpha < 0.0 or tau < 0.0:
        raise DomainError(f"alpha and tau must be >= 0, got alpha={alpha}, tau={tau}")
    M = 0.5 * (np.asarray(M, dtype=float) + np.asarray(M, dtype=float).T)
    dim = M.shape[0]
    rng = make_rng(seed)
    best_margin = math.inf
    best_x = None

    def consider(x):
        nonlocal best_margin, best_x
        margin = _re_margin(M, x, alpha, tau)
        if margin < best_margin:
            best_margin = margin
            best_x = x / np.linalg.norm(x)

    for i in range(dim):
        consider(np.eye(dim)[i])
    for v in np.linalg.eigh(M)[1].T:
        consider(v)

    k_max = min(2 * s, dim)
    total = sum(math.comb(dim, k) for k in range(1, k_max + 1))
    exhaustive = total <= support_budget
    if exhaustive:
        supports = (
            c for k in range(1, k_max + 1) for c in itertools.combinations(range(dim), k)
        )
    else:
        supports = (
            tuple(sorted(rng.choice(dim, size=int(rng.integers(1, k_max + 1)), replace=False)))
            for _ in range(support_budget)
        )
    for support in supports:
        idx = np.array(support)
        x = np.zeros(dim)
        x[idx] = np.linalg.eigh(M[np.ix_(idx, idx)])[1][:, 0]
        consider(x)
        k = len(idx)
        if 2 ** (k - 1) <= SIGN_PATTERN_CAP:
            patterns = itertools.product((1.0, -1.0), repeat=k - 1)
        else:
            patterns = (tuple(rng.choice((1.0, -1.0), size=k - 1)) for _ in range(SIGN_PATTERN_CAP))
        for signs in patterns:
            x = np.zeros(dim)
            x[idx] = (1.0,) + tuple(signs)
            consider(x)

    for _ in range(trials):
        consider(rng.standard_normal(dim))

    violated = best_margin < -RE_VIOLATION_TOL
    return RECheck(
        violated=violated,
        witness=best_x if violated else None,
        margin=best_margin,
        exhaustive=exhaustive,
    )


def deviation_check(prob: LassoProblem, beta0: np.ndarray) -> float:
    """||gamma_hat - (I kron G) beta0||_max, computed column by column."""
    beta0 = np.asarray(beta0, dtype=float)
    if beta0.shape != (prob.q,):
        raise DimensionMismatchError(f"beta0 must have length {prob.q}, got {beta0.shape}")
    B0 = beta0.reshape((prob.p * prob.d, prob.d), order="F")
    return float(np.max(np.abs(prob.gamma_cols - prob.gamma_big @ B0)))


def lasso_error_bounds(s: int, lam: float, alpha: float) -> LassoErrorBounds:
    """||v|| <= 16 sqrt(s) lam / alpha, ||v||_1 <= 64 s lam / alpha, v'Gv <= 128 s lam^2 / alpha."""
    if s < 1 or lam < 0.0 or not alpha > 0.0:
        raise DomainError(f"need s >= 1, lam >= 0, alpha > 0; got s={s}, lam={lam}, alpha={alpha}")
    l2 = 16.0 * math.sqrt(s) * lam / alpha
    l1 = 64.0 * s * lam / alpha
    return LassoErrorBounds(
        l2=l2,
        l1=l1,
        quad=128.0 * s * lam**2 / alpha,
        l2_displayed=l1,
        l1_displayed=l2,
    )


def default_lambda_grid(q: int, N: int, n: int = 20, lo: float = 0.01, hi: float = 2.0) -> np.ndarray:
    """n geometric points over [lo, hi] * sqrt(log(q) / N); log(q) is floored at log 2."""
    if q < 1 or N < 1:
        raise DomainError(f"q and N must be >= 1, got q={q}, N={N}")
    return np.geomspace(lo, hi, n) * math.sqrt(math.log(max(q, 2)) / N)


def support_metrics(beta_hat: np.ndarray, beta_true: np.ndarray, tol: float = 0.0) -> SupportMetrics:
    """Precision, recall and F1 of the estimated support |beta_hat| > tol."""
    est = np.abs(np.asarray(beta_hat)) > tol
    true = np.asarray(beta_true) != 0.0
    if est.shape != true.shape:
        raise DimensionMismatchError(f"shapes differ: {est.shape} vs {true.shape}")
    tp = int(np.sum(est & true))
    fp = int(np.sum(est & ~true))
    fn = int(np.sum(~est & true))
    precision = tp / (tp + fp) if tp + fp else (1.0 if fn == 0 else 0.0)
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return SupportMetrics(precision=precision, recall=recall, f1=f1, support_size=int(est.sum()))
