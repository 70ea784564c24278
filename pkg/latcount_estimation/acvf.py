"""
Sample and theoretical autocovariances in block form, and the sparse
operator norm ||A||_s = sup |v'Av| over unit vectors with at most 2s nonzeros.

Block layout: with V_t = (X_{t-1}', ..., X_{t-L}')', big = E[V V'] so that
block (a, b) = E[X_{t-a} X_{t-b}'] = Gamma(b - a), and gamma_vec stacks
E[X_{t-a} X_t'] = Gamma(a)' for a = 1..L. This is the normal-equation layout
of the VAR regression of X_t on its L lags.
"""

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from latcount_core.errors import (
    BudgetError,
    DimensionMismatchError,
    DomainError,
    InsufficientDataError,
)
from latcount_core.settings import DEFAULT_TAIL_TOL
from latcount_core.utils import make_rng, ordered_map
from latcount_model.link import link_at_one, link_context, link_eval
from latcount_model.marginals import MarginalSpec
from latcount_model.var_model import LatentAcvf

from .logger_config import get_logger

logger = get_logger(__name__)

EXACT_BUDGET = 10**6
_BATCH = 4096


@dataclass(frozen=True, eq=False)
class BlockAcvf:
    L: int
    d: int
    big: np.ndarray
    gamma_vec: np.ndarray

    def block(self, a: int, b: int) -> np.ndarray:
        """Block (a, b) of big, 1-indexed."""
        d = self.d
        return self.big[(a - 1) * d : a * d, (b - 1) * d : b * d]

    def lag_blocks(self) -> np.ndarray:
        """Gamma(0..L) recovered as (block(1,1), gamma blocks transposed)."""
        d = self.d
        lags = np.empty((self.L + 1, d, d))
        lags[0] = self.block(1, 1)
        for a in range(1, self.L + 1):
            lags[a] = self.gamma_vec[(a - 1) * d : a * d, :].T
        return lags

    def frame_matrix(self) -> np.ndarray:
        """(L+1)d x (L+1)d matrix of (X_t, X_{t-1}, ..., X_{t-L}), big in the lower block."""
        d, L = self.d, self.L
        out = np.empty(((L + 1) * d, (L + 1) * d))
        out[:d, :d] = self.block(1, 1)
        out[d:, d:] = self.big
        out[d:, :d] = self.gamma_vec
        out[:d, d:] = self.gamma_vec.T
        return out

    @classmethod
    def from_lags(cls, lags: np.ndarray, L: int) -> "BlockAcvf":
        """Population block form from Gamma(0..L)."""
        lags = np.asarray(lags, dtype=float)
        if lags.shape[0] < L + 1:
            raise DimensionMismatchError(f"need lags 0..{L}, got {lags.shape[0]} lags")
        d = lags.shape[1]
        gamma_vec = np.vstack([lags[a].T for a in range(1, L + 1)])
        return cls(L=L, d=d, big=block_toeplitz(lags, L), gamma_vec=gamma_vec)


@dataclass(frozen=True)
class SparseNorm:
    value: float
    lower_bound: bool


def block_toeplitz(lags: np.ndarray, L: int) -> np.ndarray:
    """Ld x Ld matrix with block (a, b) = Gamma(b - a); needs Gamma(0..L-1)."""
    lags = np.asarray(lags, dtype=float)
    if lags.shape[0] < L:
        raise DimensionMismatchError(f"need lags 0..{L - 1}, got {lags.shape[0]} lags")
    d = lags.shape[1]
    big = np.empty((L * d, L * d))
    for a in range(L):
        for b in range(L):
            h = b - a
            big[a * d : (a + 1) * d, b * d : (b + 1) * d] = lags[h] if h >= 0 else lags[-h].T
    return big


def sample_block_acvf(X: np.ndarray, L: int) -> BlockAcvf:
    """
    Sample block ACVF with a single divisor N = T - L.

    Columns are centered by their full-sample means. Row m of the (L+1)-frame
    design is (X_{m+L}', X_{m+L-1}', ..., X_m'); frames 1..L give big and
    frame 0 against frames 1..L gives gamma_vec.

    :param X: observations, shape (T, d)
    :param L: number of lag blocks, >= 1
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    T, d = X.shape
    if T <= L:
        raise InsufficientDataError(f"need T > L, got T={T}, L={L}")

    Xc = X - X.mean(axis=0)
    n = T - L
    frames = [Xc[L - a : T - a] for a in range(L + 1)]
    design = np.hstack(frames[1:])
    big = design.T @ design / n
    big = 0.5 * (big + big.T)
    gamma_vec = design.T @ frames[0] / n
    return BlockAcvf(L=L, d=d, big=big, gamma_vec=gamma_vec)


def theoretical_count_acvf(
    acvf_z: LatentAcvf,
    specs: List[MarginalSpec],
    tail_tol: float = DEFAULT_TAIL_TOL,
    max_workers: int = 1,
) -> BlockAcvf:
    """
    Gamma_X(h) = l(Gamma_Z(h)) entrywise for h = 0..L (L = acvf_z.max_lag);
    the lag-0 diagonal is the marginal variance.
    """
    if not acvf_z.standardized:
        raise DomainError("theoretical count ACVF needs a standardized latent ACVF")
    d = acvf_z.d
    if len(specs) != d:
        raise DimensionMismatchError(f"{len(specs)} marginals for dimension {d}")
    L = acvf_z.max_lag
    if L < 1:
        raise DomainError("latent ACVF must include at least lag 1")

    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    contexts = dict(
        zip(
            pairs,
            ordered_map(
                lambda ij: link_context(specs[ij[0]], specs[ij[1]], tail_tol),
                pairs,
                max_workers=max_workers,
            ),
        )
    )

    def entry(task):
        h, i, j = task
        if h == 0 and i == j:
            return link_at_one(specs[i])
        return link_eval(contexts[(min(i, j), max(i, j))], float(acvf_z.lags[h, i, j]))

    tasks = [(h, i, j) for h in range(L + 1) for i in range(d) for j in range(d)]
    values = ordered_map(entry, tasks, max_workers=max_workers)
    lags = np.asarray(values).reshape(L + 1, d, d)
    lags[0] = 0.5 * (lags[0] + lags[0].T)
    return BlockAcvf.from_lags(lags, L)


def _max_principal_eig(A: np.ndarray, k: int) -> float:
    """max over supports |S| = k of the spectral radius of A[S, S]."""
    dim = A.shape[0]
    best = 0.0
    combos = itertools.combinations(range(dim), k)
    while True:
        batch = np.array(list(itertools.islice(combos, _BATCH)))
        if batch.size == 0:
            return best
        sub = A[batch[:, :, None], batch[:, None, :]]
        eig = np.linalg.eigvalsh(sub)
        best = max(best, float(np.max(np.abs(eig))))


def _truncated_power(A: np.ndarray, k: int, restarts: int, seed: int) -> float:
    dim = A.shape[0]
    rng = make_rng(seed)
    best = 0.0
    starts = [np.abs(np.diag(A))] + [rng.standard_normal(dim) for _ in range(restarts - 1)]
    for sign in (1.0, -1.0):
        M = sign * A
        # shift so the power method targets the largest algebraic eigenvalue
        shift = np.max(np.abs(A)) * dim
        for v in starts:
            v = v.astype(float).copy()
            support = None
            for _ in range(100):
                w = M @ v + shift * v
                keep = np.argsort(-np.abs(w))[:k]
                v = np.zeros(dim)
                v[keep] = w[keep]
                norm = np.linalg.norm(v)
                if norm == 0.0:
                    break
                v /= norm
                new_support = tuple(sorted(keep))
                if new_support == support:
                    break
                support = new_support
            if support is not None:
                idx = np.array(support)
                eig = np.linalg.eigvalsh(A[np.ix_(idx, idx)])
                best = max(best, float(np.max(np.abs(eig))))
    return best


def sparse_norm(
    A: np.ndarray,
    s: int,
    mode: str = "exact",
    budget: int = EXACT_BUDGET,
    restarts: int = 50,
    seed: int = 0,
    support_size: Optional[int] = None,
) -> SparseNorm:
    """
    ||A||_s for symmetric (or complex Hermitian) A.

    Args:
        A: square matrix
        s: sparsity; supports have size min(2s, dim) unless support_size is given
        mode: "exact" enumerates all supports; "heuristic" runs a truncated
            power method and returns a lower bound; "auto" picks exact when
            affordable
        budget: maximum number of supports for exact mode
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"sparse norm needs a square matrix, got {A.shape}")
    if s < 1:
        raise DomainError(f"s must be >= 1, got {s}")
    dim = A.shape[0]
    k = min(support_size if support_size is not None else 2 * s, dim)
    count = math.comb(dim, k)

    if mode == "auto":
        mode = "exact" if count <= budget else "heuristic"
    if mode == "exact":
        if count > budget:
            raise BudgetError(
                f"exact sparse norm needs {count} supports (budget {budget}); use mode='heuristic'"
            )
        if k == dim:
            return SparseNorm(float(np.max(np.abs(np.linalg.eigvalsh(A)))), False)
        return SparseNorm(_max_principal_eig(A, k), False)
    if mode == "heuristic":
        if np.iscomplexobj(A):
            raise DomainError("heuristic sparse norm supports real symmetric matrices only")
        return SparseNorm(_truncated_power(A, k, restarts, seed), True)
    raise DomainError(f"unknown sparse norm mode {mode!r}")
