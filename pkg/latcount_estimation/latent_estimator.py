"""
Plug-in estimator of the latent autocovariances.

Gamma_Z is estimated by inverting the estimated link entrywise on the sample
count block ACVF. Marginal parameters are fitted per column unless true
parameters are supplied.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from latcount_core.errors import DegenerateMarginalError, DimensionMismatchError
from latcount_core.settings import DEFAULT_TAIL_TOL
from latcount_core.utils import measure_time, ordered_map
from latcount_model.link import (
    DEFAULT_U_CLAMP,
    link_context,
    link_invert,
    link_invert_diagonal,
)
from latcount_model.marginals import MarginalSpec, fit_theta
from latcount_model.var_model import LatentAcvf

from .acvf import BlockAcvf, sample_block_acvf, sparse_norm
from .logger_config import get_logger

logger = get_logger(__name__)


class DiagMode(str, Enum):
    FORCE_ONE = "force_one"
    ESTIMATE_CLAMPED = "estimate_clamped"


@dataclass(frozen=True, eq=False)
class LatentEstimate:
    """
    Latent block ACVF estimate.

    clamp_hits counts inverted entries (upper triangle of big plus gamma_vec)
    that fell outside the link range; diag_clamp_hits counts lag-0 diagonal
    entries mapped to 0 or 1 in estimate_clamped mode.
    """

    acvf_hat: BlockAcvf
    theta_hats: List[MarginalSpec]
    diag_mode: DiagMode
    clamp_hits: int
    diag_clamp_hits: int
    acvf_x: BlockAcvf
    clipped: List[bool]


@dataclass(frozen=True)
class RecoveryError:
    max_norm: float
    sparse_norm_err: float
    frobenius: float
    sparse_exact: bool


def _resolve_specs(
    X: np.ndarray,
    families: Optional[Sequence],
    known: Optional[Sequence[Optional[Dict]]],
    specs: Optional[Sequence[MarginalSpec]],
):
    d = X.shape[1]
    if specs is not None:
        if len(specs) != d:
            raise DimensionMismatchError(f"{len(specs)} marginals for {d} columns")
        return list(specs), [False] * d
    if families is None or len(families) != d:
        raise DimensionMismatchError(f"need one family per column ({d} columns)")
    known = list(known) if known is not None else [None] * d
    if len(known) != d:
        raise DimensionMismatchError(f"{len(known)} known-parameter entries for {d} columns")

    fitted, clipped = [], []
    for i, family in enumerate(families):
        extra = known[i] or {}
        fit = fit_theta(X[:, i], family, n_trials=extra.get("n_trials"), r=extra.get("r"))
        fitted.append(fit.spec)
        clipped.append(fit.clipped)
    return fitted, clipped


@measure_time(logger, precision=3, prefix="Latent ACVF: ")
def estimate_latent_acvf(
    X: np.ndarray,
    L: int,
    families: Optional[Sequence] = None,
    diag_mode: DiagMode = DiagMode.ESTIMATE_CLAMPED,
    known: Optional[Sequence[Optional[Dict]]] = None,
    specs: Optional[Sequence[MarginalSpec]] = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
    u_clamp: float = DEFAULT_U_CLAMP,
    max_workers: int = 1,
) -> LatentEstimate:
    """
    Estimate Gamma_Z(0..L) from observed counts.

    Args:
        X: counts, shape (T, d), T > L
        L: number of lag blocks
        families: one family name per column, used for moment fits
        diag_mode: how lag-0 diagonal entries are set
        known: per-column dicts with known constants (n_trials, r)
        specs: true marginals; skips fitting when given
        tail_tol: threshold-table tail tolerance
        u_clamp: inversion range [-u_clamp, u_clamp]
        max_workers: threads used for the entrywise inversions

    Returns:
        LatentEstimate
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    diag_mode = DiagMode(diag_mode)
    constant = [i for i in range(X.shape[1]) if np.all(X[:, i] == X[0, i])]
    if constant:
        raise DegenerateMarginalError(f"columns {constant} are constant")

    theta_hats, clipped = _resolve_specs(X, families, known, specs)
    acvf_x = sample_block_acvf(X, L)
    d = acvf_x.d

    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    contexts = dict(
        zip(
            pairs,
            ordered_map(
                lambda ij: link_context(theta_hats[ij[0]], theta_hats[ij[1]], tail_tol, u_clamp),
                pairs,
                max_workers=max_workers,
            ),
        )
    )

    def ctx_for(i, j):
        return contexts[(min(i, j), max(i, j))]

    size = L * d
    # (matrix, row, col, i, j, lag-0 diagonal?)
    tasks = []
    for r in range(size):
        for c in range(r, size):
            tasks.append(("big", r, c, r % d, c % d, r == c))
    for r in range(size):
        for j in range(d):
            tasks.append(("gamma", r, j, r % d, j, False))

    def invert(task):
        _, r, c, i, j, is_diag = task
        source = acvf_x.big if task[0] == "big" else acvf_x.gamma_vec
        x = float(source[r, c])
        ctx = ctx_for(i, j)
        if is_diag:
            if diag_mode == DiagMode.FORCE_ONE:
                return 1.0, False
            return link_invert_diagonal(ctx, x), x >= ctx.ell_hi or x <= 0.0
        return link_invert(ctx, x), x >= ctx.ell_hi or x <= ctx.ell_lo

    results = ordered_map(invert, tasks, max_workers=max_workers)

    big = np.empty((size, size))
    gamma_vec = np.empty((size, d))
    clamp_hits = 0
    diag_clamp_hits = 0
    diag_floor_hits = 0
    for task, (value, hit) in zip(tasks, results):
        kind, r, c, _, _, is_diag = task
        if kind == "big":
            big[r, c] = value
            big[c, r] = value
        else:
            gamma_vec[r, c] = value
        if hit:
            if is_diag:
                diag_clamp_hits += 1
                if value == 0.0:
                    diag_floor_hits += 1
            else:
                clamp_hits += 1

    # a lag-0 diagonal saturating at 1 is the unit latent variance
    if clamp_hits or diag_floor_hits:
        logger.warning(
            "Latent estimate clamped %d off-diagonal entries and %d diagonal entries to 0",
            clamp_hits,
            diag_floor_hits,
        )
    if diag_clamp_hits > diag_floor_hits:
        logger.debug(
            "Latent estimate mapped %d diagonal entries to the unit boundary",
            diag_clamp_hits - diag_floor_hits,
        )
    return LatentEstimate(
        acvf_hat=BlockAcvf(L=L, d=d, big=big, gamma_vec=gamma_vec),
        theta_hats=theta_hats,
        diag_mode=diag_mode,
        clamp_hits=clamp_hits,
        diag_clamp_hits=diag_clamp_hits,
        acvf_x=acvf_x,
        clipped=clipped,
    )


def recovery_error(
    est: LatentEstimate,
    truth: LatentAcvf,
    s: int,
    mode: str = "auto",
) -> RecoveryError:
    """
    Max, Frobenius and sparse-norm distances between the estimated and true
    (L+1)-frame latent block matrices.
    """
    acvf_hat = est.acvf_hat
    if truth.d != acvf_hat.d or truth.max_lag < acvf_hat.L:
        raise DimensionMismatchError(
            f"truth has d={truth.d}, max_lag={truth.max_lag}; "
            f"estimate needs d={acvf_hat.d}, lags 0..{acvf_hat.L}"
        )
    diff = acvf_hat.frame_matrix() - truth.to_block(acvf_hat.L + 1)
    norm = sparse_norm(diff, s, mode=mode)
    return RecoveryError(
        max_norm=float(np.max(np.abs(diff))),
        sparse_norm_err=norm.value,
        frobenius=float(np.linalg.norm(diff)),
        sparse_exact=not norm.lower_bound,
    )
