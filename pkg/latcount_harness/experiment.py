"""
Monte Carlo sweeps over an N grid.

Every (N, replicate) cell draws from its own stream derived from the master
seed, so results do not depend on the number of threads or on completion order.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from latcount_core.errors import (
    ConfigError,
    DomainError,
    LatCountError,
    RateFitError,
)
from latcount_core.settings import DEFAULT_THREADS
from latcount_core.utils import derive_seed, make_rng, measure_time, ordered_map
from latcount_estimation.bounds import q_of_gamma, var_bound_quantities
from latcount_estimation.latent_estimator import (
    DiagMode,
    estimate_latent_acvf,
    recovery_error,
)
from latcount_estimation.sparse_var import (
    build_problem,
    coeffs_to_beta,
    default_lambda_grid,
    deviation_check,
    lasso_solve,
    problem_from_estimate,
    support_metrics,
)
from latcount_model.var_model import (
    Standardized,
    VarModel,
    check_causal,
    simulate,
    standardize,
    transform_counts,
)

from .schemas import CoefficientPattern, ExperimentConfig, ExperimentResult, ModelConfig
from .logger_config import get_logger

logger = get_logger(__name__)

MODEL_STREAM = 0
LATENT_METRICS = ("latent_max_err", "latent_sparse_err", "latent_frobenius")
LASSO_METRICS = ("l1_error", "l2_error", "precision", "recall", "f1", "dev_max")
SUMMARY_METRICS = LATENT_METRICS + LASSO_METRICS


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    n_points: int


def build_model(model_cfg: ModelConfig, master_seed: int) -> VarModel:
    """Coefficients and noise from the model section of a config."""
    d, p = model_cfg.d, model_cfg.p
    coeffs = np.zeros((p, d, d))
    if model_cfg.pattern == CoefficientPattern.DIAGONAL:
        coeffs[0] = model_cfg.magnitude * np.eye(d)
    elif model_cfg.pattern == CoefficientPattern.SPARSE_RANDOM:
        # one extra key keeps the model stream apart from the (N, replicate) streams
        rng = make_rng(master_seed, MODEL_STREAM)
        positions = rng.choice(p * d * d, size=model_cfg.sparsity, replace=False)
        signs = rng.choice((-1.0, 1.0), size=model_cfg.sparsity)
        flat = coeffs.reshape(-1)
        flat[positions] = signs * model_cfg.magnitude
    else:
        coeffs = np.asarray(model_cfg.coeffs, dtype=float)

    if model_cfg.noise_cov is not None:
        noise = np.asarray(model_cfg.noise_cov, dtype=float)
    else:
        noise = model_cfg.noise_scale * np.eye(d)
    model = VarModel(coeffs=coeffs, noise_cov=noise)
    causality = check_causal(model)
    if not causality.causal:
        raise ConfigError(
            f"configured VAR model is not causal (spectral radius {causality.spectral_radius:.6g})"
        )
    return model


def fit_log_log(ns: Sequence[float], values: Sequence[float]) -> RateFit:
    """Least-squares line through (log N, log value)."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(ns) < 3:
        raise RateFitError(f"rate fit needs at least 3 N values, got {len(ns)}")
    if np.any(~np.isfinite(values)) or np.any(values <= 0.0):
        raise RateFitError("rate fit needs positive finite medians")
    slope, intercept = np.polyfit(np.log(ns), np.log(values), 1)
    return RateFit(slope=float(slope), intercept=float(intercept), n_points=len(ns))


def _quantiles(values: List[float]):
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return math.nan, math.nan, math.nan, 0
    q25, med, q75 = np.percentile(arr, [25.0, 50.0, 75.0])
    return float(med), float(q25), float(q75), int(arr.size)


def summarize(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Median and IQR of every metric per (N, lambda index), failed rows excluded."""
    groups: Dict[tuple, List[Dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault((row["n"], row["lambda_index"]), []).append(row)
    summary = []
    for (n, lam_idx) in sorted(groups):
        group = groups[(n, lam_idx)]
        for metric in SUMMARY_METRICS:
            med, q25, q75, count = _quantiles([r[metric] for r in group if not r["error"]])
            summary.append(
                {
                    "n": n,
                    "lambda_index": lam_idx,
                    "metric": metric,
                    "median": med,
                    "q25": q25,
                    "q75": q75,
                    "iqr": q75 - q25,
                    "count": count,
                }
            )
    return summary


def rate_fit(
    result: ExperimentResult,
    metric: str = "latent_max_err",
    lambda_index: Optional[int] = None,
) -> RateFit:
    """
    Log-log slope of the per-N median of a metric.

    Latent metrics are taken once per cell. LASSO metrics use the given lambda
    index, or the best (smallest) value over the grid in each cell.
    """
    if metric not in SUMMARY_METRICS:
        raise RateFitError(f"unknown metric {metric!r}")
    per_cell: Dict[tuple, List[float]] = {}
    for row in result.rows:
        if row["error"]:
            continue
        if lambda_index is not None and row["lambda_index"] != lambda_index:
            continue
        per_cell.setdefault((row["n"], row["replicate"]), []).append(row[metric])

    per_n: Dict[int, List[float]] = {}
    for (n, _), values in per_cell.items():
        if metric in LATENT_METRICS:
            value = values[0]
        elif metric in ("precision", "recall", "f1"):
            value = max(values)
        else:
            value = min(values)
        per_n.setdefault(n, []).append(value)
    ns = sorted(per_n)
    return fit_log_log(ns, [float(np.median(per_n[n])) for n in ns])


class ExperimentRunner:
    """
    Runs the (N, replicate) cells of one experiment config.

    Cells run in a thread pool; rows come back ordered by (N, replicate, lambda).
    """

    def __init__(self, config: ExperimentConfig, threads: Optional[int] = None, logger_instance=None):
        self.config = config
        self.threads = threads or config.threads or DEFAULT_THREADS
        self.logger = logger_instance if logger_instance is not None else get_logger(__name__)
        self.config_hash = config.config_hash()
        self.specs = config.specs
        self.model = build_model(config.model, config.master_seed)
        self.standardized: Standardized = standardize(self.model, max_lag=config.lags)
        self.beta0 = coeffs_to_beta(self.standardized.model.coeffs)
        self.logger.info(
            "Experiment %s: d=%d p=%d L=%d, %d N values x %d replicates",
            self.config_hash,
            config.model.d,
            config.model.p,
            config.lags,
            len(config.n_grid),
            config.replicates,
        )

    @property
    def q(self) -> int:
        return self.config.model.p * self.config.model.d**2

    def lambda_grid(self, n: int) -> List[float]:
        if self.config.lambda_grid is not None:
            return [float(v) for v in self.config.lambda_grid]
        return [float(v) for v in default_lambda_grid(self.q, n)]

    def cells(self):
        return [(n, rep) for n in self.config.n_grid for rep in range(self.config.replicates)]

    def _base_row(self, n: int, rep: int, lam_idx: int, lam: float) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "n": n,
            "replicate": rep,
            "T": n + self.config.lags,
            "lambda_index": lam_idx,
            "lambda": lam,
            "error": "",
        }

    def _failed_rows(self, n: int, rep: int, message: str) -> List[Dict[str, Any]]:
        rows = []
        for lam_idx, lam in enumerate(self.lambda_grid(n)):
            row = self._base_row(n, rep, lam_idx, lam)
            row.update({key: math.nan for key in SUMMARY_METRICS})
            row["error"] = message
            rows.append(row)
        return rows

    def run_cell(self, cell) -> List[Dict[str, Any]]:
        n, rep = cell
        try:
            return self._run_cell(n, rep)
        except (LatCountError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            message = f"{type(exc).__name__}: {exc}"
            self.logger.warning("Cell N=%d replicate=%d failed: %s", n, rep, message)
            return self._failed_rows(n, rep, message)

    def _run_cell(self, n: int, rep: int) -> List[Dict[str, Any]]:
        cfg = self.config
        L, p = cfg.lags, cfg.model.p
        T = n + L
        Z = simulate(self.standardized.model, T, seed=derive_seed(cfg.master_seed, n, rep))
        X = transform_counts(Z, self.specs)
        plug_in = self.specs if cfg.plug_in_truth else None

        est = estimate_latent_acvf(
            X,
            L,
            cfg.families,
            diag_mode=cfg.diag_mode,
            known=cfg.known,
            specs=plug_in,
            tail_tol=cfg.tail_tol,
            u_clamp=cfg.u_clamp,
        )
        rec = recovery_error(est, self.standardized.acvf, cfg.norm_s, mode=cfg.norm_mode)

        if L == p and est.diag_mode == DiagMode.FORCE_ONE:
            prob = problem_from_estimate(est, p)
        else:
            prob = build_problem(
                X,
                p,
                cfg.families,
                known=cfg.known,
                specs=plug_in,
                tail_tol=cfg.tail_tol,
                u_clamp=cfg.u_clamp,
            )
        dev = deviation_check(prob, self.beta0)

        rows = []
        for lam_idx, lam in enumerate(self.lambda_grid(n)):
            sol = lasso_solve(prob.with_lambda(lam), tol=cfg.lasso_tol, max_iter=cfg.lasso_max_iter)
            diff = sol.beta_hat - self.beta0
            support = support_metrics(sol.beta_hat, self.beta0)
            row = self._base_row(n, rep, lam_idx, lam)
            row.update(
                {
                    "lambda_oracle": 4.0 * dev,
                    "latent_max_err": rec.max_norm,
                    "latent_sparse_err": rec.sparse_norm_err,
                    "latent_frobenius": rec.frobenius,
                    "sparse_exact": rec.sparse_exact,
                    "clamp_hits": est.clamp_hits,
                    "diag_clamp_hits": est.diag_clamp_hits,
                    "dev_max": dev,
                    "l1_error": float(np.sum(np.abs(diff))),
                    "l2_error": float(np.linalg.norm(diff)),
                    "precision": support.precision,
                    "recall": support.recall,
                    "f1": support.f1,
                    "support_size": support.support_size,
                    "kkt_residual": sol.kkt_residual,
                    "iterations": sol.iterations,
                    "converged": sol.converged,
                }
            )
            rows.append(row)
        return rows

    def constants(self) -> List[Dict[str, Any]]:
        """Bound constants of the true model, one row per N."""
        ccfg = self.config.constants
        if not ccfg.enabled:
            return []
        consts = q_of_gamma(
            self.specs,
            self.standardized.acvf,
            self.config.norm_s,
            eps=ccfg.eps,
            delta_tilde=ccfg.delta_tilde,
            eps_tilde=ccfg.eps_tilde,
            grid=ccfg.grid,
            norm_mode=self.config.norm_mode,
            tail_tol=self.config.tail_tol,
        )
        s = max(self.config.model.n_nonzero, 1)
        rows = []
        for n in self.config.n_grid:
            var = var_bound_quantities(self.standardized.model, s, n, consts.q_const)
            row = {"config_hash": self.config_hash, "n": n}
            row.update(vars(consts))
            row.update(vars(var))
            rows.append(row)
        return rows

    @measure_time(logger, precision=3, prefix="Experiment: ")
    def run(self) -> ExperimentResult:
        results = ordered_map(
            self.run_cell,
            self.cells(),
            max_workers=self.threads,
            desc="cells",
            progress=self.threads > 1,
        )
        rows = [row for cell_rows in results for row in cell_rows]
        failures = []
        for row in rows:
            if row["error"] and row["lambda_index"] == 0:
                failures.append({"n": row["n"], "replicate": row["replicate"], "error": row["error"]})
        if failures:
            self.logger.warning("%d of %d cells failed", len(failures), len(results))
        return ExperimentResult(
            config_hash=self.config_hash,
            rows=rows,
            summary=summarize(rows),
            failures=failures,
            constants=self.constants(),
        )

    def replay(self, n: int, rep: int) -> List[Dict[str, Any]]:
        if n not in self.config.n_grid or not 0 <= rep < self.config.replicates:
            raise DomainError(f"cell {n}:{rep} is not part of this experiment")
        return self.run_cell((n, rep))


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    return ExperimentRunner(config, threads=threads).run()


def replay_cell(config: ExperimentConfig, n: int, rep: int) -> List[Dict[str, Any]]:
    """Rows of a single (N, replicate) cell, identical to those of the full run."""
    return ExperimentRunner(config, threads=1).replay(n, rep)
