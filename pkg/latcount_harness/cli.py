"""
latcount command line.

    latcount simulate   --config cfg.json --T 2000 --out counts.csv
    latcount estimate   --counts counts.csv --config cfg.json --out acvf.csv
    latcount lasso      --counts counts.csv --config cfg.json --out lasso.csv
    latcount link-table --marginal-i bernoulli:p=0.5 --out link.csv
    latcount m3-check   --marginal poisson:lambda=2 --out m3.csv
    latcount constants  --config cfg.json --out constants.csv
    latcount mc-run     --config cfg.json --out results.csv --threads 8
    latcount replay     --config cfg.json --cell 500:3 --out cell.csv

Every subcommand accepts --seed, --config and --out; --out '-' (the default)
writes to stdout. Logs go to stderr.
"""

import argparse
import sys
from typing import List, Optional

import numpy as np

from latcount_core.errors import ConfigError, LatCountError
from latcount_core.logging import LatCountLoggerConfig
from latcount_core.settings import DEFAULT_TAIL_TOL
from latcount_estimation.latent_estimator import DiagMode, estimate_latent_acvf
from latcount_estimation.sparse_var import (
    build_problem,
    coeffs_to_beta,
    default_lambda_grid,
    lasso_solve,
)
from latcount_model.link import (
    link_context,
    link_deriv,
    link_deriv2,
    link_eval,
    link_invert,
)
from latcount_model.marginals import m3_series_sweep, tail_sum_inequality
from latcount_model.var_model import simulate, standardize, transform_counts

from . import csv_io
from .experiment import ExperimentRunner, build_model
from .schemas import ExperimentConfig, load_config, parse_marginal
from .logger_config import get_logger

logger = get_logger(__name__)


def _common(parser: argparse.ArgumentParser, config_required: bool = False) -> None:
    parser.add_argument("--config", type=str, required=config_required, help="JSON experiment config.")
    parser.add_argument("--seed", type=int, default=None, help="Overrides master_seed.")
    parser.add_argument("--out", type=str, default="-", help="Output CSV ('-' for stdout).")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latcount",
        description="Latent Gaussian count time series: simulation, estimation and Monte Carlo sweeps.",
    )
    parser.add_argument("--log-level", type=str, default=None, help="Logging level for this run.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Simulate counts from the configured model.")
    _common(p, config_required=True)
    p.add_argument("--T", type=int, default=None, help="Length; defaults to max(n_grid) + L.")
    p.add_argument("--latent-out", type=str, default=None, help="Also write the latent series.")

    p = sub.add_parser("estimate", help="Estimate latent autocovariances from counts.")
    _common(p)
    p.add_argument("--counts", type=str, required=True)
    p.add_argument("--families", type=str, default=None, help="Comma-separated families.")
    p.add_argument("--lags", type=int, default=None, help="Lag blocks L.")
    p.add_argument("--diag-mode", type=str, default=None, choices=[m.value for m in DiagMode])
    p.add_argument("--diagnostics", type=str, default=None, help="Diagnostics CSV path.")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("lasso", help="Sparse VAR LASSO over a lambda grid.")
    _common(p)
    p.add_argument("--counts", type=str, required=True)
    p.add_argument("--families", type=str, default=None)
    p.add_argument("--order", type=int, default=None, help="VAR order p.")
    p.add_argument("--lambdas", type=str, default=None, help="Comma-separated penalties.")
    p.add_argument("--no-psd-project", action="store_true")

    p = sub.add_parser("link-table", help="Tabulate a link function and its inverse.")
    _common(p)
    p.add_argument("--marginal-i", type=str, required=True, help="e.g. poisson:lambda=2")
    p.add_argument("--marginal-j", type=str, default=None, help="Defaults to marginal-i.")
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--u-max", type=float, default=0.95)

    p = sub.add_parser("m3-check", help="M3 series and tail-sum inequality per marginal.")
    _common(p)
    p.add_argument("--marginal", type=str, action="append", default=None)
    p.add_argument("--n-cap", type=int, default=500)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=1)

    p = sub.add_parser("constants", help="Bound constants of the configured model.")
    _common(p, config_required=True)

    p = sub.add_parser("mc-run", help="Run the Monte Carlo sweep.")
    _common(p, config_required=True)
    p.add_argument("--summary", type=str, default=None)
    p.add_argument("--failures", type=str, default=None)
    p.add_argument("--constants-out", type=str, default=None)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("replay", help="Recompute one (N, replicate) cell.")
    _common(p, config_required=True)
    p.add_argument("--cell", type=str, required=True, help="N:replicate")
    return parser


def _load(args) -> Optional[ExperimentConfig]:
    if not args.config:
        return None
    config = load_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={"master_seed": args.seed})
    return config


def _comment(config: ExperimentConfig) -> str:
    return f"latcount config_hash={config.config_hash()} config={config.canonical_json()}"


def _families(args, config: Optional[ExperimentConfig], d: int):
    if args.families:
        families = [f.strip() for f in args.families.split(",")]
        if len(families) == 1:
            families = families * d
        return families, None, None
    if config is None:
        raise ConfigError("give --families or --config")
    specs = config.specs
    return config.families, config.known, specs if config.plug_in_truth else None


def cmd_simulate(args) -> int:
    config = _load(args)
    std = standardize(build_model(config.model, config.master_seed))
    T = args.T or max(config.n_grid) + config.lags
    Z = simulate(std.model, T, seed=config.master_seed)
    X = transform_counts(Z, config.specs)
    csv_io.write_counts(args.out, X)
    if args.latent_out:
        csv_io.write_counts(args.latent_out, Z, prefix="z")
    return 0


def cmd_estimate(args) -> int:
    config = _load(args)
    X = csv_io.read_counts(args.counts)
    families, known, specs = _families(args, config, X.shape[1])
    L = args.lags or (config.lags if config else 1)
    diag_mode = args.diag_mode or (config.diag_mode if config else DiagMode.ESTIMATE_CLAMPED)
    est = estimate_latent_acvf(
        X,
        L,
        families,
        diag_mode=diag_mode,
        known=known,
        specs=specs,
        tail_tol=config.tail_tol if config else DEFAULT_TAIL_TOL,
        max_workers=args.threads,
    )
    csv_io.write_rows(args.out, csv_io.ACVF_COLUMNS, csv_io.acvf_rows(est.acvf_hat.lag_blocks()))
    if args.diagnostics:
        rows = [
            {
                "column": i + 1,
                "marginal": spec.describe(),
                "clipped": est.clipped[i],
                "clamp_hits": est.clamp_hits,
                "diag_clamp_hits": est.diag_clamp_hits,
            }
            for i, spec in enumerate(est.theta_hats)
        ]
        csv_io.write_rows(args.diagnostics, csv_io.DIAGNOSTIC_COLUMNS, rows)
    return 0


def cmd_lasso(args) -> int:
    config = _load(args)
    X = csv_io.read_counts(args.counts)
    d = X.shape[1]
    families, known, specs = _families(args, config, d)
    p = args.order or (config.model.p if config else 1)
    prob = build_problem(X, p, families, known=known, specs=specs)
    if args.lambdas:
        lambdas = [float(v) for v in args.lambdas.split(",")]
    else:
        lambdas = default_lambda_grid(prob.q, X.shape[0] - p)

    beta0 = None
    if config is not None and config.model.d == d and config.model.p == p:
        std = standardize(build_model(config.model, config.master_seed))
        beta0 = coeffs_to_beta(std.model.coeffs)

    rows = []
    for lam in lambdas:
        sol = lasso_solve(prob.with_lambda(lam), psd_project=not args.no_psd_project)
        row = {
            "lambda": float(lam),
            "support_size": int(np.count_nonzero(sol.beta_hat)),
            "kkt_residual": sol.kkt_residual,
            "iterations": sol.iterations,
            "converged": sol.converged,
        }
        if beta0 is not None:
            row["l1_error"] = float(np.sum(np.abs(sol.beta_hat - beta0)))
            row["l2_error"] = float(np.linalg.norm(sol.beta_hat - beta0))
        rows.append(row)
    csv_io.write_rows(args.out, csv_io.LASSO_COLUMNS, rows)
    return 0


def cmd_link_table(args) -> int:
    spec_i = parse_marginal(args.marginal_i)
    spec_j = parse_marginal(args.marginal_j) if args.marginal_j else spec_i
    ctx = link_context(spec_i, spec_j)
    rows = []
    for u in np.linspace(-args.u_max, args.u_max, args.points):
        u = float(u)
        ell = link_eval(ctx, u)
        rows.append(
            {
                "u": u,
                "ell": ell,
                "ell_prime": link_deriv(ctx, u),
                "ell_prime2": link_deriv2(ctx, u),
                "g_of_ell": link_invert(ctx, ell),
            }
        )
    csv_io.write_rows(args.out, csv_io.LINK_TABLE_COLUMNS, rows)
    return 0


def cmd_m3_check(args) -> int:
    config = _load(args)
    if args.marginal:
        specs = [parse_marginal(text) for text in args.marginal]
    elif config is not None:
        specs = list(config.marginals)
    else:
        raise ConfigError("give --marginal or --config")
    rows = []
    for spec in specs:
        series = m3_series_sweep(spec, args.n_cap, args.eps, args.grid)
        tail = tail_sum_inequality(spec)
        rows.append(
            {
                "marginal": spec.describe(),
                "partial_sum": series.partial_sum,
                "converged": series.converged,
                "tail_ratio": series.tail_ratio,
                "n_terms": series.n_terms,
                "tail_lhs": tail.lhs,
                "tail_rhs": tail.rhs,
                "tail_holds": tail.holds,
            }
        )
    csv_io.write_rows(args.out, csv_io.M3_COLUMNS, rows)
    return 0


def cmd_constants(args) -> int:
    config = _load(args)
    enabled = config.constants.model_copy(update={"enabled": True})
    runner = ExperimentRunner(config.model_copy(update={"constants": enabled}), threads=1)
    rows = runner.constants()
    csv_io.write_rows(args.out, list(rows[0].keys()), rows, comment=_comment(config))
    return 0


def cmd_mc_run(args) -> int:
    config = _load(args)
    runner = ExperimentRunner(config, threads=args.threads)
    result = runner.run()
    comment = _comment(config)
    out = args.out if args.out != "-" else (config.output.results or "-")
    csv_io.write_rows(out, csv_io.RESULT_COLUMNS, result.rows, comment=comment)
    summary_path = args.summary or config.output.summary
    if summary_path:
        csv_io.write_rows(summary_path, csv_io.SUMMARY_COLUMNS, result.summary, comment=comment)
    failures_path = args.failures or config.output.failures
    if failures_path:
        csv_io.write_rows(failures_path, csv_io.FAILURE_COLUMNS, result.failures, comment=comment)
    constants_path = args.constants_out or config.output.constants
    if constants_path and result.constants:
        csv_io.write_rows(
            constants_path, list(result.constants[0].keys()), result.constants, comment=comment
        )
    if result.failures:
        logger.warning("%d cells failed; see the error column", len(result.failures))
    return 0


def cmd_replay(args) -> int:
    config = _load(args)
    try:
        n_text, rep_text = args.cell.split(":")
        n, rep = int(n_text), int(rep_text)
    except ValueError as exc:
        raise ConfigError(f"--cell must look like N:replicate, got {args.cell!r}") from exc
    rows = ExperimentRunner(config, threads=1).replay(n, rep)
    csv_io.write_rows(args.out, csv_io.RESULT_COLUMNS, rows, comment=_comment(config))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "lasso": cmd_lasso,
    "link-table": cmd_link_table,
    "m3-check": cmd_m3_check,
    "constants": cmd_constants,
    "mc-run": cmd_mc_run,
    "replay": cmd_replay,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        LatCountLoggerConfig.set_level(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except LatCountError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
