"""
CSV readers and writers with fixed headers.

Floats are written with 17 significant digits so that values round-trip
exactly. An optional first line starting with '#' echoes the config.
"""

import csv
import io
import math
import sys
from contextlib import contextmanager
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO

import numpy as np

from latcount_core.errors import DimensionMismatchError

from .logger_config import get_logger

logger = get_logger(__name__)

RESULT_COLUMNS = [
    "config_hash",
    "n",
    "replicate",
    "T",
    "lambda_index",
    "lambda",
    "lambda_oracle",
    "latent_max_err",
    "latent_sparse_err",
    "latent_frobenius",
    "sparse_exact",
    "clamp_hits",
    "diag_clamp_hits",
    "dev_max",
    "l1_error",
    "l2_error",
    "precision",
    "recall",
    "f1",
    "support_size",
    "kkt_residual",
    "iterations",
    "converged",
    "error",
]

SUMMARY_COLUMNS = ["n", "lambda_index", "metric", "median", "q25", "q75", "iqr", "count"]
FAILURE_COLUMNS = ["n", "replicate", "error"]
ACVF_COLUMNS = ["lag", "i", "j", "value"]
LASSO_COLUMNS = [
    "lambda",
    "support_size",
    "l1_error",
    "l2_error",
    "kkt_residual",
    "iterations",
    "converged",
]
LINK_TABLE_COLUMNS = ["u", "ell", "ell_prime", "ell_prime2", "g_of_ell"]
M3_COLUMNS = [
    "marginal",
    "partial_sum",
    "converged",
    "tail_ratio",
    "n_terms",
    "tail_lhs",
    "tail_rhs",
    "tail_holds",
]
DIAGNOSTIC_COLUMNS = ["column", "marginal", "clipped", "clamp_hits", "diag_clamp_hits"]


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


@contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def write_rows(
    path: Optional[str],
    columns: Sequence[str],
    rows: Iterable[Dict[str, Any]],
    comment: Optional[str] = None,
) -> None:
    """
    Write dict rows under a fixed header; path None or '-' means stdout.

    Missing keys are written as empty cells; unknown keys are an error.
    """
    with _open_out(path) as fh:
        _write(fh, columns, rows, comment)
    if path not in (None, "-"):
        logger.info("Wrote %s", path)


def _write(fh: TextIO, columns, rows, comment) -> None:
    if comment is not None:
        fh.write(f"# {comment}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        extra = set(row) - set(columns)
        if extra:
            raise DimensionMismatchError(f"unexpected columns {sorted(extra)}")
        writer.writerow([format_value(row.get(col)) for col in columns])


def rows_to_text(columns: Sequence[str], rows: Iterable[Dict[str, Any]], comment=None) -> str:
    buf = io.StringIO()
    _write(buf, columns, rows, comment)
    return buf.getvalue()


def read_rows(path: str) -> List[Dict[str, str]]:
    """Rows as string dicts, skipping '#' comment lines."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write_counts(path: Optional[str], X: np.ndarray, prefix: str = "x") -> None:
    """Matrix as columns t, {prefix}_1..{prefix}_d."""
    X = np.atleast_2d(np.asarray(X))
    columns = ["t"] + [f"{prefix}_{i + 1}" for i in range(X.shape[1])]
    rows = (
        {"t": t, **{columns[i + 1]: X[t, i] for i in range(X.shape[1])}}
        for t in range(X.shape[0])
    )
    write_rows(path, columns, rows)


def read_counts(path: str) -> np.ndarray:
    """Integer matrix from a counts CSV; a leading 't' column is dropped."""
    rows = read_rows(path)
    if not rows:
        raise DimensionMismatchError(f"{path} holds no observations")
    columns = [c for c in rows[0].keys() if c != "t"]
    return np.array([[int(float(row[c])) for c in columns] for row in rows], dtype=np.int64)


def acvf_rows(lags: np.ndarray) -> List[Dict[str, Any]]:
    """Long-format rows (lag, i, j, value) of Gamma(0..L)."""
    return [
        {"lag": h, "i": i + 1, "j": j + 1, "value": float(lags[h, i, j])}
        for h in range(lags.shape[0])
        for i in range(lags.shape[1])
        for j in range(lags.shape[2])
    ]
