"""Trace files, convergence-slope fits and purchase-probability scoring."""

from __future__ import annotations

import csv
import math
import warnings

import numpy as np

from .errors import ConfigurationError

BASE_COLUMNS = ["t", "p", "kind", "xi_p", "eps_p", "q_p", "branch", "gtilde_branch", "Z"]
TAIL_COLUMNS = ["ess", "tau", "T", "sigma_norm", "cut", "partition"]


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return "%.17g" % v


def trace_columns(d: int, with_error: bool, timing: bool = False) -> list[str]:
    cols = BASE_COLUMNS + [f"theta_{i + 1}" for i in range(d)]
    if with_error:
        cols.append("error")
    cols += TAIL_COLUMNS
    if timing:
        cols.append("wall_ns_per_obs")
    return cols


def row_values(row, with_error: bool, timing: bool = False) -> list[str]:
    vals = [fmt(row.t), fmt(row.p), row.kind, fmt(row.xi), fmt(row.eps), fmt(row.q),
            row.branch, row.gtilde, fmt(row.Z)]
    vals += [fmt(v) for v in row.estimate]
    if with_error:
        vals.append(fmt(row.error))
    vals += [fmt(row.ess), fmt(row.tau), fmt(row.T), fmt(row.sigma_norm), fmt(row.cut),
             row.partition]
    if timing:
        vals.append(fmt(row.wall_ns_per_obs))
    return vals


class TraceWriter:
    """Append-only CSV trace; one line per row, flushed as rows arrive.

    The wall-clock column is opt-in (``timing=True``) because it is the only
    field that differs between otherwise identical runs.
    """

    def __init__(self, path, d: int, with_error: bool, timing: bool = False):
        self.with_error, self.timing = with_error, timing
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(trace_columns(d, with_error, timing))
        self._fh.flush()

    def __call__(self, row):
        self._w.writerow(row_values(row, self.with_error, self.timing))
        self._fh.flush()

    def close(self):
        self._fh.close()


def write_trace(path, rows, d: int, with_error: bool, timing: bool = False):
    w = TraceWriter(path, d, with_error, timing)
    for r in rows:
        w(r)
    w.close()


def read_trace(path) -> dict:
    """Columns of a trace file; numeric columns as float arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty trace")
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        if name in ("kind", "branch", "gtilde_branch", "partition"):
            out[name] = col
        else:
            try:
                out[name] = np.array([float(v) for v in col])
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad value in column {name!r} ({exc})") from exc
    return out


def slope_diagnostic(t, error, window: float = 1.0, min_rows: int = 5) -> float:
    """Least-squares slope of log(error) against log(t) over the last ``window`` decades.

    Returns NaN (with a warning) when an error in the window is zero.
    """
    t = np.asarray(t, dtype=float)
    error = np.asarray(error, dtype=float)
    keep = np.isfinite(error) & (t > 0)
    t, error = t[keep], error[keep]
    if len(t) == 0:
        raise ConfigurationError("no rows with a finite error")
    sel = t >= t.max() / 10.0**window
    if sel.sum() < min_rows:
        raise ConfigurationError(f"need at least {min_rows} rows in the window, got {int(sel.sum())}")
    if np.any(error[sel] <= 0.0):
        warnings.warn("zero error inside the fit window; slope undefined", RuntimeWarning)
        return float("nan")
    slope, _ = np.polyfit(np.log(t[sel]), np.log(error[sel]), 1)
    return float(slope)


def trace_slope(trace: dict, window: float = 1.0) -> float:
    if "error" not in trace:
        raise ConfigurationError("trace has no error column (run without a known truth)")
    kinds = np.array(trace["kind"])
    sel = kinds == "perturb"
    return slope_diagnostic(trace["t"][sel], trace["error"][sel], window)


def predict_scores(model, theta, csv_in, csv_out):
    """Write P(z = 1 | x) for every row of ``csv_in``.

    The input may carry a leading response column (same layout as the
    training CSV) or covariates only; a response column is echoed.
    """
    with open(csv_in, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{csv_in}: missing header row")
    header, body = rows[0], [r for r in rows[1:] if r]
    width = len(header)
    if width == model.x_dim + 1:
        has_z = True
    elif width == model.x_dim:
        has_z = False
    else:
        raise ConfigurationError(
            f"{csv_in}: {width} columns, model expects {model.x_dim} covariates")
    try:
        arr = np.array(body, dtype=float).reshape(len(body), width)
    except ValueError as exc:
        raise ConfigurationError(f"{csv_in}: malformed row ({exc})") from exc
    x = arr[:, 1:] if has_z else arr
    scores = model.predict_proba(theta, x)
    with open(csv_out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(([header[0]] if has_z else []) + ["score"])
        for k in range(len(arr)):
            w.writerow(([fmt(arr[k, 0])] if has_z else []) + [fmt(scores[k])])
    return scores
