"""Time-series transforms applied to indicator columns before plotting."""

from __future__ import annotations

import numpy as np

from .table import TableError, select_column

__all__ = ["running_average", "path_series", "mean_series"]


def running_average(t: np.ndarray, tau: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Running time average t_n -> (sum_{i<=n} tau_i v_i) / t_n.

    Step-weighted so that a constant sequence maps to itself exactly,
    also under non-uniform step sizes.
    """
    t = np.asarray(t, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if not (t.shape == tau.shape == values.shape) or t.ndim != 1:
        raise TableError("running average needs three aligned flat arrays")
    if t.size == 0:
        raise TableError("running average of an empty series")
    if np.any(t <= 0) or np.any(tau <= 0):
        raise TableError("times and step sizes must be positive")
    return np.cumsum(tau * values) / t


def path_series(table: dict, quantity: str, transform: str = "raw") -> list:
    """Per-path series [(path_id, t, y)] of one column, optionally averaged.

    transform is 'raw' or 'running-average'.
    """
    if transform not in ("raw", "running-average"):
        raise TableError(f"unknown transform {transform!r}")
    vals = select_column(table, quantity)
    ts = table["t_n"]
    taus = table["tau_n"]
    out = []
    for pid in np.unique(table["path_id"]):
        sel = table["path_id"] == pid
        t, tau, v = ts[sel], taus[sel], vals[sel].astype(np.float64)
        y = running_average(t, tau, v) if transform == "running-average" else v
        out.append((int(pid), t, y))
    return out


def mean_series(series: list, n_grid: int = 256):
    """Pointwise mean of per-path series.

    A single path is returned on its own grid; several paths are
    interpolated onto a shared uniform grid spanning the overlap of
    their time ranges.
    """
    if not series:
        raise TableError("mean of zero series")
    if len(series) == 1:
        _, t, y = series[0]
        return t, y
    lo = max(t[0] for _, t, _ in series)
    hi = min(t[-1] for _, t, _ in series)
    grid = np.linspace(lo, hi, n_grid)
    stack = np.vstack([np.interp(grid, t, y) for _, t, y in series])
    return grid, stack.mean(axis=0)
