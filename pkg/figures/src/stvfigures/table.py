"""Reading the solver's indicator tables.

The only coupling to the solver is the documented CSV schema; nothing
here imports the solver package.
"""

from __future__ import annotations

import csv

import numpy as np

__all__ = ["COLUMNS", "TableError", "read_table", "select_column"]

COLUMNS = (
    "path_id", "n", "t_n", "tau_n", "ndof",
    "eta_time1", "eta_time2", "eta_space1", "eta_space2",
    "eta_noise1", "eta_noise2", "eta_noise3", "eta_lin", "fp_iters",
)

_INT_COLUMNS = ("path_id", "n", "ndof", "fp_iters")


class TableError(Exception):
    """Raised for malformed or empty indicator tables."""


def read_table(path: str) -> dict:
    """Parse an indicator CSV into column arrays keyed by column name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: file is empty") from None
        if tuple(header) != COLUMNS:
            raise TableError(
                f"{path}: unexpected header {','.join(header)!r}; "
                f"expected {','.join(COLUMNS)!r}"
            )
        rows = [row for row in reader if row]
    if not rows:
        raise TableError(f"{path}: no data rows")
    if any(len(row) != len(COLUMNS) for row in rows):
        raise TableError(f"{path}: ragged row")
    raw = np.array(rows, dtype=np.float64)
    out = {}
    for j, name in enumerate(COLUMNS):
        col = raw[:, j]
        out[name] = col.astype(np.int64) if name in _INT_COLUMNS else col
    return out


def select_column(table: dict, name: str) -> np.ndarray:
    """Column lookup with a helpful error for unknown names."""
    if name not in table:
        raise TableError(
            f"unknown column {name!r}; available columns: {', '.join(table)}"
        )
    return table[name]
