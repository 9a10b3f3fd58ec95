"""Deterministic figure generation for solver indicator tables."""

from .figures import FAMILIES, FigureSpec, plot_series, render_all, render_family
from .series import mean_series, path_series, running_average
from .table import COLUMNS, TableError, read_table, select_column

__all__ = [
    "COLUMNS",
    "FAMILIES",
    "FigureSpec",
    "TableError",
    "mean_series",
    "path_series",
    "plot_series",
    "read_table",
    "render_all",
    "render_family",
    "running_average",
    "select_column",
]
