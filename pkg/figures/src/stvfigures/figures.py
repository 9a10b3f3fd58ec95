"""Figure rendering for indicator tables.

All output is deterministic: fixed canvas size and dpi, a pinned color
cycle, and constant image metadata, so identical CSV input reproduces
identical image bytes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .series import mean_series, path_series
from .table import TableError, read_table, select_column

__all__ = ["FigureSpec", "plot_series", "series_lines", "render_family",
           "render_all", "FAMILIES"]

FIGSIZE = (6.4, 4.2)
DPI = 150
_METADATA = {"Software": "stvfigures"}
_COLORS = plt.cm.tab10.colors


@dataclass(frozen=True)
class FigureSpec:
    """One figure: a quantity drawn from one or more indicator tables.

    inputs are (label, csv_path) pairs; the label groups the table's
    paths (one tolerance level, one scheme, ...).  quantity must be a
    CSV column.  transform is 'raw' or 'running-average'.  grouping
    'mean' draws one line per label, 'path' one line per sample path.
    """

    inputs: tuple
    quantity: str
    out_path: str
    transform: str = "running-average"
    grouping: str = "mean"
    logy: bool = True
    ylabel: str | None = None
    title: str | None = None

    def __post_init__(self):
        if not self.inputs:
            raise TableError("figure needs at least one input table")
        if self.grouping not in ("mean", "path"):
            raise TableError(f"unknown grouping {self.grouping!r}")


def series_lines(spec: FigureSpec) -> list:
    """Resolve a spec to plottable lines [(name, t, y)].

    Reads and validates every input before returning, so callers can
    rely on no output being produced for malformed tables.
    """
    lines = []
    for label, path in spec.inputs:
        table = read_table(path)
        select_column(table, spec.quantity)
        per_path = path_series(table, spec.quantity, spec.transform)
        if spec.grouping == "path":
            for pid, t, y in per_path:
                name = f"{label} path {pid}" if len(per_path) > 1 else label
                lines.append((name, t, y))
        else:
            t, y = mean_series(per_path)
            lines.append((label, t, y))
    return lines


def _render(lines: list, out_path: str, logy: bool, ylabel: str, title: str | None) -> str:
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    try:
        for i, (name, t, y) in enumerate(lines):
            ax.plot(t, y, label=name, color=_COLORS[i % len(_COLORS)], linewidth=1.4)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        if len(lines) > 1:
            ax.legend(fontsize=8)
        fig.tight_layout()
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        fig.savefig(out_path, metadata=_METADATA)
    finally:
        plt.close(fig)
    return out_path


def plot_series(spec: FigureSpec) -> str:
    """Render one spec to its output path and return that path."""
    lines = series_lines(spec)
    ylabel = spec.ylabel or spec.quantity
    if spec.transform == "running-average":
        ylabel = f"time-averaged {ylabel}"
    return _render(lines, spec.out_path, spec.logy, ylabel, spec.title)


# -- the four figure families ---------------------------------------------------


def _fig_indicators(inputs: tuple, out_dir: str) -> str:
    """Running averages of the main error indicators, one panel."""
    quantities = ("eta_time2", "eta_space1", "eta_space2", "eta_noise1", "eta_lin")
    lines = []
    for q in quantities:
        for label, t, y in series_lines(
            FigureSpec(inputs=inputs, quantity=q, out_path="")
        ):
            name = q if len(inputs) == 1 else f"{label} {q}"
            lines.append((name, t, y))
    return _render(lines, os.path.join(out_dir, "indicators.png"), True,
                   "time-averaged indicator", "Error indicator evolution")


def _fig_dofs(inputs: tuple, out_dir: str) -> str:
    spec = FigureSpec(inputs=inputs, quantity="ndof", transform="raw",
                      grouping="path", logy=False,
                      out_path=os.path.join(out_dir, "dofs.png"),
                      ylabel="degrees of freedom", title="Mesh size history")
    return plot_series(spec)


def _fig_timesteps(inputs: tuple, out_dir: str) -> str:
    spec = FigureSpec(inputs=inputs, quantity="tau_n", transform="raw",
                      grouping="path", logy=True,
                      out_path=os.path.join(out_dir, "timesteps.png"),
                      ylabel="tau", title="Time step history")
    return plot_series(spec)


def _fig_schemes(inputs: tuple, out_dir: str) -> str:
    """Scheme comparison: 2x2 panels of eta_lin, eta_time2, tau, space."""
    panels = (
        ("eta_lin", "running-average", True),
        ("eta_time2", "running-average", True),
        ("tau_n", "raw", True),
        ("eta_space1", "running-average", True),
    )
    fig, axes = plt.subplots(2, 2, figsize=(FIGSIZE[0] * 1.4, FIGSIZE[1] * 1.4), dpi=DPI)
    try:
        for ax, (q, transform, logy) in zip(axes.ravel(), panels):
            spec = FigureSpec(inputs=inputs, quantity=q, out_path="", transform=transform)
            for i, (name, t, y) in enumerate(series_lines(spec)):
                ax.plot(t, y, label=name, color=_COLORS[i % len(_COLORS)], linewidth=1.2)
            if logy:
                ax.set_yscale("log")
            ax.set_xlabel("t")
            ax.set_ylabel(q if transform == "raw" else f"time-averaged {q}")
            ax.grid(True, which="both", alpha=0.3)
        axes[0, 0].legend(fontsize=8)
        fig.suptitle("Linearization comparison")
        fig.tight_layout()
        out_path = os.path.join(out_dir, "schemes.png")
        os.makedirs(os.path.abspath(out_dir), exist_ok=True)
        fig.savefig(out_path, metadata=_METADATA)
    finally:
        plt.close(fig)
    return out_path


FAMILIES = {
    "indicators": _fig_indicators,
    "dofs": _fig_dofs,
    "timesteps": _fig_timesteps,
    "schemes": _fig_schemes,
}

_FAMILY_ORDER = ("indicators", "dofs", "timesteps", "schemes")


def render_family(name: str, inputs: tuple, out_dir: str) -> str:
    if name not in FAMILIES:
        raise TableError(f"unknown figure family {name!r}; choose from {sorted(FAMILIES)}")
    return FAMILIES[name](tuple(inputs), out_dir)


def default_label(csv_path: str) -> str:
    parent = os.path.basename(os.path.dirname(os.path.abspath(csv_path)))
    return parent or os.path.splitext(os.path.basename(csv_path))[0]


def render_all(csv_path, fig_dir: str) -> list:
    """Render every figure family; returns the written paths.

    csv_path is a single table path or a list of (label, path) pairs.
    """
    if isinstance(csv_path, (str, os.PathLike)):
        inputs = ((default_label(str(csv_path)), str(csv_path)),)
    else:
        inputs = tuple(csv_path)
    return [render_family(name, inputs, fig_dir) for name in _FAMILY_ORDER]
