"""Delimited output, run summaries, and mesh snapshots.

The indicator table is the data product consumed downstream, so its
header and float formatting are fixed: 17 significant digits round-trip
IEEE doubles exactly, and rows are emitted in (path, step) order so a
repeated run produces a byte-identical file.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .estimators import IndicatorRecord
from .mesh import Mesh

__all__ = [
    "CSV_HEADER",
    "write_indicators_csv",
    "read_indicators_csv",
    "write_summary",
    "write_vtk",
    "snapshot_filename",
]

CSV_HEADER = (
    "path_id,n,t_n,tau_n,ndof,eta_time1,eta_time2,eta_space1,eta_space2,"
    "eta_noise1,eta_noise2,eta_noise3,eta_lin,fp_iters"
)

_FLOAT_FIELDS = (
    "t_n", "tau_n", "eta_time1", "eta_time2", "eta_space1", "eta_space2",
    "eta_noise1", "eta_noise2", "eta_noise3", "eta_lin",
)
_INT_FIELDS = ("path_id", "n", "ndof", "fp_iters")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_indicators_csv(path: str, logs: list) -> None:
    """Write per-step indicator rows for all paths, ordered by path then step."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for log in sorted(logs, key=lambda lg: lg.path_id):
            for r in log.records:
                row = (
                    str(log.path_id), str(r.n), _fmt(r.t), _fmt(r.tau), str(r.ndof),
                    _fmt(r.eta_time1), _fmt(r.eta_time2),
                    _fmt(r.eta_space1), _fmt(r.eta_space2),
                    _fmt(r.eta_noise1), _fmt(r.eta_noise2), _fmt(r.eta_noise3),
                    _fmt(r.eta_lin), str(r.fp_iters),
                )
                fh.write(",".join(row) + "\n")


def read_indicators_csv(path: str) -> dict:
    """Read an indicator table back into column arrays keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or ",".join(reader.fieldnames) != CSV_HEADER:
            raise ValueError(f"unexpected header in {path}")
        cols: dict = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, val in row.items():
                cols[name].append(val)
    out = {}
    for name, vals in cols.items():
        if name in _INT_FIELDS:
            out[name] = np.array(vals, dtype=np.int64)
        else:
            out[name] = np.array(vals, dtype=np.float64)
    return out


def write_summary(path: str, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def snapshot_filename(path_id: int, t: float) -> str:
    return f"path{path_id:03d}_t{t:.6f}.vtk"


def write_vtk(
    path: str,
    mesh: Mesh,
    point_data: np.ndarray,
    cell_data: np.ndarray | None = None,
    title: str = "stvflow snapshot",
) -> None:
    """Write a triangulation with vertex and optional per-triangle fields.

    Legacy ASCII unstructured-grid format, readable by ParaView and VisIt.
    """
    point_data = np.asarray(point_data, dtype=np.float64)
    if point_data.shape != (mesh.nv,):
        raise ValueError("point data must have one value per vertex")
    if cell_data is not None:
        cell_data = np.asarray(cell_data, dtype=np.float64)
        if cell_data.shape != (mesh.n_leaves,):
            raise ValueError("cell data must have one value per triangle")

    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.nv} double",
    ]
    for x, y in mesh.coords:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    nl = mesh.n_leaves
    lines.append(f"CELLS {nl} {4 * nl}")
    for tri in mesh.leaf_local:
        lines.append(f"3 {tri[0]} {tri[1]} {tri[2]}")
    lines.append(f"CELL_TYPES {nl}")
    lines.extend(["5"] * nl)
    lines.append(f"POINT_DATA {mesh.nv}")
    lines.append("SCALARS solution double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in point_data)
    if cell_data is not None:
        lines.append(f"CELL_DATA {nl}")
        lines.append("SCALARS eta_t double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in cell_data)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_run_outputs(out_dir: str, result, snapshots: bool = True) -> dict:
    """Write the standard artifact set for a campaign into out_dir.

    Returns the paths written, keyed by artifact kind.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    csv_path = os.path.join(out_dir, "indicators.csv")
    write_indicators_csv(csv_path, result.paths)
    paths["indicators"] = csv_path
    summary_path = os.path.join(out_dir, "summary.json")
    write_summary(summary_path, result.summary)
    paths["summary"] = summary_path
    if snapshots:
        snap_dir = os.path.join(out_dir, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        written = []
        for log in result.paths:
            for snap in log.snapshots:
                fname = os.path.join(snap_dir, snapshot_filename(log.path_id, snap.t))
                write_vtk(fname, snap.mesh, snap.x, snap.eta_t)
                written.append(fname)
        paths["snapshots"] = written
    return paths
