"""Pathwise adaptive simulation and Monte Carlo orchestration.

One path advances the implicit scheme with the indicator-driven controls:
the mesh for step n is produced from the step n-1 localization by
coarsening and refining before the solve, and the step size for n+1 is
set by the H1 time indicator and the fixed-point effort after the solve.
The running noise sum lives in the macro space, so it transfers across
mesh changes without loss, and the discrete transformation identity
Y^n = X^n - Sigma_h^n can be monitored online: Y is advanced by the
noise-free recurrence and compared against X - Sigma at every step.

Paths are embarrassingly parallel; each owns a counter-based stream
keyed by (base seed, path index), and aggregation reduces in path order
so results do not depend on the worker pool.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import adapt as adapt_mod
from .config import RunConfig
from .estimators import (
    IndicatorRecord,
    NoiseIndicators,
    eta_lin,
    eta_space,
    eta_time,
    interior_residual,
    jump_residual,
)
from .fem import FeFunction, assemble_mass, assemble_tv_stiffness, l2_norm, transfer
from .mesh import Mesh, coarsen, macro_mesh, refine
from .noise import NoiseModel, accumulate, g_perturbation, path_rng, sigma_h, wiener_increments
from .solver import SchemeVariant, cg_solve, step

__all__ = [
    "PathError",
    "PathLog",
    "Snapshot",
    "McResult",
    "run_path",
    "run_mc",
    "check_transformation",
    "epsilon_gap_study",
    "GapResult",
    "time_average_series",
    "final_time_average",
    "eta_h_value",
    "refinement_localization",
    "scheme_variant",
    "obstacle",
]

MAX_STEPS = 500_000

_CIRCLE_CENTER = (0.5, 0.5)
_CIRCLE_RADIUS = 0.25


class PathError(Exception):
    """Raised when a sample path fails; carries path id and step index."""

    def __init__(self, path_id: int, n: int, msg: str):
        super().__init__(f"path {path_id}, step {n}: {msg}")
        self.path_id = path_id
        self.n = n


@dataclass
class Snapshot:
    t: float
    n: int
    mesh: Mesh
    x: np.ndarray
    eta_t: np.ndarray | None


@dataclass
class PathLog:
    path_id: int
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final: FeFunction | None = None
    transform_defect: float | None = None
    wall_time: float = 0.0


@dataclass
class McResult:
    paths: list
    summary: dict


def scheme_variant(config: RunConfig) -> SchemeVariant:
    if config.scheme == "si":
        return SchemeVariant.si()
    if config.scheme == "fix3":
        return SchemeVariant.fix3()
    return SchemeVariant.fix(config.fp_tol)


def obstacle(config: RunConfig, mesh: Mesh, xi: FeFunction | None) -> FeFunction:
    """Target data g_h on the given mesh: interpolated circle plus perturbation.

    The indicator of the circle is re-interpolated on every mesh; the
    perturbation lives in the macro space and transfers exactly.
    """
    key = ("obstacle", id(xi))
    cached = mesh._cache.get(key)
    if cached is not None:
        return cached
    if config.g_preset == "zero":
        vals = np.zeros(mesh.nv)
    else:
        dx = mesh.coords[:, 0] - _CIRCLE_CENTER[0]
        dy = mesh.coords[:, 1] - _CIRCLE_CENTER[1]
        vals = (dx * dx + dy * dy <= _CIRCLE_RADIUS * _CIRCLE_RADIUS).astype(np.float64)
    if xi is not None:
        vals = vals + transfer(xi, mesh).values
    out = FeFunction(mesh, vals)
    mesh._cache[key] = out
    return out


def _modes_on(mesh: Mesh, macro_modes: list) -> list:
    key = ("modes", tuple(id(f) for f in macro_modes))
    cached = mesh._cache.get(key)
    if cached is None:
        cached = [transfer(f, mesh) for f in macro_modes]
        mesh._cache[key] = cached
    return cached


def run_path(config: RunConfig, path_id: int, track_transformation: bool = False) -> PathLog:
    """Simulate one sample path; returns its full indicator log."""
    t_start = time.perf_counter()
    tol_h, tol_tau = config.tolerances
    variant = scheme_variant(config)
    macro = macro_mesh(config.macro_n)
    model = NoiseModel.preset(config.noise_preset, config.sigma_amp)
    rng = path_rng(config.seed, path_id)

    xi = None
    if config.g_preset == "circle" and config.g_noise_amp > 0:
        xi = g_perturbation(rng, macro, config.g_noise_amp)

    mesh = macro
    x = FeFunction(mesh, np.zeros(mesh.nv))
    sigma_acc: FeFunction | None = None
    macro_modes = sigma_h(model, macro)
    noise_ind = NoiseIndicators(model, macro)

    y = FeFunction(mesh, np.zeros(mesh.nv)) if track_transformation else None
    defect_max = 0.0

    log = PathLog(path_id=path_id)
    pending_snaps = sorted(config.snapshot_times)
    tiny = 1e-12 * max(config.T, 1.0)
    while pending_snaps and pending_snaps[0] <= tiny:
        log.snapshots.append(Snapshot(t=0.0, n=0, mesh=mesh, x=x.values.copy(), eta_t=None))
        pending_snaps.pop(0)

    t = 0.0
    tau = min(config.tau0, config.tau_cap)
    prev_eta_t: np.ndarray | None = None
    n = 0
    while t < config.T - tiny:
        n += 1
        if n > MAX_STEPS:
            raise PathError(path_id, n, "step budget exhausted")
        tau = min(tau, config.T - t)

        # mesh for this step from the previous localization
        if config.adaptive and prev_eta_t is not None:
            refine_pos, coarsen_pos = adapt_mod.mark(prev_eta_t, tol_h, mesh.n_leaves)
            new_mesh = mesh
            if coarsen_pos.size:
                new_mesh = coarsen(new_mesh, mesh.leaf_ids[coarsen_pos])
            if refine_pos.size:
                new_mesh = refine(new_mesh, mesh.leaf_ids[refine_pos])
            if new_mesh is not mesh:
                x = transfer(x, new_mesh)
                if sigma_acc is not None:
                    sigma_acc = transfer(sigma_acc, new_mesh)
                if y is not None:
                    y = transfer(y, new_mesh)
                mesh = new_mesh

        g_h = obstacle(config, mesh, xi)
        modes = _modes_on(mesh, macro_modes)
        dw = wiener_increments(rng, tau, model.n_drivers)
        nv = np.zeros(mesh.nv)
        for f, inc in zip(modes, dw):
            nv += inc * f.values
        noise_term = FeFunction(mesh, nv)

        try:
            res = step(
                x, g_h, noise_term, tau, config.eps, config.lam, variant,
                fp_cap=config.fp_cap, cg_tol=config.cg_tol,
            )
        except Exception as exc:
            raise PathError(path_id, n, str(exc)) from exc

        rsq = interior_residual(res.x, x, g_h, noise_term, tau, config.lam)
        jsq = jump_residual(res.x, config.eps)
        s1, s2, eta_t_arr = eta_space(mesh, rsq, jsq)
        t1, t2 = eta_time(res.x, x)
        e1, e2, e3 = noise_ind.step(t, tau)
        el = eta_lin(res.x, res.x_star, config.eps)

        sigma_acc = accumulate(sigma_acc, modes, dw, mesh)

        if y is not None:
            # noise-free recurrence with the same frozen coefficient the
            # solve ended on; must match X - Sigma up to solver residuals
            idx = mesh.interior_idx
            m = assemble_mass(mesh)
            a = assemble_tv_stiffness(mesh, res.x_star, config.eps)
            rhs = (
                -tau * (a @ res.x.values)
                - tau * config.lam * (m @ (res.x.values - g_h.values))
            )[idx]
            m_int = mesh._cache.get("mass_interior")
            if m_int is None:
                m_int = m[idx][:, idx].tocsr()
                mesh._cache["mass_interior"] = m_int
            upd = cg_solve(m_int, rhs, tol=config.cg_tol)
            yv = y.values.copy()
            yv[idx] += upd.x
            y = FeFunction(mesh, yv)
            defect = l2_norm(FeFunction(mesh, y.values - (res.x.values - sigma_acc.values)))
            defect_max = max(defect_max, defect)

        t_new = t + tau
        if config.T - t_new <= tiny:
            t_new = config.T

        log.records.append(
            IndicatorRecord(
                n=n, t=t_new, tau=tau, ndof=mesh.ndof,
                eta_time1=t1, eta_time2=t2,
                eta_space1=s1, eta_space2=s2,
                eta_noise1=e1, eta_noise2=e2, eta_noise3=e3,
                eta_lin=el, fp_iters=res.iterations,
                eta_t=eta_t_arr,
            )
        )
        while pending_snaps and pending_snaps[0] <= t_new + tiny:
            log.snapshots.append(
                Snapshot(t=t_new, n=n, mesh=mesh, x=res.x.values.copy(), eta_t=eta_t_arr)
            )
            pending_snaps.pop(0)

        if config.adaptive:
            tau = adapt_mod.adjust_timestep(
                t2, res.iterations, tol_tau, tau, config.tau_min, config.tau_cap
            )
        else:
            tau = min(config.tau0, config.tau_cap)
        x = res.x
        t = t_new
        prev_eta_t = eta_t_arr

    log.final = x
    log.transform_defect = defect_max if track_transformation else None
    log.wall_time = time.perf_counter() - t_start
    return log


def check_transformation(log: PathLog) -> float:
    """Largest L2 defect of the transformation identity along the path."""
    if log.transform_defect is None:
        raise PathError(log.path_id, 0, "path was run without transformation tracking")
    return log.transform_defect


# -- aggregation --------------------------------------------------------------------


def time_average_series(records: list, attr) -> np.ndarray:
    """Running time averages t_n -> (sum_{i<=n} tau_i eta_i) / t_n."""
    taus = np.array([r.tau for r in records])
    if callable(attr):
        vals = np.array([attr(r) for r in records])
    else:
        vals = np.array([getattr(r, attr) for r in records])
    ts = np.array([r.t for r in records])
    return np.cumsum(taus * vals) / ts


def final_time_average(records: list, attr) -> float:
    return float(time_average_series(records, attr)[-1])


def eta_h_value(record: IndicatorRecord) -> float:
    """Total localized space indicator: sum_T eta_T = eta_space1 + 2 eta_space2."""
    return record.eta_space1 + 2.0 * record.eta_space2


def refinement_localization(
    mesh: Mesh,
    center=_CIRCLE_CENTER,
    radius: float = _CIRCLE_RADIUS,
    band: float = 0.05,
):
    """Fraction of maximum-depth leaves whose barycenter lies in the annulus
    |dist(x, center) - radius| <= band.  Returns (count, fraction)."""
    levels = mesh.tri_levels()
    deepest = levels == levels.max()
    bary = mesh.barycenters()[deepest]
    r = np.hypot(bary[:, 0] - center[0], bary[:, 1] - center[1])
    inside = np.abs(r - radius) <= band
    return int(deepest.sum()), float(inside.mean())


def _path_summary(config: RunConfig, log: PathLog) -> dict:
    recs = log.records
    averages = {
        name: final_time_average(recs, name)
        for name in (
            "eta_time1", "eta_time2", "eta_space1", "eta_space2",
            "eta_noise1", "eta_noise2", "eta_noise3", "eta_lin",
        )
    }
    averages["eta_h"] = final_time_average(recs, eta_h_value)
    out = {
        "path_id": log.path_id,
        "steps": len(recs),
        "final_time": recs[-1].t if recs else 0.0,
        "final_ndof": recs[-1].ndof if recs else 0,
        "min_tau": min(r.tau for r in recs) if recs else 0.0,
        "max_tau": max(r.tau for r in recs) if recs else 0.0,
        "max_fp_iters": max(r.fp_iters for r in recs) if recs else 0,
        "time_averages": averages,
        "wall_time": log.wall_time,
    }
    if log.transform_defect is not None:
        out["transform_defect"] = log.transform_defect
    return out


def run_mc(config: RunConfig, track_transformation: bool = False) -> McResult:
    """Run all paths of the campaign; deterministic regardless of pool size."""
    n_workers = _worker_count(config.paths)
    ids = list(range(config.paths))
    if n_workers <= 1:
        logs = [run_path(config, p, track_transformation) for p in ids]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(run_path, config, p, track_transformation) for p in ids]
            logs = [f.result() for f in futures]   # ordered reduction by path id

    per_path = [_path_summary(config, log) for log in logs]
    ens = {}
    keys = per_path[0]["time_averages"].keys()
    ens["time_averages"] = {
        k: float(np.mean([p["time_averages"][k] for p in per_path])) for k in keys
    }
    ens["mean_steps"] = float(np.mean([p["steps"] for p in per_path]))
    ens["mean_final_ndof"] = float(np.mean([p["final_ndof"] for p in per_path]))
    summary = {"config": config.to_dict(), "paths": per_path, "ensemble": ens}
    return McResult(paths=logs, summary=summary)


def _worker_count(n_paths: int) -> int:
    env = os.environ.get("STVF_THREADS")
    if env is not None:
        try:
            cap = max(1, int(env))
        except ValueError:
            cap = 1
    else:
        cap = min(4, os.cpu_count() or 1)
    return min(cap, n_paths)


# -- epsilon sensitivity -------------------------------------------------------------


@dataclass
class GapResult:
    eps1: float
    eps2: float
    sup_gap_sq: float
    bound: float
    gaps_sq: np.ndarray
    times: np.ndarray


def epsilon_gap_study(
    config: RunConfig,
    eps1: float,
    eps2: float,
    tau: float = 2.5e-4,
    fp_tol: float = 1e-10,
) -> GapResult:
    """Deterministic two-run comparison of regularization parameters.

    Both runs use the same uniform macro mesh, the same step ladder, the
    same obstacle realization, and no noise; the supremum over time of
    the squared L2 distance is compared against 2 T |O| (eps1 + eps2).
    """
    if eps1 <= 0 or eps2 <= 0:
        raise ValueError("regularization parameters must be positive")
    mesh = macro_mesh(config.macro_n)
    rng = path_rng(config.seed, 0)
    xi = None
    if config.g_preset == "circle" and config.g_noise_amp > 0:
        xi = g_perturbation(rng, mesh, config.g_noise_amp)
    g_h = obstacle(config, mesh, xi)
    zero = FeFunction(mesh, np.zeros(mesh.nv))
    variant = SchemeVariant.fix(fp_tol)

    x1 = FeFunction(mesh, np.zeros(mesh.nv))
    x2 = FeFunction(mesh, np.zeros(mesh.nv))
    t = 0.0
    gaps = [0.0]
    times = [0.0]
    while t < config.T - 1e-12 * config.T:
        tn = min(tau, config.T - t)
        x1 = step(x1, g_h, zero, tn, eps1, config.lam, variant, fp_cap=200, cg_tol=config.cg_tol).x
        x2 = step(x2, g_h, zero, tn, eps2, config.lam, variant, fp_cap=200, cg_tol=config.cg_tol).x
        t += tn
        gaps.append(l2_norm(FeFunction(mesh, x1.values - x2.values)) ** 2)
        times.append(t)
    bound = 2.0 * config.T * 1.0 * (eps1 + eps2)
    return GapResult(
        eps1=eps1, eps2=eps2,
        sup_gap_sq=float(np.max(gaps)), bound=bound,
        gaps_sq=np.array(gaps), times=np.array(times),
    )
