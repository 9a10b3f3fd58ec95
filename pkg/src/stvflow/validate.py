"""Built-in validation suites.

Each suite reruns a focused experiment against an analytic reference or
an independently coded oracle:

  transformation  pathwise identity between the driven scheme and the
                  noise-free recurrence for Y = X - Sigma_h
  energy          monotone decay of the regularized functional without noise
  epsilon         solution gap between two regularization parameters
                  against the a priori bound 2 T |O| (eps1 + eps2)
  isometry        mean squared norm of the accumulated noise against the
                  Ito isometry value
  oracles         every error indicator against brute-force quadrature
                  on small hand-checkable meshes

The oracle implementations deliberately avoid the assembly helpers: they
fit each element's plane through its vertices, integrate with their own
quadrature rule, and discover edges by scanning vertex pairs, so a bug
in the production code cannot cancel out of the comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .driver import epsilon_gap_study, obstacle, run_path
from .estimators import (
    NoiseIndicators,
    eta_lin,
    eta_space,
    eta_time,
    interior_residual,
    jump_residual,
)
from .fem import FeFunction, assemble_mass, energy, l2_norm
from .mesh import Mesh, from_root_triangulation, macro_mesh, refine
from .noise import NoiseMode, NoiseModel, g_perturbation, path_rng, sigma_h, wiener_increments
from .solver import SchemeVariant, step

__all__ = [
    "SuiteResult",
    "SUITES",
    "run_suite",
    "validate_transformation",
    "validate_energy",
    "validate_epsilon",
    "validate_isometry",
    "validate_oracles",
]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list = field(default_factory=list)
    details: dict = field(default_factory=dict)


def _line(ok: bool, text: str) -> str:
    return f"[{'PASS' if ok else 'FAIL'}] {text}"


# -- independent quadrature and geometry --------------------------------------------

# 7-point rule, exact for degree 5 on the reference triangle
_QW = np.array(
    [0.225]
    + [0.132394152788506] * 3
    + [0.125939180544827] * 3
)
_QA = np.array(
    [1.0 / 3.0]
    + [0.059715871789770] * 1 + [0.470142064105115] * 2
    + [0.797426985353087] * 1 + [0.101286507323456] * 2
)
_QB = np.array(
    [1.0 / 3.0]
    + [0.470142064105115, 0.059715871789770, 0.470142064105115]
    + [0.101286507323456, 0.797426985353087, 0.101286507323456]
)


def _tri_area(p: np.ndarray) -> float:
    return 0.5 * abs(
        (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
        - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
    )


def _plane(p: np.ndarray, v: np.ndarray):
    """Coefficients (a, b, c) of the plane a + b x + c y through 3 points."""
    mat = np.column_stack([np.ones(3), p[:, 0], p[:, 1]])
    return np.linalg.solve(mat, v)


def _integrate_p1_expr(mesh: Mesh, node_values, fn) -> float:
    """Integrate fn(values at quad points) where values interpolate nodal data."""
    total = 0.0
    for k in range(mesh.n_leaves):
        p = mesh.coords[mesh.leaf_local[k]]
        vals = [node_values[i] for i in mesh.leaf_local[k]]
        area = _tri_area(p)
        for w, la, lb in zip(_QW, _QA, _QB):
            lc = 1.0 - la - lb
            u = la * vals[0] + lb * vals[1] + lc * vals[2]
            total += area * w * fn(u)
    return total


def _oracle_gradients(x: FeFunction) -> np.ndarray:
    mesh = x.mesh
    out = np.zeros((mesh.n_leaves, 2))
    for k in range(mesh.n_leaves):
        loc = mesh.leaf_local[k]
        coef = _plane(mesh.coords[loc], x.values[loc])
        out[k] = coef[1:]
    return out


def _oracle_edges(mesh: Mesh):
    """Interior edges as (vertex pair, [tri ids]) discovered by pair scanning."""
    seen: dict = {}
    for k in range(mesh.n_leaves):
        loc = mesh.leaf_local[k]
        for a, b in ((0, 1), (1, 2), (0, 2)):
            key = tuple(sorted((int(loc[a]), int(loc[b]))))
            seen.setdefault(key, []).append(k)
    return {key: tris for key, tris in seen.items() if len(tris) == 2}


def oracle_eta_space(x, x_prev, g_h, noise_term, tau, lam, eps):
    """(eta_space1, eta_space2) by plane fits and explicit edge integrals."""
    mesh = x.mesh
    r = (
        lam * (g_h.values - x.values)
        - (x.values - x_prev.values) / tau
        + noise_term.values / tau
    )
    s1 = 0.0
    for k in range(mesh.n_leaves):
        p = mesh.coords[mesh.leaf_local[k]]
        vals = r[mesh.leaf_local[k]]
        area = _tri_area(p)
        h = max(
            np.hypot(*(p[i] - p[j])) for i, j in ((0, 1), (1, 2), (0, 2))
        )
        norm_sq = 0.0
        for w, la, lb in zip(_QW, _QA, _QB):
            u = la * vals[0] + lb * vals[1] + (1.0 - la - lb) * vals[2]
            norm_sq += area * w * u * u
        s1 += h * h * norm_sq

    grads = _oracle_gradients(x)
    mods = np.sqrt(np.einsum("kv,kv->k", grads, grads) + eps * eps)
    q = grads / mods[:, None]
    s2 = 0.0
    for (va, vb), (k1, k2) in _oracle_edges(mesh).items():
        k1, k2 = sorted((k1, k2))
        pa, pb = mesh.coords[va], mesh.coords[vb]
        tang = pb - pa
        h_e = np.hypot(*tang)
        nu = np.array([tang[1], -tang[0]]) / h_e
        jump = 0.5 * float(np.dot(q[k1] - q[k2], nu))
        # 2-pt Gauss along the edge; the integrand is constant
        pts = [0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]
        edge_int = sum(0.5 * h_e * jump * jump for _ in pts)
        s2 += h_e * edge_int
    return s1, s2


def oracle_eta_time(x, x_prev):
    mesh = x.mesh
    d = x.values - x_prev.values
    l2_sq = _integrate_p1_expr(mesh, d, lambda u: u * u)
    h1_sq = 0.0
    gd = _oracle_gradients(FeFunction(mesh, d))
    for k in range(mesh.n_leaves):
        area = _tri_area(mesh.coords[mesh.leaf_local[k]])
        h1_sq += area * float(np.dot(gd[k], gd[k]))
    return np.sqrt(l2_sq), np.sqrt(h1_sq)


def oracle_eta_lin(x, x_star, eps):
    mesh = x.mesh
    gx = _oracle_gradients(x)
    gs = _oracle_gradients(x_star)
    total = 0.0
    for k in range(mesh.n_leaves):
        area = _tri_area(mesh.coords[mesh.leaf_local[k]])
        mx = np.sqrt(float(np.dot(gx[k], gx[k])) + eps * eps)
        ms = np.sqrt(float(np.dot(gs[k], gs[k])) + eps * eps)
        total += area * float(np.dot(gx[k], gx[k])) * (1.0 / ms - 1.0 / mx) ** 2
    return total


def oracle_noise_terms(model: NoiseModel, macro: Mesh, t_grid: list):
    """Closed-form indicator values for a time-constant noise model.

    With sigma independent of time the increment integrals vanish and

        eta_noise1(n) = tau_n t_{n-1} D + tau_n^2 / 2 S + tau_n^2 D
        eta_noise3(n) = tau_n D

    where D and S are the squared L2 norms of sigma - sigma_h and sigma;
    the H1 variant replaces both by gradient norms.  Everything is
    recomputed here with the degree-5 rule and per-element plane fits.
    """
    modes_h = sigma_h(model, macro)
    d_l2 = d_h1 = s_l2 = s_h1 = 0.0
    for mode, fh in zip(model.modes, modes_h):
        gh = _oracle_gradients(fh)
        for k in range(macro.n_leaves):
            p = macro.coords[macro.leaf_local[k]]
            vals = fh.values[macro.leaf_local[k]]
            area = _tri_area(p)
            for w, la, lb in zip(_QW, _QA, _QB):
                lc = 1.0 - la - lb
                pt = (la * p[0] + lb * p[1] + lc * p[2]).reshape(1, 2)
                sig = model.amplitude * float(mode.value(0.0, pt)[0])
                gsig = model.amplitude * mode.grad(0.0, pt)[0]
                sig_h = la * vals[0] + lb * vals[1] + lc * vals[2]
                d_l2 += area * w * (sig - sig_h) ** 2
                s_l2 += area * w * sig * sig
                d_h1 += area * w * float(np.dot(gsig - gh[k], gsig - gh[k]))
                s_h1 += area * w * float(np.dot(gsig, gsig))
    out = []
    for n in range(1, len(t_grid)):
        tau_n = t_grid[n] - t_grid[n - 1]
        t_prev = t_grid[n - 1]
        e1 = tau_n * t_prev * d_l2 + 0.5 * tau_n**2 * s_l2 + tau_n**2 * d_l2
        e2 = tau_n * t_prev * d_h1 + 0.5 * tau_n**2 * s_h1 + tau_n**2 * d_h1
        e3 = tau_n * d_l2
        out.append((e1, e2, e3))
    return out


# -- suites --------------------------------------------------------------------------


def validate_transformation(config: RunConfig) -> SuiteResult:
    log = run_path(config, 0, track_transformation=True)
    n = len(log.records)
    tol = n * 1e-8
    defect = log.transform_defect
    ok = defect <= tol
    res = SuiteResult(name="transformation", passed=ok)
    res.details = {"steps": n, "max_defect": defect, "tolerance": tol}
    res.lines.append(
        _line(ok, f"transformation identity: max L2 defect {defect:.3e} "
                  f"over {n} steps (tolerance {tol:.3e})")
    )
    return res


def validate_energy(config: RunConfig, n_steps: int = 200, tau: float = 1e-4) -> SuiteResult:
    """Noise-free uniform run; minimizing-movement decay must hold at
    every step, proximal term included:

        J(X^n) + (1/2 tau) ||X^n - X^{n-1}||_M^2 <= J(X^{n-1}) + 1e-8.
    """
    cfg = config.replace(
        noise_preset="none", sigma_amp=0.0, macro_n=16,
        adaptive=False, tau0=tau, T=n_steps * tau,
        snapshot_times=(), scheme="fix", fp_tol=1e-10,
    )
    mesh = macro_mesh(cfg.macro_n)
    rng = path_rng(cfg.seed, 0)
    xi = g_perturbation(rng, mesh, cfg.g_noise_amp) if cfg.g_preset == "circle" else None
    g_h = obstacle(cfg, mesh, xi)
    zero = FeFunction(mesh, np.zeros(mesh.nv))
    variant = SchemeVariant.fix(cfg.fp_tol)
    x = FeFunction(mesh, np.zeros(mesh.nv))
    energies = [energy(x, g_h, cfg.eps, cfg.lam)]
    worst = -np.inf
    for _ in range(n_steps):
        x_new = step(x, g_h, zero, tau, cfg.eps, cfg.lam, variant,
                     fp_cap=200, cg_tol=cfg.cg_tol).x
        prox = l2_norm(FeFunction(mesh, x_new.values - x.values)) ** 2 / (2.0 * tau)
        energies.append(energy(x_new, g_h, cfg.eps, cfg.lam))
        worst = max(worst, energies[-1] + prox - energies[-2])
        x = x_new
    ok = worst <= 1e-8
    res = SuiteResult(name="energy", passed=ok)
    res.details = {
        "steps": n_steps, "initial": energies[0], "final": energies[-1],
        "worst_increase": worst,
    }
    res.lines.append(
        _line(ok, f"energy decay with proximal term: worst per-step increase {worst:.3e} "
                  f"(J: {energies[0]:.6f} -> {energies[-1]:.6f})")
    )
    return res


def validate_epsilon(config: RunConfig, eps1: float = 2.0**-5,
                     eps2: float = 2.0**-7, tau: float = 2.5e-4) -> SuiteResult:
    cfg = config.replace(noise_preset="none", sigma_amp=0.0, snapshot_times=())
    gap = epsilon_gap_study(cfg, eps1, eps2, tau=tau)
    threshold = 2.0 * gap.bound
    ok = gap.sup_gap_sq <= threshold
    res = SuiteResult(name="epsilon", passed=ok)
    res.details = {
        "eps1": eps1, "eps2": eps2,
        "sup_gap_sq": gap.sup_gap_sq, "bound": gap.bound, "threshold": threshold,
    }
    res.lines.append(
        _line(ok, f"regularization gap: sup |X1-X2|^2 = {gap.sup_gap_sq:.3e}, "
                  f"a priori bound {gap.bound:.3e} (allowed up to {threshold:.3e})")
    )
    return res


def validate_isometry(config: RunConfig, n_paths: int = 1000,
                      tau: float = 1e-3, n_steps: int = 50) -> SuiteResult:
    macro = macro_mesh(config.macro_n)
    model = NoiseModel.preset(config.noise_preset, config.sigma_amp)
    if model.n_drivers == 0:
        raise ValueError("isometry check needs a driven noise model")
    modes = sigma_h(model, macro)
    m = assemble_mass(macro)
    mode_mat = np.column_stack([f.values for f in modes])
    analytic = n_steps * tau * float(
        sum(f.values @ (m @ f.values) for f in modes)
    )
    samples = np.empty(n_paths)
    for p in range(n_paths):
        rng = path_rng(config.seed, p)
        acc = np.zeros(model.n_drivers)
        for _ in range(n_steps):
            acc += wiener_increments(rng, tau, model.n_drivers)
        sig = mode_mat @ acc
        samples[p] = sig @ (m @ sig)
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / np.sqrt(n_paths))
    ok = abs(mean - analytic) <= 3.0 * se
    res = SuiteResult(name="isometry", passed=ok)
    res.details = {
        "paths": n_paths, "mean": mean, "analytic": analytic, "stderr": se,
    }
    res.lines.append(
        _line(ok, f"Ito isometry: sample mean {mean:.6e} vs analytic "
                  f"{analytic:.6e} ({abs(mean - analytic) / se:.2f} standard errors)")
    )
    return res


def _oracle_meshes():
    two = from_root_triangulation(
        np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        np.array([[0, 1, 2], [0, 2, 3]]),
    )
    eight = refine(two, two.leaf_ids)
    eight = refine(eight, eight.leaf_ids)
    return [("2-triangle", two), ("8-triangle", eight)]


def validate_oracles(config: RunConfig, rtol: float = 1e-12) -> SuiteResult:
    res = SuiteResult(name="oracles", passed=True)
    worst = 0.0
    rng = np.random.default_rng(42)
    for label, mesh in _oracle_meshes():
        x = FeFunction(mesh, rng.normal(size=mesh.nv))
        x_prev = FeFunction(mesh, rng.normal(size=mesh.nv))
        x_star = FeFunction(mesh, x.values + 0.05 * rng.normal(size=mesh.nv))
        g_h = FeFunction(mesh, rng.normal(size=mesh.nv))
        noise_term = FeFunction(mesh, 0.01 * rng.normal(size=mesh.nv))
        tau, lam, eps = 1e-3, 7.0, 0.25

        rsq = interior_residual(x, x_prev, g_h, noise_term, tau, lam)
        jsq = jump_residual(x, eps)
        s1, s2, _ = eta_space(mesh, rsq, jsq)
        o1, o2 = oracle_eta_space(x, x_prev, g_h, noise_term, tau, lam, eps)
        t1, t2 = eta_time(x, x_prev)
        ot1, ot2 = oracle_eta_time(x, x_prev)
        el = eta_lin(x, x_star, eps)
        oel = oracle_eta_lin(x, x_star, eps)

        checks = [
            ("eta_space1", s1, o1),
            ("eta_space2", s2, o2),
            ("eta_time1", t1, ot1),
            ("eta_time2", t2, ot2),
            ("eta_lin", el, oel),
        ]
        for name, got, want in checks:
            rel = abs(got - want) / max(abs(want), 1e-300)
            worst = max(worst, rel)
            ok = rel <= rtol
            res.passed = res.passed and ok
            res.lines.append(
                _line(ok, f"{label} {name}: {got:.15e} vs oracle "
                          f"{want:.15e} (rel {rel:.2e})")
            )

    # noise indicators against closed forms, polynomial mode so both
    # quadratures are exact
    macro = macro_mesh(4)
    mode = NoiseMode(
        value=lambda t, pts: pts[:, 0] * pts[:, 1],
        grad=lambda t, pts: np.column_stack([pts[:, 1], pts[:, 0]]),
        label="xy",
    )
    model = NoiseModel(modes=(mode,), amplitude=1.0)
    ind = NoiseIndicators(model, macro)
    t_grid = [0.0, 2e-3, 5e-3]
    want_terms = oracle_noise_terms(model, macro, t_grid)
    for i, (e1_want, e2_want, e3_want) in enumerate(want_terms):
        t_prev, t_next = t_grid[i], t_grid[i + 1]
        e1, e2, e3 = ind.step(t_prev, t_next - t_prev)
        for name, got, want in (
            ("eta_noise1", e1, e1_want),
            ("eta_noise2", e2, e2_want),
            ("eta_noise3", e3, e3_want),
        ):
            rel = abs(got - want) / max(abs(want), 1e-300)
            worst = max(worst, rel)
            ok = rel <= rtol
            res.passed = res.passed and ok
            res.lines.append(
                _line(ok, f"step {i + 1} {name}: {got:.15e} vs closed form "
                          f"{want:.15e} (rel {rel:.2e})")
            )
    res.details = {"worst_rel_error": worst, "rtol": rtol}
    return res


SUITES = {
    "transformation": validate_transformation,
    "energy": validate_energy,
    "epsilon": validate_epsilon,
    "isometry": validate_isometry,
    "oracles": validate_oracles,
}


def run_suite(name: str, config: RunConfig) -> SuiteResult:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](config)
