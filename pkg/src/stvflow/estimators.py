"""A posteriori error indicators for the adaptive scheme.

Per step the suite consists of two time indicators (L2 and H1 distance of
consecutive solutions), two space indicators (weighted interior residual
and normal jumps of the regularized gradient quotient), three noise
indicators (time discretization and mode interpolation errors of the
noise field), and a linearization indicator comparing the frozen-
coefficient quotient with the converged one.

All element integrals are exact for the piecewise linear data; analytic
noise fields are integrated with a degree-4 rule in space and composite
trapezoid sums in time.  For several independent driving processes the
squared field norms sum over the modes, which keeps the stochastic
isometry behind the noise terms intact; a single mode recovers the
scalar case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import (
    FeFunction,
    FemError,
    h1_seminorm,
    l2_norm,
    quad_points,
    regularized_modulus,
)
from .mesh import Mesh
from .noise import NoiseModel, sigma_h

__all__ = [
    "interior_residual",
    "jump_residual",
    "eta_time",
    "eta_space",
    "eta_lin",
    "NoiseIndicators",
    "IndicatorRecord",
]

N_TIME_SUBSAMPLES = 8


@dataclass
class IndicatorRecord:
    """All indicator values of one accepted step."""

    n: int
    t: float
    tau: float
    ndof: int
    eta_time1: float
    eta_time2: float
    eta_space1: float
    eta_space2: float
    eta_noise1: float
    eta_noise2: float
    eta_noise3: float
    eta_lin: float
    fp_iters: int
    eta_t: np.ndarray | None = None     # per-leaf localization, aligned with mesh leaves

    CSV_FIELDS = (
        "n", "t", "tau", "ndof",
        "eta_time1", "eta_time2", "eta_space1", "eta_space2",
        "eta_noise1", "eta_noise2", "eta_noise3", "eta_lin", "fp_iters",
    )


# -- space indicators -----------------------------------------------------------


def interior_residual(
    x: FeFunction,
    x_prev: FeFunction,
    g_h: FeFunction,
    noise_term: FeFunction,
    tau: float,
    lam: float,
) -> np.ndarray:
    """Squared elementwise L2 norms of the interior residual.

    R = lam (g_h - X) - (X - X_prev)/tau + noise/tau is piecewise linear,
    so ||R||^2_T = area/12 ((r0+r1+r2)^2 + r0^2+r1^2+r2^2) exactly.
    """
    mesh = x.mesh
    for f in (x_prev, g_h, noise_term):
        if f.mesh is not mesh:
            raise FemError("residual data must live on one mesh")
    if tau <= 0:
        raise FemError("tau must be positive")
    r = lam * (g_h.values - x.values) - (x.values - x_prev.values) / tau + noise_term.values / tau
    rt = r[mesh.leaf_local]                               # (nl, 3)
    s = rt.sum(axis=1)
    return mesh.area / 12.0 * (s * s + np.einsum("ti,ti->t", rt, rt))


def gradient_quotient(x: FeFunction, eps: float) -> np.ndarray:
    """Elementwise constant vector grad X / |grad X|_eps, shape (nl, 2)."""
    g = x.element_gradients()
    return g / regularized_modulus(g, eps)[:, None]


def jump_residual(x: FeFunction, eps: float) -> np.ndarray:
    """Squared edge L2 norms of the normal jump of the gradient quotient.

    For an interior edge shared by K1, K2 (ordered by ascending triangle
    id) the jump is (q|K1 - q|K2) . nu / 2 with nu oriented K1 -> K2;
    the value is constant along the edge so the squared norm is h_E J^2.
    Boundary edges carry no jump and report zero.
    """
    mesh = x.mesh
    q = gradient_quotient(x, eps)
    out = np.zeros(mesh.edge_verts.shape[0])
    interior = ~mesh.edge_boundary
    k1 = mesh.edge_tris[interior, 0]
    k2 = mesh.edge_tris[interior, 1]
    jump = 0.5 * np.einsum("ev,ev->e", q[k1] - q[k2], mesh.edge_normal[interior])
    out[interior] = mesh.edge_h[interior] * jump * jump
    return out


def eta_space(mesh: Mesh, residual_sq: np.ndarray, jump_sq: np.ndarray):
    """Combine element and edge contributions.

    Returns (eta_space1, eta_space2, eta_t) where

        eta_space1 = sum_T h_T^2 ||R||^2_T
        eta_space2 = sum_E h_E ||J||^2_E
        eta_t(T)   = h_T^2 ||R||^2_T + sum_{E in boundary of T} h_E ||J||^2_E

    Every interior edge contributes its full value to both neighbors, so
    sum_T eta_t = eta_space1 + 2 eta_space2.
    """
    if residual_sq.shape != (mesh.n_leaves,):
        raise FemError("residual array does not match mesh")
    if jump_sq.shape != (mesh.edge_verts.shape[0],):
        raise FemError("jump array does not match mesh")
    s1 = float(np.dot(mesh.h_t * mesh.h_t, residual_sq))
    edge_term = mesh.edge_h * jump_sq
    s2 = float(edge_term.sum())
    eta_t = mesh.h_t * mesh.h_t * residual_sq
    interior = ~mesh.edge_boundary
    np.add.at(eta_t, mesh.edge_tris[interior, 0], edge_term[interior])
    np.add.at(eta_t, mesh.edge_tris[interior, 1], edge_term[interior])
    return s1, s2, eta_t


# -- time and linearization indicators ----------------------------------------------


def eta_time(x: FeFunction, x_prev: FeFunction):
    """(L2 norm, H1 seminorm) of the increment X - X_prev on one mesh."""
    if x.mesh is not x_prev.mesh:
        raise FemError("time indicator needs both solutions on one mesh")
    diff = FeFunction(x.mesh, x.values - x_prev.values)
    return l2_norm(diff), h1_seminorm(diff)


def eta_lin(x: FeFunction, x_star: FeFunction, eps: float) -> float:
    """Squared L2 distance of the frozen and the converged gradient quotient.

    || grad X / |grad X*|_eps - grad X / |grad X|_eps ||^2
      = sum_T area_T |grad X|^2 (1/|grad X*|_eps - 1/|grad X|_eps)^2.
    """
    if x.mesh is not x_star.mesh:
        raise FemError("linearization indicator needs both iterates on one mesh")
    g = x.element_gradients()
    gs = x_star.element_gradients()
    mod = regularized_modulus(g, eps)
    mod_star = regularized_modulus(gs, eps)
    g2 = np.einsum("tv,tv->t", g, g)
    d = 1.0 / mod_star - 1.0 / mod
    return float(np.dot(x.mesh.area, g2 * d * d))


# -- noise indicators -----------------------------------------------------------


def _spatial_sq_norms(model: NoiseModel, macro: Mesh, t: float, interp: list | None):
    """Per-mode squared L2 and H1 norms of sigma(t) or sigma(t) - sigma_h(t)."""
    pts, wts, bary = quad_points(macro, degree=4)
    flat = pts.reshape(-1, 2)
    l2 = 0.0
    h1 = 0.0
    for k, mode in enumerate(model.modes):
        vals = model.amplitude * np.asarray(mode.value(t, flat))
        grads = model.amplitude * np.asarray(mode.grad(t, flat))
        if interp is not None:
            f = interp[k]
            nodal = f.values[macro.leaf_local]            # (nl, 3)
            vals = vals - np.einsum("qi,ti->tq", bary, nodal).reshape(-1)
            gq = f.element_gradients()                    # constant per leaf
            grads = grads - np.repeat(gq, bary.shape[0], axis=0)
        vals = vals.reshape(wts.shape)
        l2 += float(np.sum(vals * vals * wts))
        gsq = np.einsum("pv,pv->p", grads, grads).reshape(wts.shape)
        h1 += float(np.sum(gsq * wts))
    return l2, h1


def _trapezoid(values: np.ndarray, dt: float) -> float:
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


class NoiseIndicators:
    """Running evaluation of the three noise indicators along one path.

    The two history sums (time increments of the field, interpolation
    defect weighted by the step sizes) are accumulated incrementally so a
    step costs O(1) norm evaluations.  Time-constant models reduce to
    closed forms of two precomputed numbers per norm.
    """

    def __init__(self, model: NoiseModel, macro: Mesh, n_sub: int = N_TIME_SUBSAMPLES):
        self.model = model
        self.macro = macro
        self.n_sub = n_sub
        # history sums up to the previous step, L2 and H1 flavors
        self._hist_time_l2 = 0.0
        self._hist_time_h1 = 0.0
        self._hist_interp_l2 = 0.0
        self._hist_interp_h1 = 0.0
        if model.time_constant:
            interp = sigma_h(model, macro, 0.0)
            self._d_l2, self._d_h1 = _spatial_sq_norms(model, macro, 0.0, interp)
            self._s_l2, self._s_h1 = _spatial_sq_norms(model, macro, 0.0, None)

    def _field_sq(self, t: float):
        if self.model.time_constant:
            return self._s_l2, self._s_h1
        return _spatial_sq_norms(self.model, self.macro, t, None)

    def _defect_sq(self, t: float):
        if self.model.time_constant:
            return self._d_l2, self._d_h1
        interp = sigma_h(self.model, self.macro, t)
        return _spatial_sq_norms(self.model, self.macro, t, interp)

    def _increment_sq(self, t_prev: float, tau: float):
        """Trapezoid integrals of ||sigma(t) - sigma(t_prev)||^2 over the step.

        The difference is evaluated analytically at the quadrature points;
        no interpolation error enters this term.
        """
        if self.model.time_constant:
            return 0.0, 0.0
        ts = t_prev + tau * np.arange(self.n_sub + 1) / self.n_sub
        pts, wts, _ = quad_points(self.macro, degree=4)
        flat = pts.reshape(-1, 2)
        amp = self.model.amplitude
        ref_vals = [amp * np.asarray(m.value(t_prev, flat)) for m in self.model.modes]
        ref_grads = [amp * np.asarray(m.grad(t_prev, flat)) for m in self.model.modes]
        l2s = np.empty(ts.size)
        h1s = np.empty(ts.size)
        for j, t in enumerate(ts):
            l2 = 0.0
            h1 = 0.0
            for k, mode in enumerate(self.model.modes):
                dv = amp * np.asarray(mode.value(t, flat)) - ref_vals[k]
                dg = amp * np.asarray(mode.grad(t, flat)) - ref_grads[k]
                l2 += float(np.sum((dv * dv).reshape(wts.shape) * wts))
                h1 += float(np.sum(np.einsum("pv,pv->p", dg, dg).reshape(wts.shape) * wts))
            l2s[j], h1s[j] = l2, h1
        dt = tau / self.n_sub
        return _trapezoid(l2s, dt), _trapezoid(h1s, dt)

    def _double_integral(self, t_prev: float, tau: float):
        """Nested trapezoid of the inner-tail double integral of ||sigma||^2."""
        ts = t_prev + tau * np.arange(self.n_sub + 1) / self.n_sub
        l2s = np.empty(ts.size)
        h1s = np.empty(ts.size)
        for j, t in enumerate(ts):
            l2s[j], h1s[j] = self._field_sq(t)
        dt = tau / self.n_sub
        # F(t) = int_t^{t_n} ||sigma||^2 ds via reverse cumulative trapezoid
        def outer(vals):
            inner = np.concatenate([[0.0], np.cumsum((vals[1:] + vals[:-1]) / 2.0 * dt)])
            f = inner[-1] - inner
            return _trapezoid(f, dt)
        return outer(l2s), outer(h1s)

    def step(self, t_prev: float, tau: float):
        """Indicators for the step [t_prev, t_prev + tau]; advances the history.

        Returns (eta_noise1, eta_noise2, eta_noise3).
        """
        if tau <= 0:
            raise FemError("tau must be positive")
        if self.model.n_drivers == 0:
            return 0.0, 0.0, 0.0
        inc_l2, inc_h1 = self._increment_sq(t_prev, tau)
        dbl_l2, dbl_h1 = self._double_integral(t_prev, tau)
        d_l2, d_h1 = self._defect_sq(t_prev)

        e1 = tau * (self._hist_time_l2 + self._hist_interp_l2) + dbl_l2 + tau * tau * d_l2
        e2 = tau * (self._hist_time_h1 + self._hist_interp_h1) + dbl_h1 + tau * tau * d_h1
        e3 = inc_l2 + tau * d_l2

        self._hist_time_l2 += inc_l2
        self._hist_time_h1 += inc_h1
        self._hist_interp_l2 += tau * d_l2
        self._hist_interp_h1 += tau * d_h1
        return e1, e2, e3
