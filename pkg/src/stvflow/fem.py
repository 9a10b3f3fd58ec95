"""P1 finite elements on bisection meshes.

Assembly is exact: the mass matrix integrates products of linear basis
functions in closed form and the weighted stiffness uses the elementwise
constant gradient of the coefficient function, so no quadrature error
enters the operators.  Triangle quadrature rules live here as well; they
are only needed for analytically given data (noise fields).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

__all__ = [
    "FemError",
    "FeFunction",
    "assemble_mass",
    "assemble_laplace",
    "assemble_tv_stiffness",
    "energy",
    "energy_gradient",
    "transfer",
    "nodal_interpolant",
    "l2_norm",
    "h1_seminorm",
    "linf_diff",
    "triangle_quadrature",
    "quad_points",
]


class FemError(Exception):
    """Raised for mismatched meshes or invalid finite element data."""


@dataclass
class FeFunction:
    """Nodal P1 function: one coefficient per active mesh vertex."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.nv,):
            raise FemError(
                f"coefficient vector has length {self.values.shape}, mesh has {self.mesh.nv} vertices"
            )

    def copy(self) -> "FeFunction":
        return FeFunction(self.mesh, self.values.copy())

    def element_gradients(self) -> np.ndarray:
        """Constant gradient per leaf triangle, shape (nl, 2)."""
        vals = self.values[self.mesh.leaf_local]          # (nl, 3)
        return np.einsum("ti,tiv->tv", vals, self.mesh.grads)


def _same_mesh(f: FeFunction, g: FeFunction) -> Mesh:
    if f.mesh is not g.mesh and f.mesh.generation != g.mesh.generation:
        raise FemError("functions live on different meshes")
    if f.mesh is not g.mesh and f.mesh.nv != g.mesh.nv:
        raise FemError("functions live on different meshes")
    return f.mesh


# -- operators -------------------------------------------------------------------


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    """Assemble per-element 3x3 blocks into a CSR matrix over active vertices."""
    li = mesh.leaf_local
    rows = np.repeat(li, 3, axis=1).ravel()
    cols = np.tile(li, (1, 3)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.nv, mesh.nv)
    ).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Exact P1 mass matrix; local block is area/12 * (ones + identity)."""
    cached = mesh._cache.get("mass")
    if cached is not None:
        return cached
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.area[:, None, None] * base[None, :, :]
    mat = _scatter(mesh, local)
    mesh._cache["mass"] = mat
    return mat


def assemble_laplace(mesh: Mesh) -> sp.csr_matrix:
    """Stiffness of the Dirichlet Laplacian (no elimination applied)."""
    cached = mesh._cache.get("laplace")
    if cached is not None:
        return cached
    local = np.einsum("tiv,tjv->tij", mesh.grads, mesh.grads) * mesh.area[:, None, None]
    mat = _scatter(mesh, local)
    mesh._cache["laplace"] = mat
    return mat


def regularized_modulus(grad: np.ndarray, eps: float) -> np.ndarray:
    """|v|_eps = sqrt(|v|^2 + eps^2) rowwise for (n, 2) arrays."""
    return np.sqrt(np.einsum("tv,tv->t", grad, grad) + eps * eps)


def assemble_tv_stiffness(mesh: Mesh, w, eps: float) -> sp.csr_matrix:
    """Weighted stiffness A(w): entries area_T (grad phi_i . grad phi_j) / |grad w|_eps.

    Symmetric positive semidefinite for every w; constants span the kernel
    on meshes without boundary elimination.
    """
    if eps <= 0:
        raise FemError("eps must be positive")
    wv = w.values if isinstance(w, FeFunction) else np.asarray(w, dtype=np.float64)
    if wv.shape != (mesh.nv,):
        raise FemError("coefficient length does not match mesh")
    gw = np.einsum("ti,tiv->tv", wv[mesh.leaf_local], mesh.grads)
    coef = mesh.area / regularized_modulus(gw, eps)
    local = np.einsum("tiv,tjv->tij", mesh.grads, mesh.grads) * coef[:, None, None]
    return _scatter(mesh, local)


# -- energy ----------------------------------------------------------------------


def energy(u: FeFunction, g: FeFunction, eps: float, lam: float) -> float:
    """Regularized total variation energy with quadratic fidelity term.

    sum_T area_T |grad u|_eps  +  lam/2 (u - g)^T M (u - g), both exact.
    """
    mesh = _same_mesh(u, g)
    if eps <= 0:
        raise FemError("eps must be positive")
    if lam < 0:
        raise FemError("lam must be non-negative")
    gu = u.element_gradients()
    tv = float(np.dot(mesh.area, regularized_modulus(gu, eps)))
    d = u.values - g.values
    m = assemble_mass(mesh)
    fid = 0.5 * lam * float(d @ (m @ d))
    return tv + fid


def energy_gradient(u: FeFunction, g: FeFunction, eps: float, lam: float) -> np.ndarray:
    """Gradient of the energy with respect to nodal coefficients: A(u) u + lam M (u - g)."""
    mesh = _same_mesh(u, g)
    a = assemble_tv_stiffness(mesh, u, eps)
    m = assemble_mass(mesh)
    return a @ u.values + lam * (m @ (u.values - g.values))


# -- norms -----------------------------------------------------------------------


def l2_norm(f: FeFunction) -> float:
    m = assemble_mass(f.mesh)
    return float(np.sqrt(max(f.values @ (m @ f.values), 0.0)))


def h1_seminorm(f: FeFunction) -> float:
    k = assemble_laplace(f.mesh)
    return float(np.sqrt(max(f.values @ (k @ f.values), 0.0)))


def linf_diff(f: FeFunction, g: FeFunction) -> float:
    _same_mesh(f, g)
    return float(np.max(np.abs(f.values - g.values))) if f.values.size else 0.0


# -- interpolation and transfer ----------------------------------------------------


def nodal_interpolant(mesh: Mesh, func) -> FeFunction:
    """Interpolate a callable func(points) -> values at the active vertices."""
    vals = np.asarray(func(mesh.coords), dtype=np.float64)
    if vals.shape != (mesh.nv,):
        raise FemError("interpolated callable must return one value per vertex")
    return FeFunction(mesh, vals)


def transfer(f: FeFunction, to_mesh: Mesh) -> FeFunction:
    """Carry a nodal function to another mesh of the same lineage.

    Vertices shared by both meshes copy their coefficient.  A vertex
    missing from the source mesh is an edge midpoint of the forest; its
    value is resolved as the average of its parents, recursively.  On
    pure refinements this is exact P1 interpolation; on coarsening it is
    nodal resampling.
    """
    src = f.mesh
    if src is to_mesh:
        return f.copy()
    if not src.same_lineage(to_mesh):
        raise FemError("meshes do not share a macro hierarchy")

    pool = max(src._forest.nv, to_mesh._forest.nv)
    tmp = np.full(pool, np.nan)
    tmp[src.active_vids] = f.values

    need = to_mesh.active_vids[np.isnan(tmp[to_mesh.active_vids])]
    if need.size:
        vparent = to_mesh._forest.vparent
        collect = set(int(v) for v in need)
        stack = list(collect)
        while stack:
            v = stack.pop()
            for p in vparent[v]:
                p = int(p)
                if p < 0:
                    raise FemError("root vertex missing from source mesh")
                if np.isnan(tmp[p]) and p not in collect:
                    collect.add(p)
                    stack.append(p)
        for v in sorted(collect):
            pa, pb = (int(x) for x in vparent[v])
            tmp[v] = 0.5 * (tmp[pa] + tmp[pb])

    return FeFunction(to_mesh, tmp[to_mesh.active_vids])


# -- quadrature ---------------------------------------------------------------------

# barycentric points and weights (weights sum to one, scale by area)
_QUAD_RULES = {
    # midpoint rule, exact for quadratics
    2: (
        np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.array([1.0, 1.0, 1.0]) / 3.0,
    ),
    # six-point rule, exact for quartics
    4: (
        np.array(
            [
                [0.108103018168070, 0.445948490915965, 0.445948490915965],
                [0.445948490915965, 0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.445948490915965, 0.108103018168070],
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
                [0.091576213509771, 0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.091576213509771, 0.816847572980459],
            ]
        ),
        np.array(
            [
                0.223381589678011,
                0.223381589678011,
                0.223381589678011,
                0.109951743655322,
                0.109951743655322,
                0.109951743655322,
            ]
        ),
    ),
    # seven-point rule, exact for quintics
    5: (
        np.array(
            [
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                [0.059715871789770, 0.470142064105115, 0.470142064105115],
                [0.470142064105115, 0.059715871789770, 0.470142064105115],
                [0.470142064105115, 0.470142064105115, 0.059715871789770],
                [0.797426985353087, 0.101286507323456, 0.101286507323456],
                [0.101286507323456, 0.797426985353087, 0.101286507323456],
                [0.101286507323456, 0.101286507323456, 0.797426985353087],
            ]
        ),
        np.array(
            [
                0.225,
                0.132394152788506,
                0.132394152788506,
                0.132394152788506,
                0.125939180544827,
                0.125939180544827,
                0.125939180544827,
            ]
        ),
    ),
}


def triangle_quadrature(degree: int):
    """Barycentric quadrature rule (points, weights) exact up to the given degree."""
    for d in sorted(_QUAD_RULES):
        if degree <= d:
            return _QUAD_RULES[d]
    raise FemError(f"no quadrature rule of degree {degree}")


def quad_points(mesh: Mesh, degree: int):
    """Physical quadrature points and weights for all leaves.

    Returns (points, weights, bary) with points (nl, q, 2) and weights
    (nl, q) already scaled by the triangle areas.
    """
    bary, w = triangle_quadrature(degree)
    p = mesh.coords[mesh.leaf_local]                     # (nl, 3, 2)
    pts = np.einsum("qi,tiv->tqv", bary, p)
    wts = mesh.area[:, None] * w[None, :]
    return pts, wts, bary


def integrate(mesh: Mesh, func, degree: int = 4) -> float:
    """Integrate a callable func(points (n,2)) -> values over the mesh."""
    pts, wts, _ = quad_points(mesh, degree)
    vals = np.asarray(func(pts.reshape(-1, 2))).reshape(wts.shape)
    return float(np.sum(vals * wts))
