"""One implicit time step of the regularized flow, linearized by freezing.

The update solves

    (M + tau A(X*) + tau lam M) X = M (X_prev + tau lam g + noise)

on the interior vertices, with zero Dirichlet values eliminated
symmetrically.  The frozen coefficient X* is iterated: the semi-implicit
variant stops after one solve, the three-step variant after exactly
three, and the tolerance variant once two subsequent iterates agree in
the maximum norm (capped at a fixed iteration count).  The first iterate
is always the previous solution carried to the current mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import FeFunction, FemError, assemble_mass, assemble_tv_stiffness
from .mesh import Mesh

__all__ = ["SchemeVariant", "SolverError", "CgError", "CgResult", "cg_solve", "step", "StepResult"]


class SolverError(Exception):
    """Raised for invalid step parameters."""


class CgError(Exception):
    """Raised when conjugate gradients fails to reach the tolerance."""


@dataclass(frozen=True)
class SchemeVariant:
    """Linearization strategy: 'si', 'fix3', or 'fix' with a stop tolerance."""

    kind: str
    tol: float | None = None

    def __post_init__(self):
        if self.kind not in ("si", "fix3", "fix"):
            raise SolverError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "fix":
            if self.tol is None or not (self.tol > 0):
                raise SolverError("fix variant needs a positive tolerance")

    @classmethod
    def si(cls) -> "SchemeVariant":
        return cls("si")

    @classmethod
    def fix3(cls) -> "SchemeVariant":
        return cls("fix3")

    @classmethod
    def fix(cls, tol: float) -> "SchemeVariant":
        return cls("fix", tol)


@dataclass
class CgResult:
    x: np.ndarray
    rel_residual: float
    iterations: int
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)

    def ritz_values(self) -> np.ndarray:
        """Eigenvalue estimates of the preconditioned operator from the CG recurrence."""
        k = len(self.alphas)
        if k == 0:
            return np.array([])
        diag = np.empty(k)
        off = np.empty(max(k - 1, 0))
        for i in range(k):
            diag[i] = 1.0 / self.alphas[i]
            if i > 0:
                diag[i] += self.betas[i - 1] / self.alphas[i - 1]
            if i < k - 1:
                off[i] = np.sqrt(self.betas[i]) / self.alphas[i]
        return np.linalg.eigvalsh(np.diag(diag) + np.diag(off, 1) + np.diag(off, -1))


def cg_solve(a: sp.spmatrix, b: np.ndarray, tol: float = 1e-10, max_iter: int | None = None) -> CgResult:
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Stops when ||b - A x|| <= tol ||b||; raises CgError after 10 * dim
    iterations (or the given cap).  A zero right-hand side returns zero.
    """
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CgResult(np.zeros(n), 0.0, 0)

    d = np.asarray(a.diagonal())
    if np.any(d <= 0):
        raise CgError("operator has non-positive diagonal entries")
    x = np.zeros(n)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = float(r @ z)
    res = CgResult(x, 1.0, 0)
    for it in range(1, max_iter + 1):
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0:
            raise CgError("operator is not positive definite")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res.alphas.append(alpha)
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol * bnorm:
            res.x = x
            res.rel_residual = rnorm / bnorm
            res.iterations = it
            return res
        z = r / d
        rz_new = float(r @ z)
        beta = rz_new / rz
        res.betas.append(beta)
        p = z + beta * p
        rz = rz_new
    raise CgError(f"no convergence within {max_iter} iterations (rel residual {rnorm / bnorm:.3e})")


@dataclass
class StepResult:
    x: FeFunction                 # accepted solution
    x_star: FeFunction            # frozen coefficient of the final solve
    iterations: int               # number of linear solves
    final_update: float           # max-norm difference of the last two iterates
    cg_residuals: list            # relative residual per solve
    capped: bool                  # tolerance variant hit the iteration cap


def _interior_matrix(k: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    return k[idx][:, idx].tocsr()


def step(
    x_prev: FeFunction,
    g_h: FeFunction,
    noise_term: FeFunction,
    tau: float,
    eps: float,
    lam: float,
    variant: SchemeVariant,
    fp_cap: int = 30,
    cg_tol: float = 1e-10,
) -> StepResult:
    """Advance one time step on the mesh of x_prev."""
    if tau <= 0:
        raise SolverError("tau must be positive")
    if eps <= 0:
        raise SolverError("eps must be positive")
    if lam < 0:
        raise SolverError("lam must be non-negative")
    mesh: Mesh = x_prev.mesh
    for f in (g_h, noise_term):
        if f.mesh is not mesh:
            raise FemError("step data must live on one mesh")

    m = assemble_mass(mesh)
    idx = mesh.interior_idx
    m_int = mesh._cache.get("mass_interior")
    if m_int is None:
        m_int = _interior_matrix(m, idx)
        mesh._cache["mass_interior"] = m_int

    rhs_full = m @ (x_prev.values + tau * lam * g_h.values + noise_term.values)
    rhs = rhs_full[idx]

    if variant.kind == "si":
        n_solves, tol = 1, None
    elif variant.kind == "fix3":
        n_solves, tol = 3, None
    else:
        n_solves, tol = fp_cap, variant.tol

    xs = x_prev.values.copy()
    xs[mesh.boundary_vertex] = 0.0     # iterates live in the zero-trace space
    x_star = xs
    cg_residuals: list = []
    capped = False
    update = np.inf
    it = 0
    while it < n_solves:
        it += 1
        a = assemble_tv_stiffness(mesh, xs, eps)
        k = (1.0 + tau * lam) * m_int + tau * _interior_matrix(a, idx)
        sol = cg_solve(k, rhs, tol=cg_tol)
        cg_residuals.append(sol.rel_residual)
        x_new = np.zeros(mesh.nv)
        x_new[idx] = sol.x
        update = float(np.max(np.abs(x_new - xs))) if mesh.nv else 0.0
        x_star = xs
        xs = x_new
        if tol is not None and update < tol:
            break
    else:
        capped = tol is not None

    return StepResult(
        x=FeFunction(mesh, xs),
        x_star=FeFunction(mesh, x_star),
        iterations=it,
        final_update=update,
        cg_residuals=cg_residuals,
        capped=capped,
    )
