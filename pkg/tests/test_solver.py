"""Linear solver and the frozen-coefficient time step."""

import numpy as np
import pytest
import scipy.sparse as sp

from stvflow.fem import (
    FeFunction,
    FemError,
    assemble_mass,
    assemble_tv_stiffness,
    nodal_interpolant,
)
from stvflow.mesh import macro_mesh
from stvflow.solver import CgError, SchemeVariant, SolverError, cg_solve, step


def random_spd(n: int, seed: int) -> sp.csr_matrix:
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(n, n))
    return sp.csr_matrix(b @ b.T + n * np.eye(n))


class TestCg:
    def test_matches_dense_solve(self):
        a = random_spd(40, 1)
        rng = np.random.default_rng(2)
        b = rng.normal(size=40)
        res = cg_solve(a, b, tol=1e-12)
        want = np.linalg.solve(a.toarray(), b)
        assert np.linalg.norm(res.x - want) <= 1e-9 * np.linalg.norm(want)
        assert res.rel_residual <= 1e-12

    def test_zero_rhs(self):
        a = random_spd(5, 3)
        res = cg_solve(a, np.zeros(5))
        assert np.all(res.x == 0.0)
        assert res.iterations == 0

    def test_ritz_values_bracket_spectrum(self):
        a = random_spd(30, 4)
        b = np.random.default_rng(5).normal(size=30)
        res = cg_solve(a, b, tol=1e-13)
        ritz = res.ritz_values()
        assert ritz.size > 0
        assert np.all(ritz > 0)
        # Ritz values of the Jacobi-preconditioned operator lie inside
        # its spectrum
        d = a.diagonal()
        m = a.toarray() / np.sqrt(np.outer(d, d))
        ev = np.linalg.eigvalsh(m)
        assert ritz.min() >= ev.min() - 1e-8
        assert ritz.max() <= ev.max() + 1e-8

    def test_indefinite_rejected(self):
        a = sp.csr_matrix(np.diag([1.0, -1.0]))
        with pytest.raises(CgError):
            cg_solve(a, np.array([1.0, 1.0]))

    def test_iteration_cap(self):
        a = random_spd(50, 6)
        b = np.random.default_rng(7).normal(size=50)
        with pytest.raises(CgError):
            cg_solve(a, b, tol=1e-15, max_iter=2)


def five_point_setup(tau=1e-2, eps=0.5, lam=3.0):
    """Single interior vertex: the step equation reduces to a scalar root."""
    mesh = macro_mesh(1)
    assert mesh.interior_idx.size == 1
    x_prev = nodal_interpolant(mesh, lambda p: 0.4 * p[:, 0] * (1 - p[:, 0]))
    xv = x_prev.values.copy()
    xv[mesh.boundary_vertex] = 0.0
    x_prev = FeFunction(mesh, xv)
    g = nodal_interpolant(mesh, lambda p: np.ones(len(p)))
    gv = g.values.copy()
    gv[mesh.boundary_vertex] = 0.0
    g = FeFunction(mesh, gv)
    noise = FeFunction(mesh, np.zeros(mesh.nv))
    return mesh, x_prev, g, noise, tau, eps, lam


def scalar_residual(c, mesh, x_prev, g, tau, eps, lam):
    i = mesh.interior_idx[0]
    xv = np.zeros(mesh.nv)
    xv[i] = c
    m = assemble_mass(mesh)
    a = assemble_tv_stiffness(mesh, xv, eps)
    lhs = (1 + tau * lam) * m[i, i] * c + tau * a[i, i] * c
    rhs = (m @ (x_prev.values + tau * lam * g.values))[i]
    return lhs - rhs


class TestStep:
    def test_fix_matches_scalar_root(self):
        from scipy.optimize import brentq

        mesh, x_prev, g, noise, tau, eps, lam = five_point_setup()
        res = step(x_prev, g, noise, tau, eps, lam, SchemeVariant.fix(1e-13), fp_cap=200, cg_tol=1e-14)
        i = mesh.interior_idx[0]
        root = brentq(
            scalar_residual, -10.0, 10.0, args=(mesh, x_prev, g, tau, eps, lam), xtol=1e-15
        )
        assert res.x.values[i] == pytest.approx(root, abs=1e-12)
        assert not res.capped

    def test_final_solve_uses_frozen_coefficient(self):
        mesh, x_prev, g, noise, tau, eps, lam = five_point_setup()
        res = step(x_prev, g, noise, tau, eps, lam, SchemeVariant.fix3(), cg_tol=1e-14)
        m = assemble_mass(mesh)
        a = assemble_tv_stiffness(mesh, res.x_star.values, eps)
        idx = mesh.interior_idx
        k = ((1 + tau * lam) * m[idx][:, idx] + tau * a[idx][:, idx]).toarray()
        rhs = (m @ (x_prev.values + tau * lam * g.values))[idx]
        want = np.linalg.solve(k, rhs)
        assert np.allclose(res.x.values[idx], want, atol=1e-12)

    def test_variant_solve_counts(self):
        mesh, x_prev, g, noise, tau, eps, lam = five_point_setup()
        si = step(x_prev, g, noise, tau, eps, lam, SchemeVariant.si())
        fx3 = step(x_prev, g, noise, tau, eps, lam, SchemeVariant.fix3())
        fx = step(x_prev, g, noise, tau, eps, lam, SchemeVariant.fix(1e-12), fp_cap=50)
        assert si.iterations == 1
        assert fx3.iterations == 3
        assert fx.iterations >= 1
        assert fx.final_update < 1e-12
        assert len(fx.cg_residuals) == fx.iterations

    def test_cap_sets_flag(self):
        mesh, x_prev, g, noise, tau, eps, lam = five_point_setup()
        res = step(x_prev, g, noise, tau, eps, lam, SchemeVariant.fix(1e-300), fp_cap=2)
        assert res.capped
        assert res.iterations == 2

    def test_boundary_values_stay_zero(self):
        mesh = macro_mesh(4)
        rng = np.random.default_rng(11)
        xv = rng.normal(size=mesh.nv)
        xv[mesh.boundary_vertex] = 0.0
        x_prev = FeFunction(mesh, xv)
        g = FeFunction(mesh, np.zeros(mesh.nv))
        noise = FeFunction(mesh, np.zeros(mesh.nv))
        res = step(x_prev, g, noise, 1e-3, 0.25, 0.0, SchemeVariant.si())
        assert np.all(res.x.values[mesh.boundary_vertex] == 0.0)

    def test_parameter_validation(self):
        mesh, x_prev, g, noise, tau, eps, lam = five_point_setup()
        with pytest.raises(SolverError):
            step(x_prev, g, noise, 0.0, eps, lam, SchemeVariant.si())
        with pytest.raises(SolverError):
            step(x_prev, g, noise, tau, -1.0, lam, SchemeVariant.si())
        with pytest.raises(SolverError):
            step(x_prev, g, noise, tau, eps, -1.0, SchemeVariant.si())
        with pytest.raises(SolverError):
            SchemeVariant("fix")
        with pytest.raises(SolverError):
            SchemeVariant("bogus")

    def test_mesh_mismatch_rejected(self):
        mesh, x_prev, g, noise, tau, eps, lam = five_point_setup()
        other = macro_mesh(1)
        g_other = FeFunction(other, np.zeros(other.nv))
        with pytest.raises(FemError):
            step(x_prev, g_other, noise, tau, eps, lam, SchemeVariant.si())
