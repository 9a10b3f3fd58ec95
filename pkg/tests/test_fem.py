"""Assembly, norms, energies, quadrature, and inter-mesh transfer."""

import numpy as np
import pytest

from stvflow.fem import (
    FeFunction,
    FemError,
    assemble_laplace,
    assemble_mass,
    assemble_tv_stiffness,
    energy,
    energy_gradient,
    h1_seminorm,
    integrate,
    l2_norm,
    linf_diff,
    nodal_interpolant,
    regularized_modulus,
    transfer,
    triangle_quadrature,
)
from stvflow.mesh import macro_mesh, refine


def dense_mass_oracle(mesh):
    """Per-element 3x3 blocks accumulated into a dense matrix."""
    m = np.zeros((mesh.nv, mesh.nv))
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    for k in range(mesh.n_leaves):
        loc = mesh.leaf_local[k]
        for i in range(3):
            for j in range(3):
                m[loc[i], loc[j]] += mesh.area[k] * local[i, j]
    return m


class TestAssembly:
    def test_mass_against_dense_oracle(self):
        mesh = macro_mesh(2)
        got = assemble_mass(mesh).toarray()
        want = dense_mass_oracle(mesh)
        assert np.allclose(got, want, atol=1e-15)

    def test_mass_total(self):
        mesh = macro_mesh(3)
        m = assemble_mass(mesh)
        ones = np.ones(mesh.nv)
        assert ones @ (m @ ones) == pytest.approx(1.0, rel=1e-13)

    def test_laplace_kernel_and_psd(self):
        mesh = macro_mesh(2)
        a = assemble_laplace(mesh).toarray()
        assert np.allclose(a, a.T, atol=1e-14)
        assert np.allclose(a @ np.ones(mesh.nv), 0.0, atol=1e-13)
        w = np.linalg.eigvalsh(a)
        assert w.min() > -1e-12

    def test_laplace_exact_dirichlet_energy(self):
        # u = x has grad (1,0): u^T A u = |O| = 1
        mesh = macro_mesh(3)
        a = assemble_laplace(mesh)
        u = mesh.coords[:, 0]
        assert u @ (a @ u) == pytest.approx(1.0, rel=1e-13)

    def test_tv_stiffness_limits(self):
        # for |grad w| << eps, A(w) approaches Laplace/eps
        mesh = macro_mesh(2)
        w = FeFunction(mesh, np.zeros(mesh.nv))
        eps = 0.5
        a_tv = assemble_tv_stiffness(mesh, w, eps).toarray()
        a_lap = assemble_laplace(mesh).toarray() / eps
        assert np.allclose(a_tv, a_lap, atol=1e-14)

    def test_tv_stiffness_scales_below_laplace(self):
        # 1/|grad w|_eps <= 1/eps entrywise on the element weights
        mesh = refine(macro_mesh(2), macro_mesh(2).leaf_ids[:3])
        rng = np.random.default_rng(0)
        w = FeFunction(mesh, rng.normal(size=mesh.nv))
        eps = 0.25
        quad = w.values @ (assemble_tv_stiffness(mesh, w, eps) @ w.values)
        lap = w.values @ (assemble_laplace(mesh) @ w.values) / eps
        assert 0 < quad <= lap + 1e-14


class TestNormsAndEnergy:
    def test_l2_norm_of_linear(self):
        # int_O x^2 = 1/3
        mesh = macro_mesh(4)
        f = FeFunction(mesh, mesh.coords[:, 0])
        assert l2_norm(f) == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-13)

    def test_h1_seminorm_of_linear(self):
        mesh = macro_mesh(4)
        f = FeFunction(mesh, 2.0 * mesh.coords[:, 1])
        assert h1_seminorm(f) == pytest.approx(2.0, rel=1e-13)

    def test_energy_of_zero(self):
        # J(0) = eps |O| + lam/2 ||g||^2
        mesh = macro_mesh(3)
        eps, lam = 0.125, 7.0
        g = FeFunction(mesh, mesh.coords[:, 0])
        u = FeFunction(mesh, np.zeros(mesh.nv))
        m = assemble_mass(mesh)
        want = eps * 1.0 + lam / 2.0 * (g.values @ (m @ g.values))
        assert energy(u, g, eps, lam) == pytest.approx(want, rel=1e-13)

    def test_energy_gradient_matches_finite_differences(self):
        mesh = macro_mesh(4)
        rng = np.random.default_rng(5)
        u = FeFunction(mesh, rng.normal(size=mesh.nv))
        g = FeFunction(mesh, rng.normal(size=mesh.nv))
        eps, lam = 2.0**-5, 200.0
        grad = energy_gradient(u, g, eps, lam)
        h = 1e-6
        idx = rng.choice(mesh.nv, size=12, replace=False)
        for i in idx:
            up = u.values.copy()
            um = u.values.copy()
            up[i] += h
            um[i] -= h
            fd = (
                energy(FeFunction(mesh, up), g, eps, lam)
                - energy(FeFunction(mesh, um), g, eps, lam)
            ) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)

    def test_regularized_modulus(self):
        v = np.array([[3.0, 4.0], [0.0, 0.0]])
        out = regularized_modulus(v, 2.0)
        assert out[0] == pytest.approx(np.sqrt(29.0))
        assert out[1] == pytest.approx(2.0)

    def test_linf_diff(self):
        mesh = macro_mesh(2)
        a = FeFunction(mesh, np.zeros(mesh.nv))
        vals = np.zeros(mesh.nv)
        vals[3] = -2.5
        b = FeFunction(mesh, vals)
        assert linf_diff(a, b) == 2.5


class TestQuadrature:
    def test_rules_integrate_polynomials_exactly(self):
        # reference-triangle moments int x^p y^q = p! q! / (p+q+2)!
        from math import factorial

        for degree in (2, 4, 5):
            pts, wts = triangle_quadrature(degree)
            assert wts.sum() == pytest.approx(1.0, rel=1e-14)
            for p in range(degree + 1):
                for q in range(degree + 1 - p):
                    # weights are relative to element area (1/2 here)
                    got = 0.5 * float(np.sum(wts * pts[:, 0] ** p * pts[:, 1] ** q))
                    want = factorial(p) * factorial(q) / factorial(p + q + 2)
                    assert got == pytest.approx(want, rel=1e-13), (degree, p, q)

    def test_integrate_smooth(self):
        mesh = macro_mesh(8)
        val = integrate(mesh, lambda pts: pts[:, 0] ** 2 * pts[:, 1] ** 2)
        assert val == pytest.approx(1.0 / 9.0, rel=1e-12)


class TestTransfer:
    def test_exact_under_refinement(self):
        coarse = macro_mesh(2)
        rng = np.random.default_rng(1)
        f = FeFunction(coarse, rng.normal(size=coarse.nv))
        fine = refine(coarse, coarse.leaf_ids)
        g = transfer(f, fine)
        # P1 nodal interpolation is exact on nested refinement
        assert l2_norm(FeFunction(fine, g.values)) == pytest.approx(l2_norm(f), rel=1e-13)
        assert h1_seminorm(g) == pytest.approx(h1_seminorm(f), rel=1e-13)

    def test_multi_level_and_coarsening_paths(self):
        mesh = macro_mesh(2)
        rng = np.random.default_rng(2)
        meshes = [mesh]
        for _ in range(3):
            pick = rng.choice(meshes[-1].leaf_ids, size=4, replace=False)
            meshes.append(refine(meshes[-1], pick))
        f = FeFunction(meshes[0], rng.normal(size=meshes[0].nv))
        g = transfer(f, meshes[-1])
        assert l2_norm(g) == pytest.approx(l2_norm(f), rel=1e-12)
        # round trip down again samples at coarse nodes, which are shared
        back = transfer(g, meshes[0])
        assert np.allclose(back.values, f.values)

    def test_unrelated_meshes_rejected(self):
        a = macro_mesh(2)
        b = macro_mesh(3)
        f = FeFunction(a, np.zeros(a.nv))
        with pytest.raises(FemError):
            transfer(f, b)

    def test_nodal_interpolant(self):
        mesh = macro_mesh(2)
        f = nodal_interpolant(mesh, lambda pts: pts[:, 0] + 2 * pts[:, 1])
        assert np.allclose(f.values, mesh.coords[:, 0] + 2 * mesh.coords[:, 1])


class TestFeFunction:
    def test_length_validated(self):
        mesh = macro_mesh(2)
        with pytest.raises(FemError):
            FeFunction(mesh, np.zeros(mesh.nv + 1))

    def test_element_gradients(self):
        mesh = macro_mesh(2)
        f = FeFunction(mesh, 3.0 * mesh.coords[:, 0] - mesh.coords[:, 1])
        g = f.element_gradients()
        assert np.allclose(g, [[3.0, -1.0]] * mesh.n_leaves)
