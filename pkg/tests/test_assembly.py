import math

import numpy as np
import pytest

from weightsl.assembly import (EmptySystemError, apply_dirichlet, assemble_load, assemble_mass,
                               assemble_stiffness, assemble_system, export_coo)
from weightsl.fields import AdmissibilityError, ScalarField, interpolate
from weightsl.mesh import build_interval_mesh, build_rectangle_mesh, refine_uniform
from weightsl.norms import gradient_norms, lp_norm, weighted_sobolev_norm
from weightsl.quadrature import gauss_rule
from weightsl.singular import DivergenceError

TWO = build_interval_mesh(0, 1, 2)
SQUARE = build_rectangle_mesh((0, 1), (0, 1), 5, 4)


def test_two_element_hand_values():
    system = assemble_system(TWO, 1.0, 1.0)
    np.testing.assert_allclose(system.stiffness.toarray(), [[4.0]], rtol=1e-14)
    np.testing.assert_allclose(system.mass.toarray(), [[1 / 3]], rtol=1e-14)
    np.testing.assert_allclose(system.load, [0.5], rtol=1e-14)


def test_stiffness_weight_scaling():
    assert assemble_stiffness(SQUARE, 0.0).count_nonzero() == 0
    A1 = assemble_stiffness(SQUARE, "1+x*y")
    A2 = assemble_stiffness(SQUARE, "2*(1+x*y)")
    np.testing.assert_allclose(A2.toarray(), 2 * A1.toarray(), rtol=1e-14)
    assert abs(A1 - A1.T).max() == 0.0
    with pytest.raises(AdmissibilityError):
        assemble_stiffness(SQUARE, "x-0.5")


@pytest.mark.parametrize("mesh", [build_interval_mesh(-1, 2, 9), SQUARE], ids=["1d", "2d"])
def test_mass_partition_of_unity(mesh):
    M = assemble_mass(mesh)
    rows = np.asarray(M.sum(axis=1)).ravel()
    # row sums equal the integral of each basis function
    for i in range(0, mesh.num_nodes, 3):
        vals = np.zeros(mesh.num_nodes)
        vals[i] = 1.0
        phi = ScalarField.nodal(mesh, vals)
        assert rows[i] == pytest.approx(lp_norm(phi, 1, mesh), rel=1e-12)
    assert M.sum() == pytest.approx(mesh.domain_measure, rel=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.standard_normal(mesh.num_nodes)
        assert x @ (M @ x) > 0


def test_load_examples():
    mesh = build_interval_mesh(0, 1, 8)
    assert np.all(assemble_load(mesh, 0.0) == 0)
    b = assemble_load(mesh, 1.0)
    np.testing.assert_allclose(b[mesh.interior_nodes], 1 / 8, rtol=1e-14)
    z = "exp(x)*cos(3*x)"
    np.testing.assert_allclose(assemble_load(mesh, f"-2.5*({z})"), -2.5 * assemble_load(mesh, z),
                               rtol=1e-13)


def test_load_with_integrable_singularity():
    mesh = build_interval_mesh(0, 1, 4)
    b = assemble_load(mesh, "x^(-0.5)", quad=20)
    # int_0^1 x^-1/2 = 2, split between the basis functions
    assert b.sum() == pytest.approx(2.0, rel=1e-8)
    # phi_0 = 1 - 4x on [0, 1/4]: int x^-1/2 (1 - 4x) = 2/3
    assert b[0] == pytest.approx(2 / 3, rel=1e-8)
    with pytest.raises(DivergenceError):
        assemble_load(mesh, "1/x")


def test_dirichlet_reduction():
    assert assemble_system(TWO, 1.0).num_dofs == 1
    sq = assemble_system(build_rectangle_mesh((0, 1), (0, 1), 2, 2), "1+x")
    assert sq.num_dofs == 1
    s = assemble_system(SQUARE, "1+x^2*y")
    assert abs(s.stiffness - s.stiffness.T).max() == 0.0
    with pytest.raises(EmptySystemError):
        apply_dirichlet(assemble_stiffness(build_interval_mesh(0, 1, 1), 1.0),
                        assemble_mass(build_interval_mesh(0, 1, 1)),
                        np.zeros(2), build_interval_mesh(0, 1, 1))


def _quadrature_forms(mesh, n, u, v):
    rule = gauss_rule(mesh.dim, 6)
    _, wts = mesh.quadrature_points(rule)
    gu, gv = u.element_gradients(mesh), v.element_gradients(mesh)
    w = ScalarField.from_expression(n).at_quadrature(mesh, rule)
    a = float(np.sum(wts * w * np.sum(gu * gv, axis=1)[:, None]))
    m = float(np.sum(wts * u.at_quadrature(mesh, rule) * v.at_quadrature(mesh, rule)))
    return a, m


@pytest.mark.parametrize("mesh", [build_interval_mesh(0, 1, 12), SQUARE], ids=["1d", "2d"])
def test_quadratic_forms_match_direct_quadrature(mesh):
    rng = np.random.default_rng(4)
    n = "1+x^2" if mesh.dim == 1 else "2+sin(x*y)"
    system = assemble_system(mesh, n, quad=6)
    for _ in range(10):
        ur, vr = rng.standard_normal((2, system.num_dofs))
        u = ScalarField.nodal(mesh, system.expand(ur))
        v = ScalarField.nodal(mesh, system.expand(vr))
        a, m = _quadrature_forms(mesh, n, u, v)
        assert ur @ (system.stiffness @ vr) == pytest.approx(a, rel=1e-10)
        assert ur @ (system.mass @ vr) == pytest.approx(m, rel=1e-10)
        norm_sq = ur @ ((system.mass + system.stiffness) @ ur)
        assert weighted_sobolev_norm(u, 2, n, mesh, 6) ** 2 == pytest.approx(norm_sq, rel=1e-10)


def test_form_values_converge_at_second_order():
    # Q(I_h u, I_h v) -> int n u' v' for smooth u, v
    u = ScalarField.from_expression("sin(pi*x)")
    v = ScalarField.from_expression("x*(1-x)*exp(x)")
    n = "1+x"
    import sympy as sp
    X = sp.Symbol("x")
    exact = float(sp.integrate((1 + X) * sp.diff(sp.sin(sp.pi * X), X)
                               * sp.diff(X * (1 - X) * sp.exp(X), X), (X, 0, 1)))
    mesh = build_interval_mesh(0, 1, 8)
    errs = []
    for _ in range(4):
        A = assemble_stiffness(mesh, n, 6)
        ui, vi = interpolate(u, mesh).values, interpolate(v, mesh).values
        errs.append(abs(ui @ (A @ vi) - exact))
        mesh = refine_uniform(mesh)
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(3)]
    assert min(rates) >= 1.8


def test_gradient_norm_agrees_with_stiffness():
    mesh = build_interval_mesh(0, 1, 16)
    rng = np.random.default_rng(9)
    system = assemble_system(mesh, "1+x")
    x = rng.standard_normal(system.num_dofs)
    u = ScalarField.nodal(mesh, system.expand(x))
    assert gradient_norms(u, 2, mesh, n="1+x") ** 2 == pytest.approx(x @ (system.stiffness @ x), rel=1e-12)


def test_export_coo(tmp_path):
    A = assemble_system(build_interval_mesh(0, 1, 4), 1.0).stiffness
    path = tmp_path / "A.coo"
    export_coo(A, path)
    lines = path.read_text().splitlines()
    assert len(lines) == A.nnz
    r, c, v = lines[0].split()
    assert (r, c) == ("0", "0") and len(v.split("e")[0].replace(".", "")) == 17
    rows = np.loadtxt(path)
    np.testing.assert_allclose(rows[:, 2], [8, -4, -4, 8, -4, -4, 8], rtol=1e-14)
    np.testing.assert_array_equal(rows[:, 2], A.tocoo().toarray()[rows[:, 0].astype(int), rows[:, 1].astype(int)])
