import math

import numpy as np
import pytest

from weightsl.fields import ScalarField, evaluate, interpolate
from weightsl.mesh import MeshError, build_interval_mesh, build_rectangle_mesh, refine_uniform
from weightsl.quadrature import gauss_rule


def test_interval_bisection():
    m = build_interval_mesh(0, 1, 2)
    np.testing.assert_array_equal(m.nodes[:, 0], [0, 0.5, 1])
    assert set(m.boundary_nodes) == {0, 2}


def test_interval_measures():
    m = build_interval_mesh(0, 1, 4)
    np.testing.assert_allclose(m.element_measures, 0.25)
    assert m.element_measures.sum() == pytest.approx(1.0, rel=1e-12)
    m = build_interval_mesh(-1, 1, 10)
    assert m.num_nodes == 11
    assert m.element_measures.sum() == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("a, b, k", [(1, 1, 3), (2, 1, 3), (0, 1, 0)])
def test_interval_rejects(a, b, k):
    with pytest.raises(MeshError):
        build_interval_mesh(a, b, k)


def test_square_counts():
    m = build_rectangle_mesh((0, 1), (0, 1), 1, 1)
    assert (m.num_elements, m.num_nodes, len(m.boundary_nodes)) == (2, 4, 4)
    m = build_rectangle_mesh((0, 1), (0, 1), 2, 2)
    assert (m.num_elements, m.num_nodes, len(m.interior_nodes)) == (8, 9, 1)
    np.testing.assert_array_equal(m.nodes[m.interior_nodes[0]], [0.5, 0.5])


@pytest.mark.parametrize("mx, my", [(1, 1), (3, 2), (7, 5), (16, 16)])
def test_square_area(mx, my):
    m = build_rectangle_mesh((0, 1), (0, 1), mx, my)
    assert m.element_measures.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(m.element_measures > 0)


def test_rectangle_degenerate():
    with pytest.raises(MeshError):
        build_rectangle_mesh((0, 0), (0, 1), 2, 2)


def _faces_conforming(m):
    # each interior edge is shared by exactly two triangles, boundary edges by one
    edges = {}
    for tri in m.elements:
        for i, j in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((tri[i], tri[j])))
            edges[key] = edges.get(key, 0) + 1
    on_bnd = set(m.boundary_nodes.tolist())
    for (a, b), count in edges.items():
        boundary_edge = a in on_bnd and b in on_bnd and count == 1
        assert count == 2 or boundary_edge


def test_refinement_1d():
    m = refine_uniform(build_interval_mesh(0, 1, 2))
    assert m.num_elements == 4
    assert m.h == pytest.approx(0.25)


def test_refinement_2d_conforming_and_measure():
    m = build_rectangle_mesh((0, 2), (-1, 1), 1, 1)
    for level in range(4):
        assert m.element_measures.sum() == pytest.approx(4.0, rel=1e-12)
        _faces_conforming(m)
        m = refine_uniform(m)
    assert m.num_elements == 2 * 4 ** 4
    r = refine_uniform(build_rectangle_mesh((0, 1), (0, 1), 1, 1))
    assert r.num_elements == 8
    # boundary tags are geometric after refinement
    b = r.nodes[r.boundary_nodes]
    assert np.all(np.any((b == 0) | (b == 1), axis=1))
    assert len(r.boundary_nodes) == 8 and len(r.interior_nodes) == 1


# -- evaluation ----------------------------------------------------------------


def test_evaluate_hat_and_expression():
    m = build_interval_mesh(0, 1, 2)
    hat = ScalarField.nodal(m, [0.0, 1.0, 0.0])
    assert evaluate(hat, 0.25, m) == pytest.approx(0.5)
    assert evaluate(hat, 0.5, m) == 1.0
    assert evaluate("sin(pi*x)", 0.5, m) == pytest.approx(1.0)


def test_evaluate_outside_domain():
    m = build_interval_mesh(0, 1, 2)
    with pytest.raises(MeshError):
        evaluate("x", 1.1, m)
    assert evaluate("x", 1.0 + 1e-13, m) == pytest.approx(1.0)


@pytest.mark.parametrize("dim", [1, 2])
def test_affine_interpolation_is_exact(dim):
    rng = np.random.default_rng(3)
    if dim == 1:
        m = build_interval_mesh(-1, 2, 7)
        f = ScalarField(func=lambda p: 3.0 * p[:, 0] - 0.25)
    else:
        m = build_rectangle_mesh((0, 1), (0, 2), 5, 3)
        f = ScalarField(func=lambda p: 3.0 * p[:, 0] - 2.0 * p[:, 1] + 0.5)
    u = interpolate(f, m)
    lo = np.array([b[0] for b in m.bounds])
    hi = np.array([b[1] for b in m.bounds])
    pts = lo + (hi - lo) * rng.random((200, dim))
    np.testing.assert_allclose(u.at_points(pts), f.at_points(pts), rtol=1e-12, atol=1e-12)


# -- quadrature ----------------------------------------------------------------


@pytest.mark.parametrize("degree", range(0, 12))
def test_interval_rule_exactness(degree):
    rule = gauss_rule(1, degree)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    x = rule.points[:, 0]
    for k in range(degree + 1):
        assert np.dot(rule.weights, x ** k) == pytest.approx(1.0 / (k + 1), rel=1e-12)


@pytest.mark.parametrize("degree", range(0, 12))
def test_triangle_rule_exactness(degree):
    rule = gauss_rule(2, degree)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-14)
    x, y = rule.points.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert np.dot(rule.weights, x ** a * y ** b) == pytest.approx(exact, rel=1e-12)


def test_monomials_on_physical_elements():
    m = build_rectangle_mesh((0.2, 1.3), (-0.4, 0.9), 3, 2)
    rule = gauss_rule(2, 4)
    pts, wts = m.quadrature_points(rule)
    for a, b in [(0, 0), (1, 0), (2, 1), (0, 4), (3, 1)]:
        got = np.sum(wts * pts[..., 0] ** a * pts[..., 1] ** b)
        exact = (1.3 ** (a + 1) - 0.2 ** (a + 1)) / (a + 1) * (0.9 ** (b + 1) - (-0.4) ** (b + 1)) / (b + 1)
        assert got == pytest.approx(exact, rel=1e-12)
