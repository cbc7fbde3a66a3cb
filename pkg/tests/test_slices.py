import math

import numpy as np
import pytest

from weightsl.fields import ScalarField, interpolate
from weightsl.mesh import MeshError, build_interval_mesh
from weightsl.norms import lp_norm
from weightsl.slices import (CONSISTENCY_TOL, SeriesOptions, SliceProblem, certify_density,
                             run_time_series, second_time_difference)

MESH = build_interval_mesh(0, 1, 32)
SCALED_RHS = "(1+t)*pi^2*sin(pi*x)"


def test_certify_examples():
    ok = certify_density("sin(pi*x)^2+0.1", MESH)
    assert ok.admissible and ok.failures() == []
    deg = certify_density("x^0.4", MESH)
    assert deg.admissible and deg.inverse.value == pytest.approx(5.0, rel=1e-2)
    lin = certify_density("x", MESH)
    assert lin.failures() == ["n^-2 in L1"]
    assert lin.nonnegative and lin.integrable
    neg = certify_density("x-0.5", MESH)
    assert not neg.nonnegative and not neg.admissible


def test_certify_non_integrable_density():
    cert = certify_density("x^(-1.5)", MESH)
    assert not cert.integrable
    assert "n in L1" in " ".join(cert.failures())


def test_second_difference_examples():
    g = "1+x^2"
    zero = second_time_difference(g, g, g, 0.1, MESH)
    assert np.all(zero.values == 0)
    t, dt = 0.7, 0.05
    quad = [f"(1+{s}^2)*({g})" for s in (t - dt, t, t + dt)]
    d2 = second_time_difference(*quad, dt, MESH)
    np.testing.assert_allclose(d2.values, 2 * interpolate(g, MESH).values, rtol=1e-9)
    errs = []
    for dt in (0.1, 0.05):
        sl = [f"(1+sin({s}))*({g})" for s in (t - dt, t, t + dt)]
        d2 = second_time_difference(*sl, dt, MESH)
        exact = -math.sin(t) * interpolate(g, MESH).values
        errs.append(np.max(np.abs(d2.values - exact)))
    assert errs[1] < errs[0] / 3.5
    other = ScalarField.nodal(build_interval_mesh(0, 1, 8), np.ones(9))
    with pytest.raises(MeshError):
        second_time_difference(ScalarField.nodal(MESH, np.ones(33)), other, other, 0.1, MESH)


def scaled_series(count=10, bad=None):
    slices = []
    for i in range(count):
        t = 0.1 * i
        weight = "x" if i == bad else "1+t"
        slices.append(SliceProblem(t, weight, SCALED_RHS))
    return slices


def test_scaled_series_is_time_independent():
    reports = run_time_series(scaled_series(), MESH)
    ref = reports[0].solution
    for r in reports:
        assert r.admissible and r.solve_residual < 1e-10
        diff = ScalarField.nodal(MESH, r.solution.values - ref.values)
        assert lp_norm(diff, 2, MESH) < 1e-10


def test_inadmissible_slice_is_skipped_only():
    reports = run_time_series(scaled_series(bad=4), MESH)
    missing = [i for i, r in enumerate(reports) if r.solution is None]
    assert missing == [4]
    assert "n^-2" in reports[4].error


def test_identical_slices_are_bitwise_equal():
    slices = [SliceProblem(0.0, "1+x", "exp(x)") for _ in range(3)]
    reports = run_time_series(slices, MESH)
    for r in reports[1:]:
        assert np.array_equal(r.solution.values, reports[0].solution.values)
        assert r.lambda1 == reports[0].lambda1


def test_permuting_slices_permutes_reports():
    slices = [SliceProblem(0.2 * i, f"1+{i}*x", "sin(3*x)+t", q="1") for i in range(5)]
    perm = [3, 0, 4, 1, 2]
    base = run_time_series(slices, MESH)
    shuffled = run_time_series([slices[i] for i in perm], MESH)
    for k, i in enumerate(perm):
        assert np.array_equal(base[i].solution.values, shuffled[k].solution.values)
        assert base[i].consistency_residual == shuffled[k].consistency_residual


def test_threads_match_serial():
    serial = run_time_series(scaled_series(6), MESH)
    threaded = run_time_series(scaled_series(6), MESH, SeriesOptions(threads=3))
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.solution.values, b.solution.values)


def test_alpha_scaling_leaves_solution_unchanged():
    plain = run_time_series([SliceProblem(0.0, "1+x^2", "cos(x)")], MESH)[0].solution
    for alpha in ("3", "0.25", "exp(2)"):
        scaled = run_time_series([SliceProblem(0.0, f"{alpha}*(1+x^2)", f"{alpha}*cos(x)")], MESH)
        diff = ScalarField.nodal(MESH, scaled[0].solution.values - plain.values)
        assert lp_norm(diff, 2, MESH) < 1e-10


def test_consistency_check():
    # n_t = (1 + t^2) g, so d_t^2 n = 2 g exactly; q := zeta + 2 g by construction
    g, zeta = "(1+x)", "pi^2*sin(pi*x)"
    good, bad = [], []
    for i in range(5):
        t = 0.1 * i
        n = f"(1+t^2)*{g}"
        good.append(SliceProblem(t, n, zeta, q=f"{zeta}+2*{g}"))
        bad.append(SliceProblem(t, n, zeta, q=f"{zeta}+2*{g}+0.01*x"))
    for r in run_time_series(good, MESH)[1:-1]:
        assert r.consistent and r.consistency_residual < CONSISTENCY_TOL
    for r in run_time_series(bad, MESH)[1:-1]:
        assert not r.consistent and r.consistency_residual > 10 * CONSISTENCY_TOL
    ends = run_time_series(good, MESH)
    assert ends[0].consistency_residual is None and ends[-1].consistency_residual is None


def test_diagnostics_in_reports():
    slices = [SliceProblem(0.0, "sin(pi*x)^2+0.1", "1", dj="sqrt(sin(pi*x)^2+0.1)")]
    r = run_time_series(slices, MESH)[0]
    assert r.force_integral == pytest.approx(1.0, rel=1e-2)
    assert r.hardy == pytest.approx(1 / math.sqrt(r.lambda1))
    lhs, rhs = r.weizsacker
    assert lhs == pytest.approx(rhs, rel=5e-2)


def test_empty_series():
    with pytest.raises(ValueError):
        run_time_series([], MESH)
