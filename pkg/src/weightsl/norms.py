"""Lebesgue and weighted Sobolev norms, and the density diagnostics built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, WeightField, as_field, as_weight, interpolate
from .mesh import Mesh
from .quadrature import QuadratureRule, resolve_rule
from .singular import ZERO_THRESHOLD, integrate_adapted

MAX_EXPONENT = 16.0


def _rule(mesh: Mesh, quad) -> QuadratureRule:
    return resolve_rule(mesh.dim, quad)


def _check_p(p: float):
    if not p >= 1.0:
        raise ValueError(f"exponent p must be >= 1, got {p}")
    if p > MAX_EXPONENT:
        raise ValueError(f"exponent p={p} exceeds the supported range [1, {MAX_EXPONENT:g}]")


def _integrate(mesh, rule, vals):
    _, wts = mesh.quadrature_points(rule)
    return float(np.sum(wts * vals))


def lp_norm(u, p: float, mesh: Mesh, quad=None) -> float:
    """(integral of |u|^p)^(1/p) by element-wise quadrature."""
    _check_p(p)
    rule = _rule(mesh, quad)
    vals = as_field(u).at_quadrature(mesh, rule)
    return _integrate(mesh, rule, np.abs(vals) ** p) ** (1.0 / p)


def weighted_lp_norm(u, p: float, n, mesh: Mesh, quad=None) -> float:
    _check_p(p)
    rule = _rule(mesh, quad)
    vals = as_field(u).at_quadrature(mesh, rule)
    w = as_weight(n).at_quadrature(mesh, rule)
    return _integrate(mesh, rule, np.abs(vals) ** p * w) ** (1.0 / p)


def _nodal(u) -> ScalarField:
    u = as_field(u)
    if not u.is_nodal:
        raise ValueError("gradient norms need a nodal field; interpolate the expression first")
    return u


def gradient_norms(u, p: float, mesh: Mesh, quad=None, n=None) -> float:
    """||grad u||_p, or ||grad u||_{p,n} when a weight is given.  P1 gradients only."""
    _check_p(p)
    g = _nodal(u).element_gradients(mesh)
    gp = np.linalg.norm(g, axis=1) ** p
    if n is None:
        return float(np.dot(gp, mesh.element_measures)) ** (1.0 / p)
    rule = _rule(mesh, quad)
    w = as_weight(n).at_quadrature(mesh, rule)
    _, wts = mesh.quadrature_points(rule)
    weight_mass = np.sum(wts * w, axis=1)
    return float(np.dot(gp, weight_mass)) ** (1.0 / p)


def weighted_sobolev_norm(u, p: float, n, mesh: Mesh, quad=None) -> float:
    """(||u||_p^p + ||grad u||_{p,n}^p)^(1/p); the weight touches only the gradient part."""
    u = _nodal(u)
    a = lp_norm(u, p, mesh, quad)
    b = gradient_norms(u, p, mesh, quad, n=n)
    return (a ** p + b ** p) ** (1.0 / p)


def sobolev_norm(u, p: float, mesh: Mesh, quad=None) -> float:
    u = _nodal(u)
    return (lp_norm(u, p, mesh, quad) ** p + gradient_norms(u, p, mesh, quad) ** p) ** (1.0 / p)


# -- singular diagnostics --------------------------------------------------


@dataclass(frozen=True)
class IntegrabilityReport:
    s: float
    value: float  # math.inf when divergent
    divergent: bool
    method: str  # "plain" or "singularity-adapted"
    estimated_error: float

    @property
    def finite(self) -> bool:
        return not self.divergent


def _weight_values(n: WeightField, mesh: Mesh, points, parents):
    return n.at_points(points, parents, mesh if n.is_nodal else None)


def check_inverse_integrability(n, s: float, mesh: Mesh) -> IntegrabilityReport:
    """Certify whether n^(-s) is integrable; divergence is reported, not raised."""
    if not s > 0:
        raise ValueError("exponent s must be positive")
    n = as_weight(n)

    def f(points, parents):
        v = _weight_values(n, mesh, points, parents)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(v < ZERO_THRESHOLD, np.inf, v ** (-s))

    res = integrate_adapted(mesh, f)
    method = "singularity-adapted" if res.adapted else "plain"
    if res.diverged:
        return IntegrabilityReport(s, math.inf, True, method, math.inf)
    return IntegrabilityReport(s, float(res.value[0]), False, method, res.error)


def l1_norm_adapted(n, mesh: Mesh) -> tuple[float, float]:
    """(||n||_1, error estimate); inf when n has a non-integrable singularity."""
    n = as_weight(n)

    def f(points, parents):
        return np.abs(n.raw_at_points(points, parents, mesh if n.is_nodal else None))

    res = integrate_adapted(mesh, f)
    return float(res.value[0]), res.error


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num / den with the vanishing-density policy: 0/0 -> 0, c/0 -> inf."""
    small = den < ZERO_THRESHOLD
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / np.where(small, 1.0, den)
    return np.where(small, np.where(num <= ZERO_THRESHOLD, 0.0, np.inf), out)


def force_integral(dj, n, mesh: Mesh, quad=None) -> float:
    """Integral of |d_t j|^2 / n; ``math.inf`` when divergence is detected."""
    comps = [as_field(c) for c in (dj if isinstance(dj, (list, tuple)) else [dj])]
    n = as_weight(n)

    def f(points, parents):
        num = sum(c.at_points(points, parents, mesh if c.is_nodal else None) ** 2 for c in comps)
        return _ratio(np.asarray(num, dtype=float), _weight_values(n, mesh, points, parents))

    res = integrate_adapted(mesh, f)
    return math.inf if res.diverged else float(res.value[0])


def weizsacker_term(n, mesh: Mesh, quad=None) -> tuple[float, float]:
    """Both sides of  int |grad sqrt(n)|^2 = 1/4 int |grad n|^2 / n.

    The left side differentiates the nodal interpolant of sqrt(n); the right
    side uses pointwise gradients of n with singularity-adapted quadrature.
    The two agree up to interpolation error, which shrinks under refinement.
    """
    n = as_weight(n)
    if n.is_nodal:
        root = ScalarField.nodal(mesh, np.sqrt(n.values))
    else:
        root = interpolate(ScalarField(func=lambda p: np.sqrt(n.at_points(p))), mesh)
    lhs = gradient_norms(root, 2, mesh) ** 2

    def f(points, parents):
        grad = n.gradient_at(points, parents, mesh if n.is_nodal else None)
        return 0.25 * _ratio(np.sum(grad ** 2, axis=1), _weight_values(n, mesh, points, parents))

    res = integrate_adapted(mesh, f)
    rhs = math.inf if res.diverged else float(res.value[0])
    return float(lhs), rhs
