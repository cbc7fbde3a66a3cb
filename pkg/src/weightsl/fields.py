"""Scalar and weight fields, either closed-form or nodal (P1 interpolants)."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .expr import Expression, parse_expression
from .mesh import Mesh, MeshError
from .quadrature import QuadratureRule, reference_basis


class AdmissibilityError(ValueError):
    """The density violates n >= 0 (or is undefined) somewhere it was evaluated."""


class ScalarField:
    """A function on the domain.

    Exactly one of ``func`` (closed form, called with a ``(P, dim)`` array)
    or ``values`` (nodal coefficients on ``mesh``) is set.
    """

    def __init__(self, func: Callable | None = None, values=None, mesh: Mesh | None = None,
                 grad: Callable | None = None, zero_boundary: bool = False, label: str = ""):
        if (func is None) == (values is None):
            raise ValueError("give exactly one of func or values")
        self.func = func
        self.grad = grad
        self.mesh = mesh
        self.label = label
        self.values = None
        if values is not None:
            if mesh is None:
                raise ValueError("nodal fields need their mesh")
            vals = np.array(values, dtype=float)
            if vals.shape != (mesh.num_nodes,):
                raise MeshError(f"expected {mesh.num_nodes} nodal values, got {vals.shape}")
            if zero_boundary and np.any(vals[mesh.boundary_nodes] != 0.0):
                raise ValueError("zero_boundary field has nonzero boundary coefficients")
            vals.setflags(write=False)
            self.values = vals
        self.zero_boundary = zero_boundary

    def __repr__(self):
        kind = "nodal" if self.is_nodal else "expression"
        return f"{type(self).__name__}({kind}{', ' + self.label if self.label else ''})"

    @classmethod
    def from_expression(cls, source: str | Expression, t: float = 0.0, **kw):
        e = parse_expression(source) if isinstance(source, str) else source
        return cls(func=e.bind(t), grad=lambda p: e.gradient(p, t), label=e.source, **kw)

    @classmethod
    def from_function(cls, func: Callable, grad: Callable | None = None, **kw):
        return cls(func=func, grad=grad, **kw)

    @classmethod
    def constant(cls, c: float, **kw):
        c = float(c)
        return cls(func=lambda p: np.full(np.atleast_2d(p).shape[0], c),
                   grad=lambda p: np.zeros_like(np.atleast_2d(p), dtype=float), label=repr(c), **kw)

    @classmethod
    def nodal(cls, mesh: Mesh, values, zero_boundary: bool = False, **kw):
        return cls(values=values, mesh=mesh, zero_boundary=zero_boundary, **kw)

    @property
    def is_nodal(self) -> bool:
        return self.values is not None

    def _check_mesh(self, mesh: Mesh | None) -> Mesh:
        if mesh is None:
            return self.mesh
        if self.mesh is not mesh and (self.mesh.nodes.shape != mesh.nodes.shape
                                      or not np.array_equal(self.mesh.nodes, mesh.nodes)):
            raise MeshError("nodal field belongs to a different mesh")
        return mesh

    def at_points(self, points, element_ids=None, mesh: Mesh | None = None) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.is_nodal:
            return np.asarray(self.func(points), dtype=float).reshape(points.shape[0])
        mesh = self._check_mesh(mesh)
        if element_ids is None:
            element_ids, bary = mesh.locate(points)
        else:
            ref = mesh.reference_coordinates(points, element_ids)
            bary = reference_basis(mesh.dim, ref)
        return np.einsum("pk,pk->p", bary, self.values[mesh.elements[element_ids]])

    def gradient_at(self, points, element_ids=None, mesh: Mesh | None = None) -> np.ndarray:
        """Gradient ``(P, dim)``; nodal fields give their element-wise constant P1 gradient."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_nodal:
            mesh = self._check_mesh(mesh)
            if element_ids is None:
                element_ids, _ = mesh.locate(points)
            return self.element_gradients(mesh)[element_ids]
        if self.grad is not None:
            return np.asarray(self.grad(points), dtype=float).reshape(points.shape)
        step = 1e-6 * max(1.0, float(np.max(np.abs(points))))
        out = np.empty_like(points)
        for d in range(points.shape[1]):
            e = np.zeros(points.shape[1])
            e[d] = step
            out[:, d] = (self.func(points + e) - self.func(points - e)) / (2 * step)
        return out

    def element_gradients(self, mesh: Mesh | None = None) -> np.ndarray:
        if not self.is_nodal:
            raise ValueError("expression-form field: project onto nodal form first")
        mesh = self._check_mesh(mesh)
        return np.einsum("ekd,ek->ed", mesh.basis_gradients, self.values[mesh.elements])

    def at_quadrature(self, mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
        """Values (E, Q) at the physical quadrature points of ``rule``."""
        if self.is_nodal:
            mesh = self._check_mesh(mesh)
            return self.values[mesh.elements] @ reference_basis(mesh.dim, rule.points).T
        pts, _ = mesh.quadrature_points(rule)
        E, Q, d = pts.shape
        return self.at_points(pts.reshape(-1, d)).reshape(E, Q)

    def scaled(self, alpha: float):
        alpha = float(alpha)
        cls = type(self)
        if self.is_nodal:
            return cls(values=alpha * self.values, mesh=self.mesh, zero_boundary=self.zero_boundary)
        f, g = self.func, self.grad
        return cls(func=lambda p: alpha * f(p), grad=(lambda p: alpha * g(p)) if g else None)


class WeightField(ScalarField):
    """The density n; every evaluation checks n >= 0."""

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.admissibility = None
        if self.is_nodal:
            _check_nonnegative(self.values)

    def at_points(self, points, element_ids=None, mesh=None):
        return _check_nonnegative(super().at_points(points, element_ids, mesh), points)

    def at_quadrature(self, mesh, rule):
        vals = super().at_quadrature(mesh, rule)
        _check_nonnegative(vals)
        return vals

    def raw_at_points(self, points, element_ids=None, mesh=None):
        return super().at_points(points, element_ids, mesh)


def _check_nonnegative(vals: np.ndarray, points=None) -> np.ndarray:
    bad = (vals < 0) | np.isnan(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad.reshape(-1))[0])
        where = f" at {np.atleast_2d(points)[i].tolist()}" if points is not None else ""
        raise AdmissibilityError(f"density is negative or undefined ({vals.reshape(-1)[i]!r}){where}")
    return vals


def as_weight(field) -> WeightField:
    if isinstance(field, WeightField):
        return field
    if isinstance(field, ScalarField):
        if field.is_nodal:
            return WeightField(values=field.values, mesh=field.mesh, label=field.label)
        return WeightField(func=field.func, grad=field.grad, label=field.label)
    if isinstance(field, (int, float)):
        return WeightField.constant(field)
    if isinstance(field, (str, Expression)):
        return WeightField.from_expression(field)
    raise TypeError(f"cannot use {field!r} as a weight")


def as_field(field) -> ScalarField:
    if isinstance(field, ScalarField):
        return field
    if isinstance(field, (int, float)):
        return ScalarField.constant(field)
    if isinstance(field, (str, Expression)):
        return ScalarField.from_expression(field)
    if callable(field):
        return ScalarField.from_function(field)
    raise TypeError(f"cannot use {field!r} as a field")


def interpolate(field, mesh: Mesh, zero_boundary: bool = False) -> ScalarField:
    """Nodal P1 interpolant of ``field``; ``zero_boundary`` zeroes the boundary coefficients."""
    field = as_field(field)
    if field.is_nodal:
        field._check_mesh(mesh)
        vals = field.values.copy()
    else:
        vals = np.asarray(field.func(mesh.nodes), dtype=float).reshape(mesh.num_nodes).copy()
    if zero_boundary:
        vals[mesh.boundary_nodes] = 0.0
    return type(field)(values=vals, mesh=mesh, zero_boundary=zero_boundary, label=field.label)


def evaluate(field, point, mesh: Mesh) -> float:
    if not mesh.contains(point):
        raise MeshError(f"point {point!r} lies outside the domain")
    p = np.atleast_1d(np.asarray(point, dtype=float))[None, :]
    return float(as_field(field).at_points(p, mesh=mesh)[0])
