"""Manufactured-solution convergence studies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import assemble_system
from .fields import ScalarField, as_field, as_weight
from .mesh import Mesh, refine_uniform
from .quadrature import resolve_rule
from .solvers import solve_weak

ERROR_DEGREE = 8


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    elements: int
    h: float
    l2_error: float
    h1n_error: float  # error in the weighted Sobolev norm ||.||_{1,2,n}
    l2_order: float | None
    h1n_order: float | None


def solution_errors(v: ScalarField, exact, n, mesh: Mesh, degree: int = ERROR_DEGREE):
    """(L2 error, weighted H1 error) of a nodal solution against a closed-form one."""
    exact = as_field(exact)
    n = as_weight(n)
    rule = resolve_rule(mesh.dim, degree)
    pts, wts = mesh.quadrature_points(rule)
    E, Q, d = pts.shape
    flat = pts.reshape(-1, d)
    diff = v.at_quadrature(mesh, rule) - exact.at_points(flat).reshape(E, Q)
    l2sq = float(np.sum(wts * diff ** 2))
    grad_h = v.element_gradients(mesh)[:, None, :]
    grad_e = exact.gradient_at(flat).reshape(E, Q, d)
    w = n.at_quadrature(mesh, rule)
    gsq = float(np.sum(wts * w * np.sum((grad_h - grad_e) ** 2, axis=2)))
    return math.sqrt(l2sq), math.sqrt(l2sq + gsq)


def convergence_study(mesh: Mesh, n, zeta, exact, levels: int, quad=None) -> list[ConvergenceRow]:
    """Solve on ``levels`` successive uniform refinements and tabulate errors and orders."""
    if exact is None:
        raise ValueError("a convergence study needs the exact solution")
    rows = []
    prev = None
    for level in range(levels):
        if level:
            mesh = refine_uniform(mesh)
        v = solve_weak(assemble_system(mesh, n, zeta, quad))
        l2, h1 = solution_errors(v, exact, n, mesh)
        l2o = h1o = None
        if prev is not None:
            l2o = math.log2(prev[0] / l2) if l2 > 0 else math.inf
            h1o = math.log2(prev[1] / h1) if h1 > 0 else math.inf
        rows.append(ConvergenceRow(level, mesh.num_elements, mesh.h, l2, h1, l2o, h1o))
        prev = (l2, h1)
    return rows
