"""Simplicial meshes of intervals and axis-aligned rectangles."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .quadrature import QuadratureRule, reference_basis, reference_gradients

_CLOSURE_TOL = 1e-12


class MeshError(ValueError):
    pass


class Mesh:
    """P1 mesh: ``nodes`` (N, dim), ``elements`` (E, dim + 1) node indices.

    ``bounds`` is the bounding box of the domain, ``((a, b),)`` in 1D and
    ``((x0, x1), (y0, y1))`` in 2D.  Instances are treated as immutable.
    """

    def __init__(self, nodes, elements, bounds):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        self.nodes = nodes
        self.elements = np.asarray(elements, dtype=np.int64)
        self.dim = nodes.shape[1]
        if self.dim not in (1, 2):
            raise MeshError(f"unsupported dimension {self.dim}")
        if self.elements.shape[1] != self.dim + 1:
            raise MeshError("element arity does not match dimension")
        self.bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        for arr in (self.nodes, self.elements):
            arr.setflags(write=False)
        if np.any(self.element_measures <= 0.0):
            raise MeshError("mesh contains elements with nonpositive measure")

    def __repr__(self):
        return f"Mesh(dim={self.dim}, nodes={self.num_nodes}, elements={self.num_elements})"

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def domain_measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(E, dim, dim) affine maps from the reference simplex."""
        v = self.nodes[self.elements]
        J = (v[:, 1:, :] - v[:, :1, :]).transpose(0, 2, 1)
        J.setflags(write=False)
        return J

    @cached_property
    def _dets(self) -> np.ndarray:
        return np.linalg.det(self.jacobians) if self.dim == 2 else self.jacobians[:, 0, 0].copy()

    @cached_property
    def element_measures(self) -> np.ndarray:
        ref = 1.0 if self.dim == 1 else 0.5
        m = self._dets * ref
        m.setflags(write=False)
        return m

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(E, dim + 1, dim) physical gradients of the element shape functions."""
        inv = np.linalg.inv(self.jacobians)
        g = np.einsum("kd,edj->ekj", reference_gradients(self.dim), inv)
        g.setflags(write=False)
        return g

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        scale = max(hi - lo for lo, hi in self.bounds)
        on = np.zeros(self.num_nodes, dtype=bool)
        for d, (lo, hi) in enumerate(self.bounds):
            on |= np.abs(self.nodes[:, d] - lo) <= _CLOSURE_TOL * scale
            on |= np.abs(self.nodes[:, d] - hi) <= _CLOSURE_TOL * scale
        idx = np.flatnonzero(on)
        idx.setflags(write=False)
        return idx

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        idx = np.flatnonzero(mask)
        idx.setflags(write=False)
        return idx

    @property
    def h(self) -> float:
        v = self.nodes[self.elements]
        edges = [np.linalg.norm(v[:, i] - v[:, j], axis=1)
                 for i in range(self.dim + 1) for j in range(i + 1, self.dim + 1)]
        return float(np.max(edges))

    def quadrature_points(self, rule: QuadratureRule):
        """Physical points (E, Q, dim) and weights (E, Q) for ``rule``."""
        pts = self.nodes[self.elements[:, 0]][:, None, :] + np.einsum(
            "edj,qj->eqd", self.jacobians, rule.points)
        wts = np.abs(self._dets)[:, None] * rule.weights[None, :]
        return pts, wts

    def contains(self, point) -> bool:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        scale = max(hi - lo for lo, hi in self.bounds)
        return p.shape == (self.dim,) and all(
            lo - _CLOSURE_TOL * scale <= p[d] <= hi + _CLOSURE_TOL * scale
            for d, (lo, hi) in enumerate(self.bounds))

    def reference_coordinates(self, points, element_ids) -> np.ndarray:
        """Map physical ``points`` (P, dim) inside ``element_ids`` to reference coordinates."""
        points = np.atleast_2d(points)
        origin = self.nodes[self.elements[element_ids, 0]]
        inv = np.linalg.inv(self.jacobians[element_ids])
        return np.einsum("pij,pj->pi", inv, points - origin)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Element index and barycentric coordinates for each point (brute force)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inv = np.linalg.inv(self.jacobians)
        origin = self.nodes[self.elements[:, 0]]
        ref = np.einsum("eij,pej->pei", inv, points[:, None, :] - origin[None, :, :])
        bary = np.concatenate([1.0 - ref.sum(axis=2, keepdims=True), ref], axis=2)
        worst = bary.min(axis=2)
        elem = np.argmax(worst, axis=1)
        if np.any(worst[np.arange(len(points)), elem] < -1e-9):
            raise MeshError("point outside the mesh")
        return elem, bary[np.arange(len(points)), elem]


def build_interval_mesh(a: float, b: float, m: int) -> Mesh:
    if not a < b:
        raise MeshError(f"need a < b, got a={a}, b={b}")
    if int(m) != m or m < 1:
        raise MeshError("element count must be a positive integer")
    m = int(m)
    nodes = np.linspace(a, b, m + 1)
    elements = np.column_stack([np.arange(m), np.arange(1, m + 1)])
    return Mesh(nodes, elements, ((a, b),))


def build_rectangle_mesh(x_range, y_range, mx: int, my: int) -> Mesh:
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x0 < x1 and y0 < y1):
        raise MeshError("degenerate rectangle")
    if mx < 1 or my < 1 or int(mx) != mx or int(my) != my:
        raise MeshError("cell counts must be positive integers")
    mx, my = int(mx), int(my)
    X, Y = np.meshgrid(np.linspace(x0, x1, mx + 1), np.linspace(y0, y1, my + 1))
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(mx), np.arange(my))
    p00 = (j * (mx + 1) + i).ravel()
    p10, p01 = p00 + 1, p00 + mx + 1
    p11 = p01 + 1
    lower = np.column_stack([p00, p10, p11])
    upper = np.column_stack([p00, p11, p01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(nodes, elements, ((x0, x1), (y0, y1)))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Bisect every interval, or split every triangle into four at edge midpoints."""
    if mesh.dim == 1:
        order = np.argsort(mesh.nodes[:, 0], kind="stable")
        x = mesh.nodes[order, 0]
        fine = np.empty(2 * len(x) - 1)
        fine[0::2] = x
        fine[1::2] = 0.5 * (x[:-1] + x[1:])
        m = len(fine) - 1
        return Mesh(fine, np.column_stack([np.arange(m), np.arange(1, m + 1)]), mesh.bounds)

    edges = np.concatenate([mesh.elements[:, [0, 1]], mesh.elements[:, [1, 2]],
                            mesh.elements[:, [2, 0]]])
    keys = np.sort(edges, axis=1)
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mids = 0.5 * (mesh.nodes[unique[:, 0]] + mesh.nodes[unique[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    E = mesh.num_elements
    m01 = mesh.num_nodes + inverse[:E]
    m12 = mesh.num_nodes + inverse[E:2 * E]
    m20 = mesh.num_nodes + inverse[2 * E:]
    a, b, c = mesh.elements.T
    children = np.stack([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    return Mesh(nodes, children, mesh.bounds)


def split_simplices(verts: np.ndarray) -> np.ndarray:
    """Uniformly split simplices given as vertex arrays (K, dim + 1, dim)."""
    if verts.shape[1] == 2:
        mid = 0.5 * (verts[:, 0] + verts[:, 1])
        return np.stack([np.stack([verts[:, 0], mid], 1), np.stack([mid, verts[:, 1]], 1)],
                        1).reshape(-1, 2, verts.shape[2])
    a, b, c = verts[:, 0], verts[:, 1], verts[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = [np.stack(t, 1) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
    return np.stack(kids, 1).reshape(-1, 3, verts.shape[2])


def simplex_points(verts: np.ndarray, rule: QuadratureRule):
    """Physical quadrature points (K, Q, dim) and weights (K, Q) on arbitrary simplices."""
    J = (verts[:, 1:, :] - verts[:, :1, :]).transpose(0, 2, 1)
    det = np.abs(np.linalg.det(J)) if verts.shape[2] == 2 else np.abs(J[:, 0, 0])
    pts = verts[:, :1, :] + np.einsum("kdj,qj->kqd", J, rule.points)
    return pts, det[:, None] * rule.weights[None, :]


def simplex_measures(verts: np.ndarray) -> np.ndarray:
    J = (verts[:, 1:, :] - verts[:, :1, :]).transpose(0, 2, 1)
    if verts.shape[2] == 1:
        return np.abs(J[:, 0, 0])
    return 0.5 * np.abs(np.linalg.det(J))


__all__ = [
    "Mesh", "MeshError", "build_interval_mesh", "build_rectangle_mesh", "refine_uniform",
    "split_simplices", "simplex_points", "simplex_measures", "reference_basis",
]
