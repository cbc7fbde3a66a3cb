"""Galerkin assembly of Q(u, v) = <grad u, n grad v>, the L2 pairing and the load <u, zeta>."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fields import WeightField, as_field, as_weight
from .mesh import Mesh
from .quadrature import reference_basis, resolve_rule
from .singular import DivergenceError, integrate_adapted, safe_eval


class EmptySystemError(ValueError):
    pass


@dataclass(frozen=True)
class AssembledSystem:
    """Dirichlet-reduced stiffness, mass and load on the interior DOFs."""

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    load: np.ndarray
    interior_dofs: np.ndarray  # reduced index -> mesh node
    mesh: Mesh
    weight: WeightField | None = None

    @property
    def num_dofs(self) -> int:
        return len(self.interior_dofs)

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """Re-insert zero boundary coefficients."""
        full = np.zeros(self.mesh.num_nodes)
        full[self.interior_dofs] = reduced
        return full

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full, dtype=float)[self.interior_dofs]


def _to_csr(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    k = mesh.dim + 1
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    N = mesh.num_nodes
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    A = ((A + A.T) * 0.5).tocsr()
    A.sort_indices()
    return A


def assemble_stiffness(mesh: Mesh, n, quad=None) -> sp.csr_matrix:
    """A_ij = sum_e int_e n grad(phi_i).grad(phi_j); the weight is sampled per quadrature point."""
    rule = resolve_rule(mesh.dim, quad)
    w = as_weight(n).at_quadrature(mesh, rule)  # raises AdmissibilityError on n < 0
    _, wts = mesh.quadrature_points(rule)
    mass_of_n = np.sum(wts * w, axis=1)
    G = mesh.basis_gradients
    local = mass_of_n[:, None, None] * np.einsum("eid,ejd->eij", G, G)
    return _to_csr(mesh, local)


def assemble_mass(mesh: Mesh, quad=None) -> sp.csr_matrix:
    rule = resolve_rule(mesh.dim, quad)
    if rule.degree < 2:
        rule = resolve_rule(mesh.dim, 2)
    phi = reference_basis(mesh.dim, rule.points)
    ref = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    scale = mesh.element_measures / rule.reference_measure
    return _to_csr(mesh, scale[:, None, None] * ref[None])


def assemble_load(mesh: Mesh, zeta, quad=None) -> np.ndarray:
    """b_i = int phi_i zeta.  Elements where zeta is singular use adapted quadrature."""
    zeta = as_field(zeta)
    rule = resolve_rule(mesh.dim, quad)
    k = mesh.dim + 1
    phi = reference_basis(mesh.dim, rule.points)
    pts, wts = mesh.quadrature_points(rule)
    E, Q, d = pts.shape

    def values(points, parents):
        return zeta.at_points(points, parents, mesh if zeta.is_nodal else None)

    with np.errstate(all="ignore"):
        vals = safe_eval(values, pts.reshape(-1, d), np.repeat(np.arange(E), Q), 1).reshape(E, Q)
        corners = safe_eval(values, mesh.nodes[mesh.elements].reshape(-1, d),
                            np.repeat(np.arange(E), k), 1).reshape(E, k)
    bad = ~np.all(np.isfinite(vals), axis=1) | ~np.all(np.isfinite(corners), axis=1)
    local = np.einsum("eq,eq,qi->ei", wts, np.where(np.isfinite(vals), vals, 0.0), phi)
    local[bad] = 0.0
    if np.any(bad):
        def f(points, parents):
            basis = reference_basis(mesh.dim, mesh.reference_coordinates(points, parents))
            with np.errstate(invalid="ignore"):
                return basis * values(points, parents)[:, None]

        res = integrate_adapted(mesh, f, ncomp=k, element_ids=np.flatnonzero(bad),
                                check_error=False)
        if res.diverged:
            raise DivergenceError("load is not integrable: the right-hand side diverges")
        local[bad] = res.per_element[bad]
    b = np.zeros(mesh.num_nodes)
    np.add.at(b, mesh.elements.ravel(), local.ravel())
    return b


def apply_dirichlet(A, M, b, mesh: Mesh, weight=None) -> AssembledSystem:
    """Eliminate boundary rows and columns (homogeneous Dirichlet data)."""
    interior = mesh.interior_nodes
    if len(interior) == 0:
        raise EmptySystemError("mesh has no interior degrees of freedom")
    Ar = A[interior][:, interior].tocsr()
    Mr = M[interior][:, interior].tocsr()
    Ar.sort_indices()
    Mr.sort_indices()
    br = np.asarray(b, dtype=float)[interior].copy()
    return AssembledSystem(Ar, Mr, br, interior, mesh, weight)


def assemble_system(mesh: Mesh, n, zeta=None, quad=None) -> AssembledSystem:
    n = as_weight(n)
    A = assemble_stiffness(mesh, n, quad)
    M = assemble_mass(mesh, quad)
    b = assemble_load(mesh, zeta, quad) if zeta is not None else np.zeros(mesh.num_nodes)
    return apply_dirichlet(A, M, b, mesh, n)


def export_coo(matrix, path) -> None:
    """Write ``row col value`` triples, one per line, 17 significant digits."""
    C = sp.coo_matrix(matrix)
    order = np.lexsort((C.col, C.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {v:.16e}\n")
