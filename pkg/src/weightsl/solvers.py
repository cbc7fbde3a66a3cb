"""Weak solutions, the generalized eigen-sequence, and the inequality constants."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize

from .assembly import AssembledSystem, assemble_system
from .fields import ScalarField, as_field, as_weight
from .mesh import Mesh
from .norms import check_inverse_integrability, gradient_norms, IntegrabilityReport
from .quadrature import reference_basis, resolve_rule

log = logging.getLogger(__name__)

DENSE_LIMIT = 500
CONDITION_LIMIT = 1e12


class NonCoerciveError(RuntimeError):
    """The reduced stiffness matrix is not positive definite."""


class EigenConvergenceError(RuntimeError):
    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class EstimationError(RuntimeError):
    pass


class ConditioningWarning(UserWarning):
    pass


# -- linear solves ---------------------------------------------------------


def _factorize(A: sp.spmatrix):
    """Symmetric-mode sparse LU with diagonal pivots; positive pivots certify A > 0."""
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:  # exactly singular
        raise NonCoerciveError(
            f"stiffness factorization failed ({exc}); check the n^-2 integrability certificate"
        ) from exc
    pivots = lu.U.diagonal()
    if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
        raise NonCoerciveError(
            "reduced stiffness matrix is not positive definite; "
            "the density likely fails the n^-2 integrability certificate")
    return lu


def _smallest_eigenvalue_estimate(lu, M, iterations=30) -> float:
    x = np.ones(M.shape[0])
    lam = 0.0
    for _ in range(iterations):
        y = lu.solve(M @ x)
        lam = float(x @ (M @ x)) / float(x @ (M @ y))
        x = y / math.sqrt(float(y @ (M @ y)))
    return lam


def solve_weak(system: AssembledSystem) -> ScalarField:
    """Unique v with A v = b (zero boundary values re-inserted)."""
    lu = _factorize(system.stiffness)
    v = lu.solve(system.load)
    lam_max = float(np.max(system.stiffness.diagonal() / system.mass.diagonal()))
    lam_min = _smallest_eigenvalue_estimate(lu, system.mass)
    if lam_min <= 0 or lam_max / lam_min > CONDITION_LIMIT:
        warnings.warn(f"ill-conditioned system: lambda_max/lambda_1 ~ {lam_max / lam_min:.3e}",
                      ConditioningWarning, stacklevel=2)
    return ScalarField.nodal(system.mesh, system.expand(v), zero_boundary=True)


def solve_weak_cg(system: AssembledSystem, x0=None, rtol: float = 1e-12) -> ScalarField:
    """Conjugate-gradient route to the same solution; used to cross-check uniqueness."""
    N = system.num_dofs
    v, info = spla.cg(system.stiffness, system.load, x0=x0, rtol=rtol, atol=0.0, maxiter=10 * N)
    if info != 0:
        raise NonCoerciveError(f"conjugate gradients did not converge (info={info})")
    return ScalarField.nodal(system.mesh, system.expand(v), zero_boundary=True)


def _reduced(system: AssembledSystem, v) -> np.ndarray:
    if isinstance(v, ScalarField):
        return system.restrict(v.values)
    v = np.asarray(v, dtype=float)
    return system.restrict(v) if v.shape == (system.mesh.num_nodes,) else v


def galerkin_residual(system: AssembledSystem, v) -> float:
    """||A v - b|| / ||b||, or the absolute residual when b = 0."""
    x = _reduced(system, v)
    r = float(np.linalg.norm(system.stiffness @ x - system.load))
    nb = float(np.linalg.norm(system.load))
    return r / nb if nb > 0 else r


def energy(system: AssembledSystem, v) -> float:
    """J(v) = 1/2 v'Av - b'v."""
    x = _reduced(system, v)
    if x.shape != system.load.shape:
        raise ValueError("vector does not match the system size")
    return 0.5 * float(x @ (system.stiffness @ x)) - float(system.load @ x)


def m_norm(system: AssembledSystem, x) -> float:
    x = _reduced(system, x)
    return math.sqrt(max(float(x @ (system.mass @ x)), 0.0))


def uniqueness_gap(system: AssembledSystem, starts: int = 3, seed: int = 0) -> float:
    """Largest relative M-norm gap between the direct solve and CG from random guesses."""
    direct = solve_weak(system)
    ref = m_norm(system, direct) or 1.0
    rng = np.random.default_rng(seed)
    gap = 0.0
    for _ in range(starts):
        it = solve_weak_cg(system, x0=rng.standard_normal(system.num_dofs))
        gap = max(gap, m_norm(system, direct.values - it.values) / ref)
    return gap


# -- eigenpairs ------------------------------------------------------------


@dataclass
class EigenSequence:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # (ndofs, k), M-orthonormal columns
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.values)

    def pairs(self):
        return list(zip(self.values, self.vectors.T))

    def field(self, system: AssembledSystem, m: int) -> ScalarField:
        """The m-th eigenfunction (1-based) as a nodal field."""
        return ScalarField.nodal(system.mesh, system.expand(self.vectors[:, m - 1]), zero_boundary=True)


def _normalize_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def solve_eigenpairs(system: AssembledSystem, k: int) -> EigenSequence:
    """The k smallest pairs of A e = lambda M e, ascending and M-orthonormal."""
    A, M = system.stiffness, system.mass
    N = system.num_dofs
    if not 1 <= k <= N:
        raise ValueError(f"k must lie in [1, {N}], got {k}")
    if N <= DENSE_LIMIT or k >= N - 1:
        vals, vecs = la.eigh(A.toarray(), M.toarray(), subset_by_index=[0, k - 1])
    else:
        lu = _factorize(A)
        op = spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
        try:
            vals, vecs = spla.eigsh(A, k=k, M=M, sigma=0.0, which="LM", OPinv=op,
                                    v0=np.ones(N), tol=1e-13, maxiter=100 * N)
        except spla.ArpackNoConvergence as exc:
            raise EigenConvergenceError(f"eigen-iteration did not converge: {exc}") from exc
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        # full M-reorthonormalization
        G = vecs.T @ (M @ vecs)
        L = np.linalg.cholesky(0.5 * (G + G.T))
        vecs = np.linalg.solve(L, vecs.T).T
    vecs = _normalize_signs(vecs)
    AV, MV = A @ vecs, M @ vecs
    res = np.linalg.norm(AV - MV * vals, axis=0) / np.maximum(np.linalg.norm(AV, axis=0), 1e-300)
    if np.any(res > 1e-8):
        raise EigenConvergenceError("eigen-residuals exceed 1e-8", residuals=res)
    if vals[0] <= 0:
        raise NonCoerciveError(f"smallest eigenvalue {vals[0]:.3e} is not positive")
    return EigenSequence(vals, vecs, res)


def largest_eigenvalue(system: AssembledSystem) -> float:
    A, M = system.stiffness, system.mass
    N = system.num_dofs
    if N <= DENSE_LIMIT:
        return float(la.eigh(A.toarray(), M.toarray(), eigvals_only=True,
                             subset_by_index=[N - 1, N - 1])[0])
    vals = spla.eigsh(A, k=1, M=M, which="LA", v0=np.ones(N), tol=1e-10,
                      return_eigenvectors=False)
    return float(vals[0])


# -- constants -------------------------------------------------------------


def estimate_hardy_constant(system: AssembledSystem) -> float:
    """Sharp discrete c in ||u||_2 <= c ||grad u||_{2,n}: 1/sqrt(lambda_1)."""
    return 1.0 / math.sqrt(solve_eigenpairs(system, 1).values[0])


def estimate_coercivity_constant(system: AssembledSystem) -> float:
    """Sharp discrete c in Q(u,u) >= c ||u||_{1,2,n}^2, namely lambda_1 / (1 + lambda_1)."""
    lam = solve_eigenpairs(system, 1).values[0]
    return lam / (1.0 + lam)


def estimate_continuity_constant(system: AssembledSystem) -> float:
    """Sharp discrete C in |Q(u,v)| <= C ||u||_{1,2,n} ||v||_{1,2,n}; always below 1."""
    lam = largest_eigenvalue(system)
    return lam / (1.0 + lam)


@dataclass(frozen=True)
class PoincareEstimate:
    q: float
    value: float
    heuristic: bool  # True: best ratio found by ascent, a lower bound on the sharp constant


def _ratio_objective(mesh: Mesh, q: float):
    rule = resolve_rule(mesh.dim, 8)
    _, wts = mesh.quadrature_points(rule)
    phi = reference_basis(mesh.dim, rule.points)  # (Q, k)
    interior = mesh.interior_nodes
    G = mesh.basis_gradients
    meas = mesh.element_measures
    elems = mesh.elements

    def objective(c):
        u = np.zeros(mesh.num_nodes)
        u[interior] = c
        ue = u[elems]  # (E, k)
        uq = ue @ phi.T  # (E, Q)
        a = float(np.sum(wts * np.abs(uq) ** q))
        g = np.einsum("ekd,ek->ed", G, ue)
        gn = np.linalg.norm(g, axis=1)
        b = float(np.dot(meas, gn ** q))
        if a <= 0 or b <= 0:
            return np.inf, np.zeros_like(c)
        da_q = q * wts * np.abs(uq) ** (q - 1) * np.sign(uq)  # (E, Q)
        da = np.zeros(mesh.num_nodes)
        np.add.at(da, elems, da_q @ phi)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(gn > 0, q * meas * gn ** (q - 2), 0.0)
        db = np.zeros(mesh.num_nodes)
        np.add.at(db, elems, np.einsum("e,ed,ekd->ek", scale, g, G))
        # minimize log ||grad u||_q - log ||u||_q
        val = (math.log(b) - math.log(a)) / q
        grad = (db / b - da / a) / q
        return val, grad[interior]

    return objective


def estimate_poincare_constant(mesh: Mesh, q: float, starts: int = 20, seed: int = 0,
                               details: bool = False):
    """Constant in ||u||_q <= c ||grad u||_q on the zero-boundary P1 space.

    q = 2 is sharp (inverse root of the first unweighted eigenvalue).  Other
    exponents return the best ratio found by quasi-Newton ascent from
    ``starts`` random initial fields, which bounds the sharp constant from below.
    """
    if q == 2:
        system = assemble_system(mesh, 1.0)
        est = PoincareEstimate(2.0, estimate_hardy_constant(system), False)
        return est if details else est.value
    if not 1.0 <= q <= 16.0:
        raise ValueError("q must lie in [1, 16]")
    objective = _ratio_objective(mesh, q)
    rng = np.random.default_rng(seed)
    best = -np.inf
    for _ in range(starts):
        x0 = rng.standard_normal(len(mesh.interior_nodes))
        res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        if np.isfinite(res.fun):
            best = max(best, math.exp(-res.fun))
    if not np.isfinite(best):
        raise EstimationError("every ascent start degenerated")
    est = PoincareEstimate(float(q), best, True)
    return est if details else est.value


def poincare_ratio(u, mesh: Mesh, q: float) -> float:
    """||u||_q / ||grad u||_q for a zero-boundary nodal field."""
    u = as_field(u)
    c = u.values[mesh.interior_nodes]
    val, _ = _ratio_objective(mesh, q)(c)
    return math.exp(-val)


@dataclass(frozen=True)
class HolderCheck:
    applicable: bool
    passed: bool
    slack: float
    lhs: float  # ||grad u||_{4/3}
    rhs: float  # ||n^-2||_1^(1/4) ||grad u||_{2,n}


def verify_holder_chain(u, n, mesh: Mesh, quad=None,
                        inverse: IntegrabilityReport | None = None) -> HolderCheck:
    """Check ||grad u||_{4/3} <= ||n^-2||_1^(1/4) ||grad u||_{2,n}  (p = 2, q = 4/3, s = 2)."""
    n = as_weight(n)
    if inverse is None:
        inverse = check_inverse_integrability(n, 2.0, mesh)
    lhs = gradient_norms(u, 4.0 / 3.0, mesh)
    if inverse.divergent:
        return HolderCheck(False, False, math.nan, lhs, math.inf)
    rhs = inverse.value ** 0.25 * gradient_norms(u, 2.0, mesh, quad, n=n)
    slack = rhs - lhs
    return HolderCheck(True, slack >= -1e-12 * max(rhs, 1e-300), slack, lhs, rhs)


@dataclass(frozen=True)
class ConstantsReport:
    poincare: dict  # q -> PoincareEstimate
    hardy: float
    coercivity: float
    continuity: float
    holder_embedding: float  # ||n^-2||_1^(1/4); inf if not integrable
    lambda1: float


def constants_report(mesh: Mesh, n, quad=None, q_values=(2.0, 4.0 / 3.0), seed: int = 0) -> ConstantsReport:
    n = as_weight(n)
    system = assemble_system(mesh, n, quad=quad)
    lam1 = solve_eigenpairs(system, 1).values[0]
    inv = check_inverse_integrability(n, 2.0, mesh)
    poincare = {float(q): estimate_poincare_constant(mesh, q, seed=seed, details=True)
                for q in q_values}
    return ConstantsReport(
        poincare=poincare,
        hardy=1.0 / math.sqrt(lam1),
        coercivity=lam1 / (1.0 + lam1),
        continuity=estimate_continuity_constant(system),
        holder_embedding=math.inf if inv.divergent else inv.value ** 0.25,
        lambda1=float(lam1),
    )
