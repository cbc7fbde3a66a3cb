"""Time-sliced driver: per time t, certify the density, solve, and diagnose."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_system
from .expr import Expression
from .fields import AdmissibilityError, ScalarField, WeightField, as_field, as_weight, interpolate
from .mesh import Mesh, MeshError
from .norms import IntegrabilityReport, check_inverse_integrability, force_integral, \
    l1_norm_adapted, lp_norm, weizsacker_term
from .quadrature import resolve_rule
from .solvers import NonCoerciveError, galerkin_residual, solve_eigenpairs, solve_weak

log = logging.getLogger(__name__)

CONSISTENCY_TOL = 1e-8


@dataclass(frozen=True)
class Admissibility:
    nonnegative: bool
    l1: float | None  # ||n||_1, inf if divergent, None if not evaluated
    inverse: IntegrabilityReport | None  # n^-2 certificate
    detail: str = ""

    @property
    def integrable(self) -> bool:
        return self.l1 is not None and math.isfinite(self.l1)

    @property
    def inverse_square_integrable(self) -> bool:
        return self.inverse is not None and self.inverse.finite

    @property
    def admissible(self) -> bool:
        return self.nonnegative and self.integrable and self.inverse_square_integrable

    def failures(self) -> list[str]:
        out = []
        if not self.nonnegative:
            out.append("n >= 0")
        if not self.integrable:
            out.append("n in L1")
        if not self.inverse_square_integrable:
            out.append("n^-2 in L1")
        return out


def certify_density(n, mesh: Mesh, quad=None) -> Admissibility:
    """Evaluate n >= 0 (sampled), n in L1 and n^-2 in L1; failures are flags, never raised."""
    n = as_weight(n)
    rule = resolve_rule(mesh.dim, quad)
    try:
        n.at_quadrature(mesh, rule)
        if not n.is_nodal:
            _sample_nodes(n, mesh)
    except AdmissibilityError as exc:
        return Admissibility(False, None, None, str(exc))
    l1, _ = l1_norm_adapted(n, mesh)
    inverse = check_inverse_integrability(n, 2.0, mesh)
    result = Admissibility(True, l1, inverse)
    n.admissibility = (l1, inverse.value if inverse.finite else None)
    return result


def _sample_nodes(n: WeightField, mesh: Mesh):
    from .expr import ExpressionError

    try:
        return n.at_points(mesh.nodes)
    except ExpressionError:
        # singular at a node (e.g. a pole); node sampling is not decisive there
        return None


def second_time_difference(n_prev, n_curr, n_next, dt: float, mesh: Mesh | None = None) -> ScalarField:
    """Nodal central difference (n_prev - 2 n_curr + n_next) / dt^2."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    fields = [as_field(f) for f in (n_prev, n_curr, n_next)]
    meshes = [f.mesh for f in fields if f.is_nodal]
    if mesh is None:
        if not meshes:
            raise ValueError("expression-form slices need a mesh")
        mesh = meshes[0]
    vals = []
    for f in fields:
        if f.is_nodal:
            try:
                f._check_mesh(mesh)
            except MeshError as exc:
                raise MeshError("slices live on mismatched meshes") from exc
            vals.append(np.asarray(f.values))
        else:
            vals.append(interpolate(f, mesh).values)
    return ScalarField.nodal(mesh, (vals[0] - 2.0 * vals[1] + vals[2]) / dt ** 2)


@dataclass
class SliceProblem:
    """Data at one time.  Expression sources (str / Expression) are bound to ``t``."""

    t: float
    weight: object
    zeta: object
    dj: list | None = None
    q: object | None = None  # internal-force divergence, supplied as data

    def __post_init__(self):
        self.weight = _bind(self.weight, self.t, WeightField)
        self.zeta = _bind(self.zeta, self.t, ScalarField)
        if self.q is not None:
            self.q = _bind(self.q, self.t, ScalarField)
        if self.dj is not None:
            comps = self.dj if isinstance(self.dj, (list, tuple)) else [self.dj]
            self.dj = [_bind(c, self.t, ScalarField) for c in comps]


def _bind(obj, t, cls):
    if isinstance(obj, (str, Expression)):
        return cls.from_expression(obj, t)
    return as_weight(obj) if cls is WeightField else as_field(obj)


@dataclass
class SliceReport:
    t: float
    admissibility: Admissibility
    solution: ScalarField | None = None
    lambda1: float | None = None
    hardy: float | None = None
    force_integral: float | None = None
    weizsacker: tuple | None = None
    solve_residual: float | None = None
    consistency_residual: float | None = None
    consistent: bool | None = None
    error: str = ""
    notes: list = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return self.admissibility.admissible


@dataclass(frozen=True)
class SeriesOptions:
    quad: int | None = None
    threads: int = 1
    eigen: bool = True
    weizsacker: bool = True


def consistency_residual(zeta, q, d2n: ScalarField, mesh: Mesh) -> float:
    """Relative size of zeta - (q - d_t^2 n), compared on nodal interpolants."""
    z = interpolate(zeta, mesh).values
    qq = interpolate(q, mesh).values
    diff = ScalarField.nodal(mesh, z - qq + d2n.values)
    scale = max(lp_norm(ScalarField.nodal(mesh, v), 2, mesh) for v in (z, qq, d2n.values))
    r = lp_norm(diff, 2, mesh)
    return r / scale if scale > 0 else r


def _solve_slice(problem: SliceProblem, mesh: Mesh, options: SeriesOptions,
                 d2n: ScalarField | None) -> SliceReport:
    n = as_weight(problem.weight)
    cert = certify_density(n, mesh, options.quad)
    report = SliceReport(problem.t, cert)
    if d2n is not None and problem.q is not None:
        report.consistency_residual = consistency_residual(problem.zeta, problem.q, d2n, mesh)
        report.consistent = report.consistency_residual <= CONSISTENCY_TOL
    if not cert.admissible:
        report.error = "inadmissible density: fails " + ", ".join(cert.failures())
        return report
    try:
        system = assemble_system(mesh, n, problem.zeta, options.quad)
        v = solve_weak(system)
        report.solution = v
        report.solve_residual = galerkin_residual(system, v)
        if options.eigen:
            lam = float(solve_eigenpairs(system, 1).values[0])
            report.lambda1 = lam
            report.hardy = 1.0 / math.sqrt(lam)
    except NonCoerciveError as exc:
        report.error = str(exc)
    if problem.dj is not None:
        report.force_integral = force_integral(problem.dj, n, mesh)
    if options.weizsacker:
        report.weizsacker = weizsacker_term(n, mesh)
    return report


def run_time_series(slices: list[SliceProblem], mesh: Mesh,
                    options: SeriesOptions | None = None) -> list[SliceReport]:
    """Process each slice independently; reports come back in input order.

    Second time differences of n (for the zeta = q - d_t^2 n check) use the
    neighbours in time order, so permuting the input only permutes the output.
    """
    if not slices:
        raise ValueError("empty time series")
    options = options or SeriesOptions()
    order = sorted(range(len(slices)), key=lambda i: slices[i].t)
    d2 = [None] * len(slices)
    for k in range(1, len(order) - 1):
        i0, i1, i2 = order[k - 1], order[k], order[k + 1]
        if slices[i1].q is None:
            continue
        t0, t1, t2 = slices[i0].t, slices[i1].t, slices[i2].t
        dt = t1 - t0
        if dt <= 0 or abs((t2 - t1) - dt) > 1e-9 * max(abs(dt), 1e-300):
            log.warning("slice grid is not uniform around t=%g; consistency check skipped", t1)
            continue
        d2[i1] = second_time_difference(slices[i0].weight, slices[i1].weight,
                                        slices[i2].weight, dt, mesh)

    def work(i):
        return _solve_slice(slices[i], mesh, options, d2[i])

    if options.threads > 1:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            return list(pool.map(work, range(len(slices))))
    return [work(i) for i in range(len(slices))]
