"""Batch command-line front end.

    weightsl CONFIG.json [--quad-degree N] [--threads N] [--out PREFIX]

Exit status: 0 success, 1 admissibility failure, 2 solver failure,
3 configuration or parse error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .assembly import assemble_system
from .config import ConfigError, NodalData, RunConfig, load_config
from .expr import ExpressionError
from .fields import AdmissibilityError, ScalarField, WeightField
from .mesh import Mesh
from .singular import DivergenceError
from .slices import SeriesOptions, SliceProblem, certify_density, run_time_series
from .solvers import (EigenConvergenceError, EstimationError, NonCoerciveError, constants_report,
                      galerkin_residual, solve_eigenpairs, solve_weak)
from .study import convergence_study

log = logging.getLogger("weightsl")

EXIT_OK, EXIT_INADMISSIBLE, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.16e}"


def write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _weight(data, mesh: Mesh, t: float = 0.0) -> WeightField:
    if isinstance(data, NodalData):
        return WeightField.nodal(mesh, data.values)
    return WeightField.from_expression(data, t)


def _scalar(data, mesh: Mesh, t: float = 0.0) -> ScalarField:
    if isinstance(data, NodalData):
        return ScalarField.nodal(mesh, data.values)
    return ScalarField.from_expression(data, t)


def _certify_or_report(n, mesh, cfg) -> bool:
    cert = certify_density(n, mesh, cfg.quad_degree)
    if not cert.admissible:
        print(f"certify: inadmissible density, fails {', '.join(cert.failures())}")
    return cert.admissible


class Runner:
    def __init__(self, cfg: RunConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self.mesh = cfg.build_mesh()
        self.prefix = Path(cfg.output)

    def out(self, suffix: str) -> Path:
        return self.prefix.with_name(f"{self.prefix.name}_{suffix}.csv")

    def coordinate_header(self):
        return ["x"] if self.mesh.dim == 1 else ["x", "y"]

    def run(self) -> int:
        return getattr(self, f"cmd_{self.cfg.command}")()

    def cmd_solve(self) -> int:
        cfg, mesh = self.cfg, self.mesh
        n = _weight(cfg.weight, mesh)
        if not _certify_or_report(n, mesh, cfg):
            return EXIT_INADMISSIBLE
        system = assemble_system(mesh, n, _scalar(cfg.rhs, mesh), cfg.quad_degree)
        v = solve_weak(system)
        res = galerkin_residual(system, v)
        rows = (list(mesh.nodes[i]) + [v.values[i]] for i in range(mesh.num_nodes))
        path = write_csv(self.out("solution"), self.coordinate_header() + ["v"], rows)
        print(f"solve: dofs={system.num_dofs} residual={res:.3e} -> {path}")
        return EXIT_OK

    def cmd_eigen(self) -> int:
        cfg, mesh = self.cfg, self.mesh
        n = _weight(cfg.weight, mesh)
        if not _certify_or_report(n, mesh, cfg):
            return EXIT_INADMISSIBLE
        system = assemble_system(mesh, n, quad=cfg.quad_degree)
        k = min(cfg.parameters["k"], system.num_dofs)
        seq = solve_eigenpairs(system, k)
        path = write_csv(self.out("eigen"), ["m", "lambda"],
                         ((m + 1, lam) for m, lam in enumerate(seq.values)))
        print(f"eigen: k={k} lambda_1={seq.values[0]:.10g} -> {path}")
        return EXIT_OK

    def cmd_constants(self) -> int:
        cfg, mesh = self.cfg, self.mesh
        n = _weight(cfg.weight, mesh)
        if not _certify_or_report(n, mesh, cfg):
            return EXIT_INADMISSIBLE
        rep = constants_report(mesh, n, cfg.quad_degree, cfg.parameters["q"], cfg.parameters["seed"])
        rows = [("hardy", None, rep.hardy, False),
                ("coercivity", None, rep.coercivity, False),
                ("continuity", None, rep.continuity, False),
                ("holder_embedding", None, rep.holder_embedding, False)]
        rows += [("poincare", q, est.value, est.heuristic) for q, est in rep.poincare.items()]
        path = write_csv(self.out("constants"), ["constant", "q", "value", "lower_bound_only"], rows)
        print(f"constants: hardy={rep.hardy:.10g} coercivity={rep.coercivity:.10g} "
              f"continuity={rep.continuity:.10g} -> {path}")
        return EXIT_OK

    def cmd_certify(self) -> int:
        cfg, mesh = self.cfg, self.mesh
        cert = certify_density(_weight(cfg.weight, mesh), mesh, cfg.quad_degree)
        inv = cert.inverse
        rows = [
            ("nonnegative", cert.nonnegative, None, "sampled", None),
            ("integrable", cert.integrable, cert.l1, "singularity-adapted", None),
            ("inverse_square_integrable", cert.inverse_square_integrable,
             inv.value if inv else None, inv.method if inv else "", inv.estimated_error if inv else None),
        ]
        path = write_csv(self.out("certify"), ["condition", "passed", "value", "method",
                                               "estimated_error"], rows)
        if cert.admissible:
            print(f"certify: admissible (||n||_1={cert.l1:.10g}, ||n^-2||_1={inv.value:.10g}) -> {path}")
            return EXIT_OK
        print(f"certify: inadmissible, fails {', '.join(cert.failures())} -> {path}")
        return EXIT_INADMISSIBLE

    def cmd_convergence(self) -> int:
        cfg, mesh = self.cfg, self.mesh
        n = _weight(cfg.weight, mesh)
        if not _certify_or_report(n, mesh, cfg):
            return EXIT_INADMISSIBLE
        rows = convergence_study(mesh, n, _scalar(cfg.rhs, mesh), cfg.parameters["exact"],
                                 cfg.parameters["levels"], cfg.quad_degree)
        path = write_csv(self.out("convergence"),
                         ["level", "elements", "h", "l2_error", "h1n_error", "l2_order", "h1n_order"],
                         ((r.level, r.elements, r.h, r.l2_error, r.h1n_error, r.l2_order, r.h1n_order)
                          for r in rows))
        last = rows[-1]
        print(f"convergence: levels={len(rows)} l2_error={last.l2_error:.3e} "
              f"l2_order={last.l2_order:.3f} -> {path}")
        return EXIT_OK

    def cmd_timeseries(self) -> int:
        cfg, mesh = self.cfg, self.mesh
        p = cfg.parameters
        slices = []
        for i, t in enumerate(p["times"]):
            ov = p["overrides"].get(i, {})
            current = ov.get("current", cfg.current)
            force = ov.get("internal_force", p.get("internal_force"))
            slices.append(SliceProblem(
                t,
                _weight(ov.get("weight", cfg.weight), mesh, t),
                _scalar(ov.get("rhs", cfg.rhs), mesh, t),
                dj=[_scalar(c, mesh, t) for c in current] if current else None,
                q=_scalar(force, mesh, t) if force is not None else None,
            ))
        options = SeriesOptions(quad=cfg.quad_degree, threads=self.threads)
        reports = run_time_series(slices, mesh, options)
        rows = []
        for r in reports:
            a = r.admissibility
            rows.append((r.t, a.nonnegative, a.integrable, a.inverse_square_integrable,
                         r.solution is not None, r.lambda1, r.hardy, r.force_integral,
                         r.weizsacker[0] if r.weizsacker else None,
                         r.weizsacker[1] if r.weizsacker else None,
                         r.solve_residual, r.consistency_residual))
            status = "solved" if r.solution is not None else f"skipped ({r.error})"
            lam = f" lambda1={r.lambda1:.10g}" if r.lambda1 is not None else ""
            res = f" residual={r.solve_residual:.3e}" if r.solve_residual is not None else ""
            print(f"t={r.t:.6g}: {status}{lam}{res}")
        path = write_csv(self.out("series"),
                         ["t", "nonnegative", "integrable", "inverse_square_integrable", "solved",
                          "lambda1", "hardy", "force_integral", "weizsacker_lhs", "weizsacker_rhs",
                          "residual", "consistency_residual"], rows)
        print(f"timeseries: {len(reports)} slices -> {path}")
        if any(not r.admissible for r in reports):
            return EXIT_INADMISSIBLE
        if any(r.solution is None for r in reports):
            return EXIT_SOLVER
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="weightsl", description=__doc__.split("\n\n")[0])
    ap.add_argument("config", help="JSON run configuration")
    ap.add_argument("--quad-degree", type=int, default=None, help="override quadrature degree")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for time series")
    ap.add_argument("--out", default=None, help="output path prefix")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.quad_degree is not None:
            if args.quad_degree < 1:
                raise ConfigError("--quad-degree must be positive")
            cfg = replace(cfg, quad_degree=args.quad_degree)
        if args.out is not None:
            cfg = replace(cfg, output=args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return Runner(cfg, args.threads).run()
    except (AdmissibilityError, DivergenceError) as exc:
        print(f"admissibility failure: {exc}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except (NonCoerciveError, EigenConvergenceError, EstimationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ExpressionError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
