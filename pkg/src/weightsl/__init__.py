"""Weighted Sturm-Liouville problems -div(n grad v) = zeta with degenerate densities n.

P1 finite elements on intervals and rectangles, the generalized eigenbasis of
the weighted form, and numerical certificates for the density conditions
(n >= 0, n in L1, n^-2 in L1) and the inequalities built on them.
"""
from .assembly import (AssembledSystem, apply_dirichlet, assemble_load, assemble_mass,
                       assemble_stiffness, assemble_system, export_coo)
from .expr import Expression, ExpressionError, parse_expression, unparse
from .fields import AdmissibilityError, ScalarField, WeightField, evaluate, interpolate
from .mesh import Mesh, build_interval_mesh, build_rectangle_mesh, refine_uniform
from .norms import (IntegrabilityReport, check_inverse_integrability, force_integral,
                    gradient_norms, lp_norm, weighted_lp_norm, weighted_sobolev_norm,
                    weizsacker_term)
from .quadrature import QuadratureRule, gauss_rule
from .slices import (SliceProblem, SliceReport, certify_density, run_time_series,
                     second_time_difference)
from .solvers import (EigenSequence, constants_report, energy, estimate_coercivity_constant,
                      estimate_continuity_constant, estimate_hardy_constant,
                      estimate_poincare_constant, solve_eigenpairs, solve_weak, verify_holder_chain)
from .study import convergence_study

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "AssembledSystem", "EigenSequence", "Expression", "ExpressionError",
    "IntegrabilityReport", "Mesh", "QuadratureRule", "ScalarField", "SliceProblem", "SliceReport",
    "WeightField", "apply_dirichlet", "assemble_load", "assemble_mass", "assemble_stiffness",
    "assemble_system", "build_interval_mesh", "build_rectangle_mesh", "certify_density",
    "check_inverse_integrability", "constants_report", "convergence_study", "energy",
    "estimate_coercivity_constant", "estimate_continuity_constant", "estimate_hardy_constant",
    "estimate_poincare_constant", "evaluate", "export_coo", "force_integral", "gauss_rule",
    "gradient_norms", "interpolate", "lp_norm", "parse_expression", "refine_uniform",
    "run_time_series", "second_time_difference", "solve_eigenpairs", "solve_weak", "unparse",
    "verify_holder_chain", "weighted_lp_norm", "weighted_sobolev_norm", "weizsacker_term",
]
