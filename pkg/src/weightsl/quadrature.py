"""Quadrature rules on the reference interval [0, 1] and triangle (0,0),(1,0),(0,1)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

DEFAULT_DEGREE = 4


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    points: np.ndarray  # (Q, dim) reference coordinates
    weights: np.ndarray  # (Q,), sum = reference measure
    degree: int

    @property
    def reference_measure(self) -> float:
        return 1.0 if self.dim == 1 else 0.5

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def _interval_rule(npts: int):
    xi, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (xi + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _triangle_rule(npts: int):
    # Collapsed (Duffy) product: Gauss-Jacobi(1, 0) in s absorbs the Jacobian (1 - s).
    xj, wj = roots_jacobi(npts, 1.0, 0.0)
    s = 0.5 * (xj + 1.0)
    ws = 0.25 * wj
    r, wr = _interval_rule(npts)
    S, R = np.meshgrid(s, r, indexing="ij")
    W = np.outer(ws, wr)
    pts = np.column_stack([S.ravel(), ((1.0 - S) * R).ravel()])
    return pts, W.ravel()


def gauss_rule(dim: int, degree: int = DEFAULT_DEGREE) -> QuadratureRule:
    """Rule integrating polynomials of total degree <= ``degree`` exactly."""
    if dim not in (1, 2):
        raise ValueError(f"unsupported dimension {dim}")
    if degree < 0:
        raise ValueError("quadrature degree must be nonnegative")
    npts = max(1, math.ceil((degree + 1) / 2))
    if dim == 1:
        x, w = _interval_rule(npts)
        pts = x[:, None]
    else:
        pts, w = _triangle_rule(npts)
    pts = pts.copy()
    w = w.copy()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(dim, pts, w, degree)


def reference_basis(dim: int, ref_points: np.ndarray) -> np.ndarray:
    """P1 shape function values ``(Q, dim + 1)`` at reference points."""
    ref_points = np.atleast_2d(ref_points)
    return np.column_stack([1.0 - ref_points.sum(axis=1), ref_points])


def reference_gradients(dim: int) -> np.ndarray:
    """Constant P1 shape-function gradients ``(dim + 1, dim)`` on the reference simplex."""
    return np.vstack([-np.ones(dim), np.eye(dim)])


def resolve_rule(dim: int, quad=None) -> QuadratureRule:
    """Accept a rule, a degree, or None (default degree)."""
    if quad is None:
        return gauss_rule(dim, DEFAULT_DEGREE)
    if isinstance(quad, QuadratureRule):
        if quad.dim != dim:
            raise ValueError("quadrature rule dimension does not match the mesh")
        return quad
    return gauss_rule(dim, int(quad))
