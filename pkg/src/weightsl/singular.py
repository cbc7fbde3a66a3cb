"""Element-wise integration with geometric refinement toward singular points.

Cells whose integrand is non-finite at a vertex or quadrature point, or whose
high- and low-order rules disagree, are split uniformly (ratio 2) up to
``MAX_LEVELS`` times.  Cells that pass are settled; the settled mass at each
level is an increment of the partial sum.  When refinement stops before all
cells settle, the remaining tail is extrapolated geometrically from the last
increments, or the integral is declared divergent when those increments no
longer contract.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .expr import ExpressionError
from .mesh import Mesh, simplex_measures, simplex_points, split_simplices
from .quadrature import gauss_rule

log = logging.getLogger(__name__)

ZERO_THRESHOLD = 1e-14
MAX_LEVELS = 40
MAX_ACTIVE_CELLS = 1 << 15
RTOL = 1e-10
STALL_RATIO = 0.999
# cells narrower than this fraction of their coordinate magnitude are below
# the resolution at which x - x0 can be formed without cancellation noise
ROUNDOFF_WIDTH = 1e-6
_HI_DEGREE = {1: 39, 2: 15}
_LO_DEGREE = {1: 19, 2: 9}


class DivergenceError(ArithmeticError):
    pass


@dataclass
class AdaptedIntegral:
    per_element: np.ndarray  # (E, ncomp); inf where an element diverged
    error: float
    diverged: bool
    adapted: bool
    levels: int

    @property
    def value(self) -> np.ndarray:
        if self.diverged:
            return np.full(self.per_element.shape[1], np.inf)
        return self.per_element.sum(axis=0)


def safe_eval(f: Callable, points: np.ndarray, parents: np.ndarray, ncomp: int) -> np.ndarray:
    """Evaluate ``f`` returning (P, ncomp); points where the expression fails become NaN."""
    try:
        vals = np.asarray(f(points, parents), dtype=float)
    except ExpressionError:
        vals = np.empty((len(points), ncomp))
        for i in range(len(points)):
            try:
                vals[i] = np.asarray(f(points[i:i + 1], parents[i:i + 1]), dtype=float).reshape(ncomp)
            except ExpressionError:
                vals[i] = np.nan
    return vals.reshape(len(points), ncomp)


def _rule_values(f, verts, parents, rule, ncomp):
    pts, wts = simplex_points(verts, rule)
    K, Q, d = pts.shape
    vals = safe_eval(f, pts.reshape(-1, d), np.repeat(parents, Q), ncomp).reshape(K, Q, ncomp)
    finite = np.all(np.isfinite(vals), axis=(1, 2))
    with np.errstate(invalid="ignore", over="ignore"):
        total = np.einsum("kq,kqc->kc", wts, np.where(np.isfinite(vals), vals, 0.0))
    all_bad = np.all(~np.isfinite(vals).all(axis=2), axis=1)
    return total, finite, all_bad


def _vertex_finite(f, verts, parents, ncomp):
    K, V, d = verts.shape
    vals = safe_eval(f, verts.reshape(-1, d), np.repeat(parents, V), ncomp).reshape(K, V, ncomp)
    return np.all(np.isfinite(vals), axis=(1, 2))


def _cell_status(f, verts, parents, ncomp, hi, lo, check_error, atol_density):
    q_hi, fin_hi, all_bad = _rule_values(f, verts, parents, hi, ncomp)
    ok = fin_hi & _vertex_finite(f, verts, parents, ncomp)
    err = np.zeros(len(verts))
    if check_error:
        q_lo, fin_lo, _ = _rule_values(f, verts, parents, lo, ncomp)
        err = np.abs(q_hi - q_lo).max(axis=1)
        atol = atol_density * simplex_measures(verts)
        ok &= fin_lo & (err <= RTOL * np.abs(q_hi).max(axis=1) + atol)
    return q_hi, ok, err, all_bad


def _growing(d: list[float]) -> bool:
    a, b, c = d[-3:]
    return c > 0 and b >= a * (1 - 1e-9) and c >= b * (1 - 1e-9)


def _stalled(d: list[float]) -> bool:
    a, b, c = d[-3:]
    return a > 0 and b > 0 and b / a >= STALL_RATIO and c / b >= STALL_RATIO


def integrate_adapted(mesh: Mesh, f: Callable, ncomp: int = 1, element_ids=None,
                      check_error: bool = True, raise_on_divergence: bool = False) -> AdaptedIntegral:
    """Integrate ``f(points, parent_elements) -> (P,) | (P, ncomp)`` over each element."""
    dim = mesh.dim
    hi, lo = gauss_rule(dim, _HI_DEGREE[dim]), gauss_rule(dim, _LO_DEGREE[dim])
    if element_ids is None:
        element_ids = np.arange(mesh.num_elements)
    element_ids = np.asarray(element_ids, dtype=np.int64)
    per_element = np.zeros((mesh.num_elements, ncomp))
    verts = mesh.nodes[mesh.elements[element_ids]]
    q0, ok, err0, all_bad0 = _cell_status(f, verts, element_ids, ncomp, hi, lo, check_error, 0.0)
    adapted = bool(np.any(~ok))
    settled_mass = np.abs(q0[ok]).sum()
    atol_density = 1e-12 * settled_mass / max(mesh.domain_measure, 1e-300)
    per_element[element_ids[ok]] = q0[ok]
    error = float(err0[ok].sum())

    if np.any(all_bad0 & ~ok):
        # integrand undefined on a whole element: the zero set has positive measure
        return _finish(per_element, error, True, True, 0, raise_on_divergence)

    running = {int(e): [] for e in element_ids[~ok]}
    active, parents = verts[~ok], element_ids[~ok]
    diverged = False
    level = 0
    for level in range(1, MAX_LEVELS + 1):
        if len(active) == 0:
            break
        active = split_simplices(active)
        parents = np.repeat(parents, 2 ** dim)
        q, ok, err, all_bad = _cell_status(f, active, parents, ncomp, hi, lo, check_error,
                                           atol_density)
        inc = np.zeros((mesh.num_elements, ncomp))
        np.add.at(inc, parents[ok], q[ok])
        per_element += inc
        error += float(err[ok].sum())
        stop = set()
        for e, hist in running.items():
            hist.append(inc[e])
        floored = set(np.unique(parents[all_bad & ~ok]).tolist())
        if floored and level <= 3:
            diverged = True
            break
        floored |= set(np.unique(parents[~ok & _below_roundoff(active)]).tolist())
        for e, hist in running.items():
            if e in floored:
                stop.add(e)
            elif level >= 4:
                d = [np.abs(h).sum() for h in hist[-3:]]
                scale = np.abs(per_element[e]).sum()
                if max(d) <= 1e-16 * scale:
                    stop.add(e)
        keep = ~ok
        remaining = set(np.unique(parents[keep]).tolist())
        for e in list(running):
            if e not in remaining:
                running.pop(e)
        if keep.sum() > MAX_ACTIVE_CELLS:
            log.debug("active cell budget exhausted at level %d", level)
            stop |= set(running)
        for e in stop & set(running):
            hist = running.pop(e)
            tail, tail_err, div = _extrapolate(hist)
            if div:
                diverged = True
            per_element[e] += tail
            error += tail_err
        if diverged:
            break
        keep &= np.isin(parents, list(running))
        active, parents = active[keep], parents[keep]
    else:
        for e, hist in running.items():
            tail, tail_err, div = _extrapolate(hist)
            diverged |= div
            per_element[e] += tail
            error += tail_err
    return _finish(per_element, error, diverged, adapted, level,
                   raise_on_divergence)


def _below_roundoff(cells: np.ndarray) -> np.ndarray:
    diam = np.max(np.linalg.norm(cells[:, :, None, :] - cells[:, None, :, :], axis=3), axis=(1, 2))
    scale = np.max(np.abs(cells), axis=(1, 2))
    return diam < ROUNDOFF_WIDTH * scale


def _extrapolate(hist):
    """Geometric tail from the last increments; returns (tail, error, diverged).

    Levels that settled nothing (before the first settled cell, or at the
    resolution floor) carry no rate information and are skipped.
    """
    d = [float(np.abs(h).sum()) for h in hist]
    nz = [i for i, v in enumerate(d) if v > 0]
    if not nz:
        return 0.0, 0.0, False
    hist = hist[nz[0]:nz[-1] + 1]
    d = d[nz[0]:nz[-1] + 1]
    if len(d) >= 3 and (_growing(d) or _stalled(d)):
        return 0.0, np.inf, True
    if len(d) < 2 or d[-1] == 0.0:
        return 0.0, 0.0, False
    r = d[-1] / d[-2] if d[-2] > 0 else 0.0
    if r >= 1.0:
        return 0.0, d[-1] * len(d), False
    tail = hist[-1] * (r / (1.0 - r))
    err = 0.0
    if len(d) >= 3 and d[-3] > 0:
        r_prev = min(d[-2] / d[-3], 0.999999)
        err = float(np.abs(hist[-1] * (r / (1 - r) - r_prev / (1 - r_prev))).sum())
    return tail, err, False


def _finish(per_element, error, diverged, adapted, levels, raise_on_divergence):
    if diverged:
        if raise_on_divergence:
            raise DivergenceError("integral diverges under singularity-adapted refinement")
        error = np.inf
    return AdaptedIntegral(per_element, float(error), diverged, adapted, levels)
