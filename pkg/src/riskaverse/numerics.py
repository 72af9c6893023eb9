"""Deterministic numerical kernels.

Adaptive tensor-product quadrature, grid search with plateau-aware refinement,
finite-difference Hessians, and stability detection for sequences of set
estimates. Nothing in this module draws random numbers; identical inputs give
bit-identical outputs, which the reporting layer depends on.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridError, QuadratureError, ScheduleError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)
_GL_LOW_NODES, _GL_LOW_WEIGHTS = np.polynomial.legendre.leggauss(7)
_TINY = 1e-300
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class GridSpec:
    """Grid search control: base grid density and refinement schedule.

    points_per_dim:     grid points along each axis (>= 3)
    refinement_rounds:  zoom-in passes after the base sweep (>= 0)
    shrink_factor:      sub-box shrink per round, in (0, 1); sub-boxes never
                        shrink below the parent grid spacing, so a maximizer
                        within one cell of a retained point cannot be lost
    """

    points_per_dim: int = 33
    refinement_rounds: int = 3
    shrink_factor: float = 0.15

    def __post_init__(self):
        if self.points_per_dim < 3:
            raise GridError("points_per_dim must be at least 3")
        if self.refinement_rounds < 0:
            raise GridError("refinement_rounds must be nonnegative")
        if not (0.0 < self.shrink_factor < 1.0):
            raise GridError("shrink_factor must lie strictly between 0 and 1")


@dataclass(frozen=True)
class QuadratureResult:
    """Integral estimate with an accumulated error bound."""

    value: float
    error: float
    cells: int
    converged: bool


@dataclass(frozen=True)
class SetEstimate:
    """A set-valued argmax: all grid points within a tolerance band of the max.

    Invariant: every retained point's objective value is at least
    value - plateau_tol * scale, where scale is the observed objective scale
    (equal to value for nonnegative objectives). `resolution` is the final
    grid spacing; points are deduplicated at that resolution.
    """

    points: tuple
    value: float
    plateau_tol: float
    resolution: float
    plateau: bool = False
    flagged_empty: bool = False

    @classmethod
    def empty(cls, plateau_tol: float = 0.0) -> "SetEstimate":
        return cls((), math.nan, plateau_tol, 0.0, False, True)

    def single(self) -> np.ndarray:
        """The unique point, for callers that expect no ties."""
        if len(self.points) != 1:
            raise GridError(f"expected a single point, have {len(self.points)}")
        return self.points[0]


@dataclass(frozen=True)
class SetLimit:
    """Outcome of set-limit detection over a trace of set estimates."""

    points: tuple
    diverged: bool
    reason: str
    window: int
    match_radius: float


def _as_bounds(lower, upper):
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if lo.shape != hi.shape or lo.ndim != 1:
        raise GridError("lower and upper must be 1-d arrays of equal length")
    if np.any(hi < lo):
        raise GridError("upper must be >= lower elementwise")
    return lo, hi


def _eval(fn, pts: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        vals = np.asarray(fn(pts), dtype=float)
        if vals.shape != (pts.shape[0],):
            raise GridError("vectorized objective returned a bad shape")
    else:
        vals = np.array([float(fn(p)) for p in pts], dtype=float)
    return vals


# ---------------------------------------------------------------------------
# quadrature


def _cell_rule(lo: np.ndarray, hi: np.ndarray, nodes, weights):
    """Tensor-product Gauss-Legendre nodes and weights for one cell."""
    axes, waxes = [], []
    for a, b in zip(lo, hi):
        half = 0.5 * (b - a)
        axes.append(0.5 * (a + b) + half * nodes)
        waxes.append(half * weights)
    if len(axes) == 1:
        return axes[0][:, None], waxes[0]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = waxes[0]
    for w in waxes[1:]:
        wts = np.multiply.outer(wts, w)
    return pts, wts.ravel()


def _cell_estimate(fn, lo, hi, vectorized):
    """High-order estimate, embedded-rule error estimate, and |f| mass."""
    pts, wts = _cell_rule(lo, hi, _GL_NODES, _GL_WEIGHTS)
    vals = _eval(fn, pts, vectorized)
    lpts, lwts = _cell_rule(lo, hi, _GL_LOW_NODES, _GL_LOW_WEIGHTS)
    lvals = _eval(fn, lpts, vectorized)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(lvals))):
        raise QuadratureError("non-finite integrand value encountered")
    est = float(vals @ wts)
    err = abs(est - float(lvals @ lwts))
    absmass = float(np.abs(vals) @ np.abs(wts))
    return est, err, absmass


def _initial_edges(lo, hi, anchors, min_cells):
    """Split [lo, hi] at interior anchor coordinates, then until min_cells."""
    edges = [lo, hi]
    for a in sorted(set(float(x) for x in anchors)):
        if lo < a < hi:
            edges.append(a)
    edges.sort()
    while len(edges) - 1 < min_cells:
        widths = [edges[i + 1] - edges[i] for i in range(len(edges) - 1)]
        i = int(np.argmax(widths))
        edges.insert(i + 1, 0.5 * (edges[i] + edges[i + 1]))
        edges.sort()
    return edges


def integrate_box(
    fn: Callable,
    lower,
    upper,
    tol: float = 1e-9,
    *,
    vectorized: bool = False,
    anchors: Sequence[Sequence[float]] | None = None,
    min_cells_per_dim: int = 1,
    max_cells: int = 20000,
    strict: bool = True,
) -> QuadratureResult:
    """Adaptive tensor-product Gauss-Legendre quadrature over a box.

    Globally adaptive: every cell carries an embedded 15/7-point error
    estimate, and the worst cell is bisected along its widest axis until the
    total estimated error meets `tol`, the error hits the integrand's own
    floating-point noise floor, or the cell budget runs out (flagged, raised
    if `strict`). All orderings are deterministic, so identical inputs
    produce bit-identical results. `anchors` lists per-axis coordinates where
    the initial cells are split (declared feature loci, e.g. a narrow image
    density after an observation transform).

    The single-cell rule is exact for polynomials up to degree 13 per axis
    (the embedded lower rule is the binding one: its agreement with the
    higher rule is what terminates subdivision).
    """
    lo, hi = _as_bounds(lower, upper)
    if np.any(hi <= lo):
        raise QuadratureError("integration box must have positive width")
    ndim = lo.size
    per_axis_anchors = [()] * ndim
    if anchors is not None:
        if len(anchors) != ndim:
            raise QuadratureError("anchors must give one sequence per axis")
        per_axis_anchors = [tuple(a) for a in anchors]

    # heap of (-err, insertion_counter, lo, hi, est, absmass)
    heap: list = []
    counter = itertools.count()
    cells_used = 0
    frozen: list = []  # cells too small to split further

    edge_lists = [
        _initial_edges(lo[d], hi[d], per_axis_anchors[d], max(1, min_cells_per_dim))
        for d in range(ndim)
    ]
    total_err = 0.0
    total_abs = 0.0
    for combo in itertools.product(*(range(len(e) - 1) for e in edge_lists)):
        clo = np.array([edge_lists[d][i] for d, i in enumerate(combo)])
        chi = np.array([edge_lists[d][i + 1] for d, i in enumerate(combo)])
        est, err, am = _cell_estimate(fn, clo, chi, vectorized)
        cells_used += 1
        total_err += err
        total_abs += am
        heapq.heappush(heap, (-err, next(counter), clo, chi, est, am))

    converged = True
    while heap:
        if total_err <= tol:
            break
        if total_err <= 32.0 * _EPS * total_abs + _TINY:
            break  # at the integrand's rounding noise; refining cannot help
        if cells_used >= max_cells:
            converged = False
            break
        neg_err, _, clo, chi, est, am = heapq.heappop(heap)
        widths = chi - clo
        d = int(np.argmax(widths))
        mid = 0.5 * (clo[d] + chi[d])
        if widths[d] <= 1e-13 * max(1.0, abs(mid)):
            frozen.append((clo, chi, est, -neg_err, am))
            total_err += neg_err  # removed from the active error pool
            total_abs -= am
            continue
        left_hi = chi.copy()
        left_hi[d] = mid
        right_lo = clo.copy()
        right_lo[d] = mid
        e1, err1, am1 = _cell_estimate(fn, clo, left_hi, vectorized)
        e2, err2, am2 = _cell_estimate(fn, right_lo, chi, vectorized)
        cells_used += 2
        total_err += err1 + err2 + neg_err
        total_abs += am1 + am2 - am
        heapq.heappush(heap, (-err1, next(counter), clo, left_hi, e1, am1))
        heapq.heappush(heap, (-err2, next(counter), right_lo, chi, e2, am2))

    cells = [(tuple(clo), est, -neg_err) for neg_err, _, clo, chi, est, am in heap]
    cells.extend((tuple(clo), est, err) for clo, chi, est, err, am in frozen)
    cells.sort(key=lambda c: c[0])
    value = 0.0
    error = 0.0
    for _, est, err in cells:
        value += est
        error += err

    result = QuadratureResult(value, error, cells_used, converged)
    if strict and not converged:
        raise QuadratureError(
            f"subdivision budget exhausted after {cells_used} cells "
            f"(estimate {value!r}, estimated error {error!r})"
        )
    return result


# ---------------------------------------------------------------------------
# grid argmax


def _mesh(lo, hi, ppd):
    axes = [np.linspace(a, b, ppd) if b > a else np.full(ppd, a) for a, b in zip(lo, hi)]
    if lo.size == 1:
        return axes[0][:, None]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _dedupe(points: np.ndarray, values: np.ndarray, radius: float):
    """Greedy dedupe keeping the best value per cluster; deterministic order."""
    order = np.lexsort(tuple(points[:, d] for d in range(points.shape[1] - 1, -1, -1)))
    order = sorted(order, key=lambda i: (-values[i],) + tuple(points[i]))
    kept_pts: list = []
    kept_vals: list = []
    for i in order:
        p = points[i]
        if all(np.max(np.abs(p - q)) > radius for q in kept_pts):
            kept_pts.append(p)
            kept_vals.append(values[i])
    return kept_pts, kept_vals


def grid_argmax(
    fn: Callable,
    lower,
    upper,
    grid: GridSpec = GridSpec(),
    plateau_tol: float = 1e-9,
    *,
    vectorized: bool = False,
    initial=None,
    max_clusters: int = 16,
) -> SetEstimate:
    """Tensor-grid argmax with plateau retention and cluster refinement.

    Retains every point whose value is within plateau_tol (relative to the
    observed objective scale) of the maximum; each retained cluster is zoomed
    by `grid.shrink_factor` per round, never below the parent spacing. A base
    sweep where at least half the grid ties at the max is reported as a
    plateau (representative points, no refinement). `initial` optionally
    supplies precomputed base-grid points and values.
    """
    lo, hi = _as_bounds(lower, upper)
    ppd = grid.points_per_dim
    if initial is not None:
        pts, vals = initial
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.asarray(vals, dtype=float)
    else:
        pts = _mesh(lo, hi, ppd)
        vals = _eval(fn, pts, vectorized)
    if not np.all(np.isfinite(vals)):
        raise GridError("objective returned a non-finite value on the base grid")

    width = hi - lo
    spacing = width / (ppd - 1)
    vmax = float(np.max(vals))
    vmin = float(np.min(vals))
    scale = max(abs(vmax), abs(vmin), _TINY)
    threshold = vmax - plateau_tol * scale
    passing = vals >= threshold

    if np.count_nonzero(passing) >= 0.5 * vals.size:
        idx = np.flatnonzero(passing)
        step = max(1, len(idx) // 64)
        reps = tuple(pts[i] for i in idx[::step])
        return SetEstimate(reps, vmax, plateau_tol, float(np.max(spacing)), plateau=True)

    # merge radius of 1.5 cells: grid neighbors inside the tie band collapse,
    # peaks two or more cells apart stay distinct
    cand_pts, cand_vals = _dedupe(pts[passing], vals[passing], 1.5 * float(np.max(spacing)))
    cand_pts = cand_pts[:max_clusters]
    cand_vals = cand_vals[:max_clusters]

    half_width = 0.5 * width
    for _ in range(grid.refinement_rounds):
        half_width = np.maximum(grid.shrink_factor * half_width, spacing)
        pool_pts = list(cand_pts)
        pool_vals = list(cand_vals)
        for p in cand_pts:
            slo = np.maximum(lo, p - half_width)
            shi = np.minimum(hi, p + half_width)
            sub = _mesh(slo, shi, ppd)
            sv = _eval(fn, sub, vectorized)
            if not np.all(np.isfinite(sv)):
                raise GridError("objective returned a non-finite value while refining")
            pool_pts.extend(sub)
            pool_vals.extend(sv)
        pool_pts = np.asarray(pool_pts)
        pool_vals = np.asarray(pool_vals)
        spacing = 2.0 * half_width / (ppd - 1)
        vmax = float(np.max(pool_vals))
        scale = max(scale, abs(vmax))
        threshold = vmax - plateau_tol * scale
        passing = pool_vals >= threshold
        cand_pts, cand_vals = _dedupe(
            pool_pts[passing], pool_vals[passing], 1.5 * float(np.max(spacing))
        )
        cand_pts = cand_pts[:max_clusters]
        cand_vals = cand_vals[:max_clusters]

    final = sorted(cand_pts, key=lambda p: tuple(p))
    resolution = float(np.max(spacing))
    return SetEstimate(tuple(np.asarray(p) for p in final), vmax, plateau_tol, resolution)


# ---------------------------------------------------------------------------
# finite differences


def finite_diff_hessian(
    fn: Callable,
    point,
    step: float | None = None,
    lower=None,
    upper=None,
) -> np.ndarray:
    """Central-difference Hessian, symmetrized as (H + H^T)/2.

    Steps shrink per axis so all stencil points stay inside [lower, upper]
    when bounds are given; a point pinned to the boundary cannot take a
    central stencil and raises.
    """
    p = np.atleast_1d(np.asarray(point, dtype=float))
    m = p.size
    if step is None:
        h = 1.2e-4 * np.maximum(1.0, np.abs(p))
    else:
        h = np.full(m, float(step))
    if lower is not None and upper is not None:
        lo, hi = _as_bounds(lower, upper)
        room = 0.499 * np.minimum(hi - p, p - lo)
        if np.any(room <= 0):
            raise GridError("central stencil does not fit: point on the boundary")
        h = np.minimum(h, room)

    def f(q):
        return float(fn(q))

    f0 = f(p)
    hess = np.empty((m, m), dtype=float)
    for i in range(m):
        ei = np.zeros(m)
        ei[i] = h[i]
        hess[i, i] = (f(p + ei) - 2.0 * f0 + f(p - ei)) / (h[i] * h[i])
        for j in range(i + 1, m):
            ej = np.zeros(m)
            ej[j] = h[j]
            hess[i, j] = (
                f(p + ei + ej) - f(p + ei - ej) - f(p - ei + ej) + f(p - ei - ej)
            ) / (4.0 * h[i] * h[j])
            hess[j, i] = hess[i, j]
    if not np.all(np.isfinite(hess)):
        raise GridError("non-finite value in finite-difference Hessian")
    return 0.5 * (hess + hess.T)


# ---------------------------------------------------------------------------
# set-limit detection


def _clusters(points: Sequence[np.ndarray], radius: float):
    """Cluster points by greedy max-norm linking; centers are member means."""
    ordered = sorted((np.atleast_1d(np.asarray(p, float)) for p in points), key=tuple)
    centers: list = []
    members: list = []
    for p in ordered:
        placed = False
        for i, c in enumerate(centers):
            if np.max(np.abs(p - c)) <= radius:
                members[i].append(p)
                centers[i] = np.mean(members[i], axis=0)
                placed = True
                break
        if not placed:
            centers.append(p)
            members.append([p])
    return centers


def setlim_detect(
    estimates: Sequence[SetEstimate],
    match_radius: float,
    stability_window: int = 3,
) -> SetLimit:
    """Detect the stabilized limit set of a sequence of set estimates.

    A candidate (cluster center of the final estimate's points) survives when
    every one of the last `stability_window` estimates contains a point within
    match_radius of it. No survivor means divergence. Appending duplicates of
    the final estimate cannot change the outcome.
    """
    if stability_window < 1:
        raise ScheduleError("stability_window must be at least 1")
    if len(estimates) < stability_window:
        raise ScheduleError(
            f"need at least stability_window={stability_window} estimates, "
            f"have {len(estimates)}"
        )
    window = estimates[-stability_window:]
    last = window[-1]
    if last.flagged_empty or not last.points:
        return SetLimit((), True, "final estimate is empty", stability_window, match_radius)

    survivors = []
    for center in _clusters(last.points, match_radius):
        ok = True
        for est in window:
            if est.flagged_empty or not est.points:
                ok = False
                break
            dists = [np.max(np.abs(center - np.atleast_1d(q))) for q in est.points]
            if min(dists) > match_radius:
                ok = False
                break
        if ok:
            survivors.append(center)

    if not survivors:
        return SetLimit(
            (),
            True,
            f"no point persisted across the last {stability_window} estimates "
            f"at match radius {match_radius:g}",
            stability_window,
            match_radius,
        )
    survivors.sort(key=tuple)
    return SetLimit(tuple(survivors), False, "", stability_window, match_radius)


def set_distance(a: Sequence, b: Sequence) -> float:
    """Hausdorff distance between two finite point sets (inf when one is empty)."""
    pa = [np.atleast_1d(np.asarray(p, float)) for p in a]
    pb = [np.atleast_1d(np.asarray(q, float)) for q in b]
    if not pa or not pb:
        return math.inf
    d_ab = max(min(float(np.linalg.norm(p - q)) for q in pb) for p in pa)
    d_ba = max(min(float(np.linalg.norm(p - q)) for p in pa) for q in pb)
    return max(d_ab, d_ba)
