"""Point and set estimators, including the risk-averse limit engine.

The central quantity is the expected attenuated gain

    V_k(theta) = E[ A(k * L(theta_tilde, theta)) | x ]

where theta_tilde follows the posterior. For small k the gain is flat and
every candidate looks alike; as k grows only candidates whose posterior
neighborhood (in the loss metric) carries mass keep a positive score. The
risk-averse estimate is the stable limit of the argmax sets along an
increasing schedule of k values.

Classical estimators (MAP, density-mode, ML, posterior mean) and the two
information-weighted modes live here as well, since the limit engine is
checked against them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleError, SingularInformation, UnsupportedProblem
from .information import fisher_information, loss_hessian
from .losses import Attenuation, Loss
from .numerics import (
    GridSpec,
    SetEstimate,
    SetLimit,
    _mesh,
    grid_argmax,
    integrate_box,
    setlim_detect,
)
from .problems import (
    EstimationProblem,
    finite_posterior,
    posterior_normalizer,
)

__all__ = [
    "KSchedule",
    "ConvergenceTrace",
    "map_estimate",
    "fmap_estimate",
    "ml_estimate",
    "wf_estimate",
    "generalized_wf",
    "expected_gain",
    "posterior_mean",
    "risk_averse_estimate",
]

_GAIN_SLACK = 1e-7


# ---------------------------------------------------------------------------
# schedules and traces


@dataclass(frozen=True)
class KSchedule:
    """Strictly increasing positive risk levels; at least four are needed
    before a limit claim means anything."""

    k_values: tuple

    def __post_init__(self):
        ks = tuple(float(k) for k in self.k_values)
        object.__setattr__(self, "k_values", ks)
        if len(ks) < 4:
            raise ScheduleError(f"schedule has {len(ks)} levels, need at least 4")
        if ks[0] <= 0.0:
            raise ScheduleError("risk levels must be positive")
        for a, b in zip(ks, ks[1:]):
            if b <= a:
                raise ScheduleError(f"risk levels must increase strictly: {a} then {b}")

    @classmethod
    def geometric(cls, base: float = 4.0, count: int = 13, start: float = 1.0) -> "KSchedule":
        if base <= 1.0:
            raise ScheduleError("geometric schedules need base > 1")
        return cls(tuple(start * base**j for j in range(count)))

    def __iter__(self):
        return iter(self.k_values)

    def __len__(self):
        return len(self.k_values)


@dataclass(frozen=True, eq=False)
class ConvergenceTrace:
    """Per-level argmax sets plus the detected limit.

    per_k_max_gain holds max_theta V_k over the shared base grid; since the
    attenuation is non-increasing and the grid is shared, this sequence must
    be non-increasing in k (up to quadrature slack). per_k_scaled_gain is the
    same sequence times k^(dim/2), a diagnostic that stays order-one when the
    posterior is locally regular; it never feeds the argmax.
    """

    k_values: tuple
    per_k_estimates: tuple
    per_k_max_gain: tuple
    per_k_scaled_gain: tuple
    limit: SetLimit | None = None

    def __post_init__(self):
        n = len(self.k_values)
        for name in ("per_k_estimates", "per_k_max_gain", "per_k_scaled_gain"):
            if len(getattr(self, name)) != n:
                raise ScheduleError(f"{name} has {len(getattr(self, name))} entries for {n} levels")
        gains = self.per_k_max_gain
        slack = _GAIN_SLACK * max(1.0, max(abs(g) for g in gains) if gains else 1.0)
        for j in range(1, n):
            if gains[j] > gains[j - 1] + slack:
                raise ScheduleError(
                    f"max gain rose from {gains[j - 1]!r} to {gains[j]!r} "
                    f"between k={self.k_values[j - 1]!r} and k={self.k_values[j]!r}"
                )

    def rows(self):
        """(k, *theta coordinates, max gain, plateau flag) per retained point."""
        for k, est, gain in zip(self.k_values, self.per_k_estimates, self.per_k_max_gain):
            for p in est.points:
                yield (float(k), *(float(c) for c in np.atleast_1d(p)), float(gain), bool(est.plateau))


# ---------------------------------------------------------------------------
# posterior context


class _Posterior:
    """Caches the evidence so repeated density evaluations stay cheap."""

    def __init__(self, problem: EstimationProblem, x, tol: float):
        self.problem = problem
        self.x = x
        self.z = posterior_normalizer(problem, x, tol=tol)

    def density(self, thetas: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(thetas, dtype=float))
        return self.problem.prior_values(pts) * self.problem.likelihoods_over(pts, self.x) / self.z


def _require_finite(problem, who: str):
    if not problem.is_finite_theta:
        raise UnsupportedProblem(
            f"{who} is defined for finitely many parameter points; "
            "use the density-mode variant for continuous spaces"
        )


def _require_continuous(problem, who: str):
    if problem.is_finite_theta:
        raise UnsupportedProblem(
            f"{who} needs a continuous parameter space; "
            "finite problems compare masses directly"
        )


def _finite_tie_set(points: np.ndarray, values: np.ndarray, plateau_tol: float) -> SetEstimate:
    vmax = float(np.max(values))
    scale = max(abs(vmax), float(np.max(np.abs(values))), 1e-300)
    passing = np.flatnonzero(values >= vmax - plateau_tol * scale)
    order = sorted(passing, key=lambda i: tuple(points[i]))
    return SetEstimate(
        tuple(np.array(points[i]) for i in order),
        vmax,
        plateau_tol,
        0.0,
        plateau=len(passing) >= 0.5 * values.size,
    )


# ---------------------------------------------------------------------------
# classical estimators


def map_estimate(problem: EstimationProblem, x, grid: GridSpec | None = None,
                 plateau_tol: float = 1e-9) -> SetEstimate:
    """Posterior-mass argmax over a finite parameter set, ties retained."""
    _require_finite(problem, "map_estimate")
    w = finite_posterior(problem, x)
    return _finite_tie_set(problem.finite_points_array(), w, plateau_tol)


def fmap_estimate(problem: EstimationProblem, x, grid: GridSpec | None = None,
                  plateau_tol: float = 1e-9, tol: float = 1e-9) -> SetEstimate:
    """Posterior-density argmax set for continuous parameter spaces."""
    _require_continuous(problem, "fmap_estimate")
    ctx = _Posterior(problem, x, tol)
    return grid_argmax(
        ctx.density,
        problem.theta_space.lower,
        problem.theta_space.upper,
        grid or GridSpec(),
        plateau_tol,
        vectorized=True,
    )


def ml_estimate(problem: EstimationProblem, x, grid: GridSpec | None = None,
                plateau_tol: float = 1e-9) -> SetEstimate:
    """Likelihood argmax; finite sets keep ties, continuous spaces use the grid."""
    if problem.is_finite_theta:
        pts = problem.finite_points_array()
        lik = np.array([float(problem.likelihood(p, x)) for p in pts])
        return _finite_tie_set(pts, lik, plateau_tol)
    return grid_argmax(
        lambda ts: problem.likelihoods_over(ts, x),
        problem.theta_space.lower,
        problem.theta_space.upper,
        grid or GridSpec(),
        plateau_tol,
        vectorized=True,
    )


class _WeightedModeObjective:
    """Posterior density divided by the root determinant of a local matrix.

    Grid points where the matrix is singular (or its evaluation fails) score
    zero and are excluded; evaluation points pinned to the parameter boundary
    are nudged one differencing step inward, since the determinant field
    extends continuously there.
    """

    def __init__(self, problem, ctx, matrix_fn, step):
        self.problem = problem
        self.ctx = ctx
        self.matrix_fn = matrix_fn
        lo = problem.theta_space.lower
        hi = problem.theta_space.upper
        base = np.full(lo.size, step) if step is not None else 1e-4 * (hi - lo)
        self.inner_lo = lo + base
        self.inner_hi = hi - base
        self.excluded = 0
        self.valid = 0
        self._warned = False
        self._cache: dict = {}

    def __call__(self, theta):
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        key = t.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        probe = np.clip(t, self.inner_lo, self.inner_hi)
        try:
            m = self.matrix_fn(probe)
            det = m.det()
        except SingularInformation:
            det = 0.0
        floor = 1e-12
        if not math.isfinite(det) or det <= floor:
            self.excluded += 1
            if not self._warned:
                warnings.warn(
                    "singular information on part of the grid; those points are excluded",
                    stacklevel=3,
                )
                self._warned = True
            val = 0.0
        else:
            self.valid += 1
            val = float(self.ctx.density(t[None, :])[0]) / math.sqrt(det)
        self._cache[key] = val
        return val


def wf_estimate(problem: EstimationProblem, x, grid: GridSpec | None = None,
                step: float | None = None, plateau_tol: float = 1e-9,
                tol: float = 1e-9) -> SetEstimate:
    """Argmax of posterior density over the root Fisher determinant."""
    _require_continuous(problem, "wf_estimate")
    ctx = _Posterior(problem, x, tol)
    obj = _WeightedModeObjective(
        problem, ctx, lambda t: fisher_information(problem, t, step=step), step
    )
    with warnings.catch_warnings():
        # near-boundary one-sided differencing warnings repeat per grid point
        warnings.simplefilter("ignore", UserWarning)
        est = grid_argmax(
            obj,
            problem.theta_space.lower,
            problem.theta_space.upper,
            grid or GridSpec(),
            plateau_tol,
            vectorized=False,
        )
    if obj.valid == 0:
        raise SingularInformation(
            "Fisher information is singular across the entire grid; "
            "the weighted mode is undefined for this problem"
        )
    if obj.excluded:
        warnings.warn(
            f"{obj.excluded} grid evaluations had singular Fisher information and were excluded"
        )
    return est


def generalized_wf(problem: EstimationProblem, x, L: Loss,
                   grid: GridSpec | None = None, step: float | None = None,
                   plateau_tol: float = 1e-9, tol: float = 1e-9) -> SetEstimate:
    """Argmax of posterior density over the root loss-curvature determinant."""
    _require_continuous(problem, "generalized_wf")
    ctx = _Posterior(problem, x, tol)
    obj = _WeightedModeObjective(
        problem, ctx, lambda t: loss_hessian(problem, L, t, step=step), step
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        est = grid_argmax(
            obj,
            problem.theta_space.lower,
            problem.theta_space.upper,
            grid or GridSpec(),
            plateau_tol,
            vectorized=False,
        )
    if obj.valid == 0:
        raise SingularInformation(
            f"the curvature of {L.name!r} is singular across the entire grid"
        )
    if obj.excluded:
        warnings.warn(
            f"{obj.excluded} grid evaluations had singular loss curvature and were excluded"
        )
    return est


# ---------------------------------------------------------------------------
# expected attenuated gain


def _crossing(g, room: float, a0: float) -> float:
    """Largest offset (capped at room) with g still below the cutoff.

    Assumes the sublevel set along the ray is an interval starting at 0,
    which holds for every built-in loss: they grow monotonically with the
    per-axis separation.
    """
    if room <= 0.0:
        return 0.0
    if g(room) < a0:
        return room
    a, b = 0.0, room
    for _ in range(60):
        mid = 0.5 * (a + b)
        if g(mid) >= a0:
            b = mid
        else:
            a = mid
    return b


def _gain_window(problem, bound, k: float, a0: float, theta: np.ndarray):
    """Axis-aligned box covering {theta': k*L(theta', theta) < a0}, padded."""
    lo = problem.theta_space.lower
    hi = problem.theta_space.upper
    wlo = np.empty_like(lo)
    whi = np.empty_like(hi)
    for d in range(lo.size):

        def g(r, _d=d):
            p = theta.copy()
            p[_d] = theta[_d] + r
            return k * float(bound(p[None, :])[0])

        r_up = _crossing(g, float(hi[d] - theta[d]), a0)
        r_dn = _crossing(lambda r: g(-r), float(theta[d] - lo[d]), a0)
        pad_up = max(0.25 * r_up, 1e-9 * float(hi[d] - lo[d]))
        pad_dn = max(0.25 * r_dn, 1e-9 * float(hi[d] - lo[d]))
        whi[d] = min(float(hi[d]), float(theta[d]) + r_up + pad_up)
        wlo[d] = max(float(lo[d]), float(theta[d]) - r_dn - pad_dn)
    return wlo, whi


class _GainEvaluator:
    """Evaluates V_k(theta) = E[A(k L(theta_tilde, theta)) | x].

    Finite problems sum exactly over the parameter points. Continuous
    problems integrate only over the attenuation's support window around
    theta: beyond it A vanishes identically, so truncation is exact and the
    quadrature effort tracks the window, not the whole box.
    """

    def __init__(self, problem, L: Loss, A: Attenuation, x, tol: float):
        self.problem = problem
        self.L = L
        self.A = A
        self.x = x
        self.tol = tol
        if problem.is_finite_theta:
            self.points = problem.finite_points_array()
            self.weights = finite_posterior(problem, x)
            self.ctx = None
        else:
            self.ctx = _Posterior(problem, x, tol)

    def value_with_bound(self, bound, k: float, theta: np.ndarray) -> float:
        if self.ctx is None:
            return float(np.dot(self.weights, self.A(k * bound(self.points))))
        wlo, whi = _gain_window(self.problem, bound, k, self.A.threshold_a0, theta)

        def integrand(ts):
            return self.ctx.density(ts) * self.A(k * bound(ts))

        res = integrate_box(
            integrand, wlo, whi, tol=self.tol, vectorized=True, min_cells_per_dim=2
        )
        return float(res.value)

    def value(self, k: float, theta) -> float:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return self.value_with_bound(self.L.bind_second(self.problem, t), k, t)


def expected_gain(problem: EstimationProblem, L: Loss, A: Attenuation,
                  k: float, theta, x, tol: float = 1e-9) -> float:
    """Posterior expectation of the attenuated loss gain at one candidate."""
    if k <= 0.0 or not math.isfinite(k):
        raise ScheduleError(f"risk level must be positive and finite, got {k!r}")
    return _GainEvaluator(problem, L, A, x, tol).value(k, theta)


def posterior_mean(problem: EstimationProblem, x, tol: float = 1e-9) -> np.ndarray:
    """Coordinatewise posterior mean; a contrast, not part of the limit engine.

    It optimizes no attenuated gain and can land in regions of vanishing
    posterior mass, which is exactly the pathology the set estimators avoid.
    """
    _require_continuous(problem, "posterior_mean")
    ctx = _Posterior(problem, x, tol)
    lo = problem.theta_space.lower
    hi = problem.theta_space.upper
    out = np.empty(problem.dim)
    for d in range(problem.dim):

        def moment(ts, _d=d):
            pts = np.atleast_2d(ts)
            return pts[:, _d] * ctx.density(pts)

        res = integrate_box(moment, lo, hi, tol=tol, vectorized=True, min_cells_per_dim=4)
        out[d] = res.value
    return out


# ---------------------------------------------------------------------------
# the limit engine


def risk_averse_estimate(
    problem: EstimationProblem,
    L: Loss,
    A: Attenuation,
    schedule: KSchedule | None = None,
    x=None,
    grid: GridSpec | None = None,
    *,
    match_radius: float | None = None,
    stability_window: int = 3,
    plateau_tol: float = 1e-9,
    tol: float = 1e-9,
):
    """Track argmax_theta V_k(theta) along the schedule and detect its limit.

    Returns (trace, estimate). A wandering argmax set is reported through
    SetLimit.diverged and an empty flagged estimate rather than an exception:
    divergence is a finding about the (loss, attenuation) pair, not a failure
    of the computation.
    """
    if x is None:
        raise UnsupportedProblem("risk_averse_estimate needs an observation")
    schedule = schedule or KSchedule.geometric()
    grid = grid or GridSpec()
    ev = _GainEvaluator(problem, L, A, x, tol)

    estimates: list[SetEstimate] = []
    max_gains: list[float] = []
    scaled: list[float] = []

    if problem.is_finite_theta:
        pts = ev.points
        lmat = np.stack([ev.L.bind_second(problem, q)(pts) for q in pts], axis=1)
        if match_radius is None:
            match_radius = 1e-9
        for k in schedule:
            vals = ev.weights @ ev.A(k * lmat)
            est = _finite_tie_set(pts, vals, plateau_tol)
            estimates.append(est)
            max_gains.append(est.value)
            scaled.append(est.value)
    else:
        lo = problem.theta_space.lower
        hi = problem.theta_space.upper
        base = _mesh(lo, hi, grid.points_per_dim)
        binds = [L.bind_second(problem, p) for p in base]
        half_dim = 0.5 * problem.dim
        if match_radius is None:
            match_radius = 0.05 * problem.theta_space.diameter
        for k in schedule:
            vals = np.array(
                [ev.value_with_bound(b, k, p) for p, b in zip(base, binds)]
            )
            est = grid_argmax(
                lambda t, _k=k: ev.value(_k, t),
                lo,
                hi,
                grid,
                plateau_tol,
                vectorized=False,
                initial=(base, vals),
            )
            estimates.append(est)
            max_gains.append(float(np.max(vals)))
            scaled.append(float(np.max(vals)) * k**half_dim)

    limit = setlim_detect(estimates, match_radius=match_radius, stability_window=stability_window)
    trace = ConvergenceTrace(
        tuple(schedule), tuple(estimates), tuple(max_gains), tuple(scaled), limit
    )
    last = estimates[-1]
    final = SetEstimate(
        points=limit.points,
        value=last.value,
        plateau_tol=last.plateau_tol,
        resolution=last.resolution,
        plateau=last.plateau,
        flagged_empty=limit.diverged or len(limit.points) == 0,
    )
    return trace, final
