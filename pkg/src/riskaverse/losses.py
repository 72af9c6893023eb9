"""Losses, attenuations, and the likelihood-ratio profile.

The well-behaved losses here are f-divergences between induced observation
distributions (squared Hellinger chief among them). Alongside them live the
deliberately ill-behaved constructions used by the necessity experiments:
losses engineered so that the risk-averse limit lands on a different
estimator, or so that a specific axiom fails. Attenuations shape the gain
A(k L) whose expectation the estimators maximize.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import LossError
from .numerics import integrate_box
from .problems import EstimationProblem

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


# ---------------------------------------------------------------------------
# attenuations


@dataclass(frozen=True)
class Attenuation:
    """Nonincreasing C^1 weight on [0, inf) with A(0)=1 and a hard cutoff."""

    eval: Callable
    threshold_a0: float
    name: str

    def __call__(self, a):
        return self.eval(a)


def _truncated_quadratic(a):
    a = np.asarray(a, dtype=float)
    return np.where(a < 1.0, (1.0 - np.minimum(a, 1.0)) ** 2, 0.0)


def _raised_cosine(a):
    a = np.asarray(a, dtype=float)
    return np.where(a < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(a, 1.0))), 0.0)


truncated_quadratic = Attenuation(_truncated_quadratic, 1.0, "truncated_quadratic")
raised_cosine = Attenuation(_raised_cosine, 1.0, "raised_cosine")

ATTENUATIONS = {
    "truncated_quadratic": truncated_quadratic,
    "raised_cosine": raised_cosine,
}


def validate_attenuation(att: Attenuation, probes: int = 2001) -> None:
    """A(0)=1, nonincreasing, zero past the cutoff, C^1 across it."""
    a0 = att.threshold_a0
    if a0 <= 0:
        raise LossError("attenuation threshold must be positive")
    grid = np.linspace(0.0, 2.0 * a0, probes)
    vals = np.asarray(att.eval(grid), dtype=float)
    if abs(vals[0] - 1.0) > 1e-12:
        raise LossError(f"attenuation {att.name!r} has A(0) = {vals[0]!r}, expected 1")
    if np.any(np.diff(vals) > 1e-12):
        raise LossError(f"attenuation {att.name!r} increases somewhere")
    beyond = grid >= a0
    if np.any(np.abs(vals[beyond]) > 0.0):
        raise LossError(f"attenuation {att.name!r} is nonzero beyond its threshold")
    h = 1e-4 * a0
    left = (3 * att.eval(a0) - 4 * att.eval(a0 - h) + att.eval(a0 - 2 * h)) / (2 * h)
    right = (-3 * att.eval(a0) + 4 * att.eval(a0 + h) - att.eval(a0 + 2 * h)) / (2 * h)
    if abs(float(left) - float(right)) > 1e-6:
        raise LossError(
            f"attenuation {att.name!r} derivative jumps at the threshold: "
            f"{float(left):g} vs {float(right):g}"
        )


# ---------------------------------------------------------------------------
# loss wrapper


@dataclass(frozen=True, eq=False)
class Loss:
    """A loss L(theta1, theta2) >= 0 with L(theta, theta) = 0.

    eval takes (problem, theta1, theta2). likelihood_based marks losses that
    depend on parameters only through their induced observation
    distributions. batch1, when present, vectorizes over the first argument.
    """

    name: str
    eval: Callable
    likelihood_based: bool = False
    batch1: Callable | None = None
    binder: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, problem, theta1, theta2) -> float:
        return float(self.eval(problem, theta1, theta2))

    def bind_second(self, problem, theta2) -> Callable:
        """Closure mapping stacked theta1 points to loss values.

        A loss may supply `binder` to hoist work that depends only on the
        bound point (e.g. the reference density on a quadrature rule).
        """
        t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
        if self.binder is not None:
            return self.binder(problem, t2)
        if self.batch1 is not None:
            return lambda thetas: np.asarray(
                self.batch1(problem, np.atleast_2d(thetas), t2), dtype=float
            )
        return lambda thetas: np.array(
            [float(self.eval(problem, t, t2)) for t in np.atleast_2d(thetas)]
        )


# ---------------------------------------------------------------------------
# F-functions and f-divergences


def f_one_minus_sqrt(r):
    return 1.0 - np.sqrt(np.asarray(r, dtype=float))


def f_half_tv(r):
    return 0.5 * np.abs(np.asarray(r, dtype=float) - 1.0)


def f_half_chi2(r):
    return 0.5 * (np.asarray(r, dtype=float) - 1.0) ** 2


def f_kl(r):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0.0, r * np.log(np.maximum(r, 1e-300)), 0.0)
    return out


F_FUNCTIONS = {
    "one_minus_sqrt": f_one_minus_sqrt,
    "half_tv": f_half_tv,
    "half_chi2": f_half_chi2,
    "kl": f_kl,
}


def _f_values(F_fn, r: np.ndarray) -> np.ndarray:
    out = np.asarray(F_fn(r), dtype=float)
    if out.shape != r.shape:
        out = np.array([float(F_fn(float(v))) for v in r.ravel()]).reshape(r.shape)
    return out


def _check_f_function(F_fn) -> None:
    at1 = float(_f_values(F_fn, np.array([1.0]))[0])
    if abs(at1) > 1e-12:
        raise LossError(f"F-function must vanish at 1, got {at1!r}")
    probes = np.concatenate([[0.0], np.geomspace(1e-3, 8.0, 25)])
    vals = _f_values(F_fn, probes)
    if not np.all(np.isfinite(vals)):
        raise LossError("F-function is non-finite on the probe grid")
    mids = 0.5 * (probes[:-1] + probes[1:])
    midvals = _f_values(F_fn, mids)
    chords = 0.5 * (vals[:-1] + vals[1:])
    if np.any(midvals > chords + 1e-12):
        raise LossError("F-function fails convexity on a probe triple")


def f_divergence(F_fn, problem: EstimationProblem, theta1, theta2) -> float:
    """Integral of F(p/q) against q, p and q the induced distributions."""
    _check_f_function(F_fn)
    return _f_divergence_unchecked(F_fn, problem, theta1, theta2)


def _f_divergence_unchecked(F_fn, problem, theta1, theta2) -> float:
    t1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    if problem.obs_space.is_discrete:
        p = problem.support_masses(t1)
        q = problem.support_masses(t2)
        vals = _f_values(F_fn, p / q) * q
        return float(np.sum(np.sort(vals)))

    def integrand(xs):
        p = problem.densities_at(t1, xs)
        q = np.maximum(problem.densities_at(t2, xs), 1e-300)
        return _f_values(F_fn, p / q) * q

    res = integrate_box(
        integrand,
        problem.obs_space.lower,
        problem.obs_space.upper,
        tol=1e-10,
        vectorized=True,
        anchors=problem.obs_space.anchors or None,
        min_cells_per_dim=4,
    )
    return float(res.value)


def hellinger_sq(problem: EstimationProblem, theta1, theta2) -> float:
    """Squared Hellinger distance between the induced distributions."""
    t1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    if problem.obs_space.is_discrete:
        p = problem.support_masses(t1)
        q = problem.support_masses(t2)
        bc = float(np.sum(np.sort(np.sqrt(p * q))))
        return max(0.0, 1.0 - bc)

    def integrand(xs):
        p = problem.densities_at(t1, xs)
        q = problem.densities_at(t2, xs)
        return np.sqrt(np.maximum(p * q, 0.0))

    res = integrate_box(
        integrand,
        problem.obs_space.lower,
        problem.obs_space.upper,
        tol=1e-10,
        vectorized=True,
        anchors=problem.obs_space.anchors or None,
        min_cells_per_dim=4,
    )
    return max(0.0, 1.0 - float(res.value))


def linear_bound_check(F_fn, A: float, B: float, probe_range) -> bool:
    """True when |F(r)| <= A r + B across the probes."""
    r = np.asarray(probe_range, dtype=float)
    vals = np.abs(_f_values(F_fn, r))
    return bool(np.all(vals <= A * r + B + 1e-12))


# ---------------------------------------------------------------------------
# elementary losses


def quadratic_loss(problem: EstimationProblem, theta1, theta2) -> float:
    t1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    d = t1 - t2
    return float(np.dot(d, d))


def weighted_ml_loss(problem: EstimationProblem, theta1, theta2) -> float:
    """Squared distance weighted by the prior density at the second argument.

    The weight f(theta2)^(2/M) is exactly what cancels the prior out of the
    limiting estimator, turning it into maximum likelihood.
    """
    t1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    m = t2.size
    w = float(problem.prior(t2)) ** (2.0 / m)
    d = t1 - t2
    return w * float(np.dot(d, d))


# ---------------------------------------------------------------------------
# relabeling-sensitive losses


def iro_violating_loss(problem: EstimationProblem, theta1, theta2) -> float:
    """Expected squared density gap, E_q[(p - q)^2]: not a profile functional."""
    if problem.obs_space.is_discrete:
        raise LossError(
            "density-gap loss needs continuous observations; "
            "use iro_violating_loss_masses on finite supports"
        )
    t1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    t2 = np.atleast_1d(np.asarray(theta2, dtype=float))

    def integrand(xs):
        p = problem.densities_at(t1, xs)
        q = problem.densities_at(t2, xs)
        return q * (p - q) ** 2

    res = integrate_box(
        integrand,
        problem.obs_space.lower,
        problem.obs_space.upper,
        tol=1e-10,
        vectorized=True,
        anchors=problem.obs_space.anchors or None,
        min_cells_per_dim=4,
    )
    return float(res.value)


def iro_violating_loss_masses(problem: EstimationProblem, theta1, theta2) -> float:
    """Finite-support analogue of the density-gap loss: sum of q (p - q)^2."""
    if not problem.obs_space.is_discrete:
        raise LossError("mass-gap loss needs a finite observation support")
    p = problem.support_masses(np.atleast_1d(theta1))
    q = problem.support_masses(np.atleast_1d(theta2))
    return float(np.sum(np.sort(q * (p - q) ** 2)))


def _chain_groups(problem: EstimationProblem):
    """Per-coordinate grouping of the support by (prefix, value) and prefix."""
    cached = problem.meta.get("_chain_groups")
    if cached is not None:
        return cached
    sup = problem.obs_space.support_array()
    dims = sup.shape[1]
    groups = []
    for k in range(dims):
        _, cell_idx = np.unique(sup[:, : k + 1], axis=0, return_inverse=True)
        _, prefix_idx = np.unique(sup[:, :k], axis=0, return_inverse=True)
        cell_idx = np.asarray(cell_idx).ravel()
        prefix_idx = np.asarray(prefix_idx).ravel()
        n_cells = int(cell_idx.max()) + 1
        # which prefix each (prefix, value) cell belongs to
        cell_prefix = np.zeros(n_cells, dtype=int)
        cell_prefix[cell_idx] = prefix_idx
        groups.append((cell_idx, prefix_idx, cell_prefix, int(prefix_idx.max()) + 1))
    problem.meta["_chain_groups"] = groups
    return groups


def chain_conditional_loss(problem: EstimationProblem, theta1, theta2) -> float:
    """Coordinate-chained mass-gap loss.

    For each observation coordinate, compares the conditional distribution of
    that coordinate given its prefix under the two parameters with the
    mass-gap loss, averaging prefixes under the second parameter. On
    exchangeable binary trials this collapses to n (p - q)^2, so its Hessian
    is constant while the Fisher information is not.
    """
    if not problem.obs_space.is_discrete:
        raise LossError("chain loss needs a finite observation support")
    p = problem.support_masses(np.atleast_1d(theta1))
    q = problem.support_masses(np.atleast_1d(theta2))
    total = 0.0
    for cell_idx, prefix_idx, cell_prefix, n_prefix in _chain_groups(problem):
        p_cell = np.bincount(cell_idx, weights=p)
        q_cell = np.bincount(cell_idx, weights=q)
        p_pref = np.bincount(prefix_idx, weights=p, minlength=n_prefix)
        q_pref = np.bincount(prefix_idx, weights=q, minlength=n_prefix)
        p_cond = p_cell / p_pref[cell_prefix]
        q_cond = q_cell / q_pref[cell_prefix]
        gaps = q_cond * (p_cond - q_cond) ** 2
        per_prefix = np.bincount(cell_prefix, weights=gaps, minlength=n_prefix)
        total += float(np.dot(q_pref, per_prefix))
    return total


# ---------------------------------------------------------------------------
# prior-mass weighted loss


def _sublevel_prior_mass(problem: EstimationProblem, base: Loss, t: float, theta2) -> float:
    """Prior mass of the base-loss sublevel set around theta2."""
    t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    if problem.is_finite_theta:
        pts = problem.finite_points_array()
        masses = problem.finite_prior_masses()
        keep = np.array([float(base.eval(problem, p, t2)) <= t for p in pts])
        return float(np.sum(masses[keep]))
    space = problem.theta_space
    if space.dim != 1:
        raise LossError("sublevel prior mass is implemented for 1-d parameter spaces")
    lo, hi = float(space.lower[0]), float(space.upper[0])
    grid = np.linspace(lo, hi, 513)
    g = np.array([float(base.eval(problem, np.array([v]), t2)) - t for v in grid])
    inside = g <= 0.0
    # refine each crossing by bisection
    edges = [lo]
    for i in range(len(grid) - 1):
        if inside[i] != inside[i + 1]:
            a, b = grid[i], grid[i + 1]
            for _ in range(60):
                m = 0.5 * (a + b)
                gm = float(base.eval(problem, np.array([m]), t2)) - t
                if (gm <= 0.0) == inside[i]:
                    a = m
                else:
                    b = m
            edges.append(0.5 * (a + b))
    edges.append(hi)
    mass = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0.0:
            continue
        mid = 0.5 * (a + b)
        if float(base.eval(problem, np.array([mid]), t2)) - t <= 0.0:
            res = integrate_box(
                problem.prior_values, [a], [b], tol=1e-10, vectorized=True
            )
            mass += res.value
    return float(min(max(mass, 0.0), 1.0))


def default_iia_threshold(problem: EstimationProblem, base: Loss, probes: int = 6) -> float:
    """Median base-loss value over a probe grid of parameter pairs."""
    if problem.is_finite_theta:
        pts = problem.finite_points_array()
    else:
        pts = problem.theta_space.interior_grid(probes)
    vals = [
        float(base.eval(problem, pts[i], pts[j]))
        for i in range(len(pts))
        for j in range(len(pts))
        if i != j
    ]
    if not vals:
        raise LossError("need at least two parameter probes to set a threshold")
    return float(np.median(vals))


def iia_violating_loss(
    problem: EstimationProblem, base: Loss, t: float, theta1, theta2
) -> float:
    """Base loss reweighted by the squared prior mass near the second argument.

    The weight P(theta2) is the prior probability that the base loss to
    theta2 stays below t, so the loss value depends on how much of the
    parameter space sits nearby: trimming far-away alternatives changes it.
    """
    if t <= 0.0:
        raise LossError("threshold must be positive")
    w = _sublevel_prior_mass(problem, base, t, theta2)
    return w * w * float(base.eval(problem, theta1, theta2))


# ---------------------------------------------------------------------------
# rate-recovery loss


def recovered_bernoulli_rate(masses) -> float:
    """Rate read back from a full binary-trials mass vector.

    The product of all 2^n outcome masses equals (p(1-p))^(n 2^(n-1)), so the
    geometric mean pins down p(1-p), and rates at or below 1/2 are recovered
    exactly.
    """
    m = np.asarray(masses, dtype=float).ravel()
    n = int(round(math.log2(m.size)))
    if m.size < 2 or 2**n != m.size:
        raise LossError("mass vector length must be a power of two")
    if np.any(m <= 0.0):
        raise LossError("masses must be positive to recover the rate")
    pq = math.exp((2.0 / n) * float(np.mean(np.log(m))))
    return 0.5 - math.sqrt(max(0.25 - pq, 0.0))


def marginalize_superfluous(problem: EstimationProblem, masses) -> np.ndarray:
    """Sum augmentation coordinates back out of a mass vector."""
    m = np.asarray(masses, dtype=float)
    prob = problem
    while "augmented_from" in prob.meta:
        k = len(prob.meta["noise"])
        m = m.reshape(-1, k).sum(axis=1)
        prob = prob.meta["augmented_from"]
    return m


class _CumulativeIntegral:
    """Cumulative integral of a positive weight over an interval.

    Stores exact per-cell Gauss-Legendre integrals at 2^11 cell edges; point
    evaluation finishes the partial cell with another 15-node rule, so values
    are accurate to machine precision for smooth weights.
    """

    def __init__(self, weight: Callable, lo: float, hi: float, cells: int = 2048):
        self.weight = weight
        self.edges = np.linspace(lo, hi, cells + 1)
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        halfs = 0.5 * np.diff(self.edges)
        nodes = mids[:, None] + halfs[:, None] * _GL_NODES[None, :]
        vals = self._weight_values(nodes.ravel()).reshape(nodes.shape)
        cell_ints = halfs * (vals @ _GL_WEIGHTS)
        self.cum = np.concatenate([[0.0], np.cumsum(cell_ints)])

    def _weight_values(self, points: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.weight(points), dtype=float)
        if vals.shape != points.shape:
            vals = np.array([float(self.weight(float(v))) for v in points])
        if np.any(~np.isfinite(vals)) or np.any(vals <= 0.0):
            raise LossError("weight function must be positive and finite on its interval")
        return vals

    def __call__(self, x: float) -> float:
        x = float(min(max(x, self.edges[0]), self.edges[-1]))
        idx = int(np.searchsorted(self.edges, x, side="right") - 1)
        idx = min(max(idx, 0), len(self.edges) - 2)
        a = self.edges[idx]
        if x <= a:
            return float(self.cum[idx])
        mid, half = 0.5 * (a + x), 0.5 * (x - a)
        vals = self._weight_values(mid + half * _GL_NODES)
        return float(self.cum[idx] + half * float(vals @ _GL_WEIGHTS))


# recovered rates live in (0, 1/2] no matter how the problem is parameterized
_RATE_INTERVAL = (0.0, 0.5)


def _g_table(problem: EstimationProblem, F_weight, bounds=None) -> _CumulativeIntegral:
    if bounds is None:
        bounds = (float(problem.theta_space.lower[0]), float(problem.theta_space.upper[0]))
    tables = problem.meta.setdefault("_g_tables", [])
    for fn, lo, hi, table in tables:
        if fn is F_weight and (lo, hi) == bounds:
            return table
    table = _CumulativeIntegral(F_weight, *bounds)
    tables.append((F_weight, bounds[0], bounds[1], table))
    if len(tables) > 8:
        tables.pop(0)
    return table


def semicontinuous_g_loss(
    problem: EstimationProblem, F_weight, theta1, theta2
) -> float:
    """Half squared gap of an accumulated weight between two rates.

    G grows from the left edge of the rate interval at speed F_weight, so
    choosing the weight reshapes which estimator the risk-averse limit picks.
    """
    if problem.theta_space.dim != 1:
        raise LossError("rate-accumulation loss is one-dimensional")
    table = _g_table(problem, F_weight)
    g1 = table(float(np.atleast_1d(theta1)[0]))
    g2 = table(float(np.atleast_1d(theta2)[0]))
    return 0.5 * (g1 - g2) ** 2


def g_loss_through_recovery(
    problem: EstimationProblem, F_weight, mode: str = "literal"
) -> Loss:
    """The rate-accumulation loss evaluated through rate recovery.

    Rates are read back from the observation mass vectors rather than taken
    from the parameter coordinates. "literal" recovers from whatever support
    the problem currently has; "structural" first marginalizes augmentation
    coordinates recorded by the problem's construction.
    """
    if mode not in ("literal", "structural"):
        raise LossError(f"unknown recovery mode {mode!r}")

    def rate_of(prob, theta):
        # cached on the problem: the same loss may run on several supports
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        cache = prob.meta.setdefault("_recovered_rates", {})
        key = (mode, t.tobytes())
        hit = cache.get(key)
        if hit is not None:
            return hit
        masses = prob.support_masses(t)
        if mode == "structural":
            masses = marginalize_superfluous(prob, masses)
        rate = recovered_bernoulli_rate(masses)
        if len(cache) > 4096:
            cache.clear()
        cache[key] = rate
        return rate

    def eval_fn(prob, theta1, theta2):
        # accumulate over the rate range, not the coordinate box: recovery may
        # run on a reparameterized family whose box is in other units, and the
        # origin shift this causes cancels in the difference below
        table = _g_table(prob, F_weight, _RATE_INTERVAL)
        return 0.5 * (table(rate_of(prob, theta1)) - table(rate_of(prob, theta2))) ** 2

    return Loss(
        name=f"semicontinuous_g[{mode}]",
        eval=eval_fn,
        likelihood_based=True,
        meta={"mode": mode},
    )


# ---------------------------------------------------------------------------
# likelihood-ratio profile


@dataclass(frozen=True)
class RNProfile:
    """Step quantile function of the likelihood ratio P/Q under Q."""

    breakpoints: tuple
    values: tuple

    def mean(self) -> float:
        widths = np.diff(np.concatenate([[0.0], np.asarray(self.breakpoints)]))
        return float(np.dot(widths, np.asarray(self.values)))


def rn_profile(P, Q) -> RNProfile:
    p = np.asarray(P, dtype=float).ravel()
    q = np.asarray(Q, dtype=float).ravel()
    if p.shape != q.shape:
        raise LossError("distributions must share a support")
    if np.any(q <= 0.0) or np.any(p < 0.0):
        raise LossError("profile needs q positive and p nonnegative")
    r = p / q
    order = np.argsort(r, kind="stable")
    r_sorted = r[order]
    q_sorted = q[order]
    values: list[float] = []
    masses: list[float] = []
    for rv, qv in zip(r_sorted, q_sorted):
        if values and abs(rv - values[-1]) <= 1e-12:
            masses[-1] += qv
        else:
            values.append(float(rv))
            masses.append(float(qv))
    breakpoints = np.cumsum(masses)
    breakpoints[-1] = float(np.sum(q))
    return RNProfile(tuple(float(b) for b in breakpoints), tuple(values))


# ---------------------------------------------------------------------------
# gains


def gain_k(A: Attenuation, L: Loss, k: float, problem, theta1, theta2) -> float:
    """Attenuated gain A(k L); 1 at zero loss, 0 once k L passes the cutoff."""
    if k <= 0.0:
        raise LossError("k must be positive")
    return float(A.eval(k * float(L.eval(problem, theta1, theta2))))


# ---------------------------------------------------------------------------
# loss objects and registry


def _obs_rule(problem, cells_per_dim: int = 96):
    """Fixed composite Gauss-Legendre rule over the observation window.

    Shared by batched loss evaluations where per-pair adaptive quadrature
    would be wasteful; anchors become extra cell edges. Cached per problem.
    """
    cached = problem.meta.get("_obs_rule")
    if cached is not None:
        return cached
    lo = problem.obs_space.lower
    hi = problem.obs_space.upper
    axes_nodes, axes_weights = [], []
    for d in range(lo.size):
        edges = np.linspace(lo[d], hi[d], cells_per_dim + 1)
        interior = [a for a in problem.obs_space.anchors[d] if lo[d] < a < hi[d]] if problem.obs_space.anchors else []
        if interior:
            edges = np.unique(np.concatenate([edges, interior]))
        mids = 0.5 * (edges[:-1] + edges[1:])
        halfs = 0.5 * np.diff(edges)
        axes_nodes.append((mids[:, None] + halfs[:, None] * _GL_NODES[None, :]).ravel())
        axes_weights.append((halfs[:, None] * _GL_WEIGHTS[None, :]).ravel())
    if lo.size == 1:
        nodes = axes_nodes[0][:, None]
        weights = axes_weights[0]
    else:
        grids = np.meshgrid(*axes_nodes, indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        wgrids = np.meshgrid(*axes_weights, indexing="ij")
        weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
    rule = (nodes, weights)
    problem.meta["_obs_rule"] = rule
    return rule


def _hellinger_batch1(problem, thetas, t2):
    if problem.obs_space.is_discrete:
        p = problem.masses_over(thetas)
        q = problem.support_masses(t2)
        bc = np.sqrt(p * q[None, :]).sum(axis=1)
        return np.maximum(0.0, 1.0 - bc)
    nodes, weights = _obs_rule(problem)
    q = problem.densities_at(t2, nodes)
    wq = weights * np.sqrt(np.maximum(q, 0.0))
    p = problem.densities_matrix(np.atleast_2d(thetas), nodes)
    return np.maximum(0.0, 1.0 - np.sqrt(np.maximum(p, 0.0)) @ wq)


def quadratic() -> Loss:
    return Loss(
        name="quadratic",
        eval=quadratic_loss,
        batch1=lambda prob, thetas, t2: np.sum(
            (np.atleast_2d(thetas) - t2[None, :]) ** 2, axis=1
        ),
    )


def weighted_ml() -> Loss:
    def batch1(prob, thetas, t2):
        w = float(prob.prior(t2)) ** (2.0 / t2.size)
        return w * np.sum((np.atleast_2d(thetas) - t2[None, :]) ** 2, axis=1)

    return Loss(name="weighted_ml", eval=weighted_ml_loss, batch1=batch1)


def _hellinger_binder(problem, t2):
    if problem.obs_space.is_discrete:
        sq = np.sqrt(problem.support_masses(t2))

        def bound(thetas):
            p = problem.masses_over(np.atleast_2d(thetas))
            return np.maximum(0.0, 1.0 - np.sqrt(p) @ sq)

        return bound
    nodes, weights = _obs_rule(problem)
    wq = weights * np.sqrt(np.maximum(problem.densities_at(t2, nodes), 0.0))

    def bound(thetas):
        p = problem.densities_matrix(np.atleast_2d(thetas), nodes)
        return np.maximum(0.0, 1.0 - np.sqrt(np.maximum(p, 0.0)) @ wq)

    return bound


def hellinger() -> Loss:
    return Loss(
        name="hellinger_sq",
        eval=hellinger_sq,
        likelihood_based=True,
        batch1=_hellinger_batch1,
        binder=_hellinger_binder,
    )


def f_divergence_loss(F_name: str) -> Loss:
    if F_name not in F_FUNCTIONS:
        raise LossError(f"unknown F-function {F_name!r}; available: {sorted(F_FUNCTIONS)}")
    F_fn = F_FUNCTIONS[F_name]
    if F_name != "kl":
        _check_f_function(F_fn)

    def batch1(prob, thetas, t2):
        if prob.obs_space.is_discrete:
            p = prob.masses_over(thetas)
            q = prob.support_masses(t2)
            return (_f_values(F_fn, p / q[None, :]) * q[None, :]).sum(axis=1)
        return np.array(
            [_f_divergence_unchecked(F_fn, prob, t, t2) for t in np.atleast_2d(thetas)]
        )

    return Loss(
        name=f"f_divergence[{F_name}]",
        eval=lambda prob, t1, t2: _f_divergence_unchecked(F_fn, prob, t1, t2),
        likelihood_based=True,
        batch1=batch1,
        meta={"F": F_name},
    )


def iro_violating() -> Loss:
    return Loss(name="iro_violating", eval=iro_violating_loss, likelihood_based=True)


def iro_violating_masses() -> Loss:
    def batch1(prob, thetas, t2):
        p = prob.masses_over(thetas)
        q = prob.support_masses(t2)
        return (q[None, :] * (p - q[None, :]) ** 2).sum(axis=1)

    return Loss(
        name="iro_violating_masses",
        eval=iro_violating_loss_masses,
        likelihood_based=True,
        batch1=batch1,
    )


def chain_conditional() -> Loss:
    return Loss(
        name="chain_conditional",
        eval=chain_conditional_loss,
        likelihood_based=True,
    )


def iia_violating(problem: EstimationProblem, base: Loss | None = None, t: float | None = None) -> Loss:
    """IIA counterexample loss with the prior-mass weight cached per theta2."""
    base = base or quadratic()
    if t is None:
        t = default_iia_threshold(problem, base)

    def weight(prob, t2):
        # cached on the problem: the weight is a functional of its prior
        cache = prob.meta.setdefault("_iia_weights", {})
        key = (t, t2.tobytes())
        hit = cache.get(key)
        if hit is None:
            hit = _sublevel_prior_mass(prob, base, t, t2)
            if len(cache) > 4096:
                cache.clear()
            cache[key] = hit
        return hit

    def eval_fn(prob, theta1, theta2):
        t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
        return weight(prob, t2) ** 2 * float(base.eval(prob, theta1, t2))

    def batch1(prob, thetas, t2):
        w = weight(prob, t2)
        return w * w * base.bind_second(prob, t2)(thetas)

    return Loss(
        name="iia_violating",
        eval=eval_fn,
        likelihood_based=base.likelihood_based,
        batch1=batch1,
        meta={"t": t, "base": base.name},
    )


def semicontinuous_g(F_weight=None) -> Loss:
    F_fn = F_weight if F_weight is not None else (lambda u: np.ones_like(np.asarray(u, dtype=float)))

    def batch1(prob, thetas, t2):
        table = _g_table(prob, F_fn)
        g2 = table(float(t2[0]))
        return np.array([0.5 * (table(float(t[0])) - g2) ** 2 for t in np.atleast_2d(thetas)])

    return Loss(
        name="semicontinuous_g",
        eval=lambda prob, t1, t2: semicontinuous_g_loss(prob, F_fn, t1, t2),
        likelihood_based=True,
        batch1=batch1,
    )


def make_loss(name: str, problem: EstimationProblem | None = None, **params) -> Loss:
    """Build a loss by registry name; some losses need the problem up front."""
    if name == "quadratic":
        return quadratic()
    if name == "weighted_ml":
        return weighted_ml()
    if name == "hellinger_sq":
        return hellinger()
    if name == "f_divergence":
        return f_divergence_loss(params.get("F", "one_minus_sqrt"))
    if name == "iro_violating":
        return iro_violating()
    if name == "iro_violating_masses":
        return iro_violating_masses()
    if name == "chain_conditional":
        return chain_conditional()
    if name == "iia_violating":
        if problem is None:
            raise LossError("iia_violating needs the problem to set its threshold")
        base = make_loss(params["base"], problem) if "base" in params else None
        return iia_violating(problem, base=base, t=params.get("t"))
    if name == "semicontinuous_g":
        fw = params.get("F_weight")
        if isinstance(fw, str):
            if fw == "one":
                fw = None
            elif fw == "two_theta":
                fw = lambda u: 2.0 * np.asarray(u, dtype=float)
            else:
                raise LossError(f"unknown weight shorthand {fw!r}")
        return semicontinuous_g(fw)
    raise LossError(f"unknown loss {name!r}")


LOSS_NAMES = (
    "quadratic",
    "weighted_ml",
    "hellinger_sq",
    "f_divergence",
    "iro_violating",
    "iro_violating_masses",
    "chain_conditional",
    "iia_violating",
    "semicontinuous_g",
)
