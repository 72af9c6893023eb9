"""Estimation problems: priors, likelihood families, and their transforms.

A problem couples a prior over a box-shaped parameter space with a likelihood
family over a continuous or finite observation space. Parameter spaces with
finitely many admissible points carry those points explicitly; everything
else treats the box as a continuum. Transforms (reparameterization,
observation change of variables, superfluous augmentation) return new
problems wired to the originals, preserving the fast vectorized evaluation
paths where they exist.
"""
from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidProblem, UnknownCatalogId, UnsupportedProblem
from .numerics import integrate_box

_MASS_TOL = 1e-9
_DENSITY_TOL = 1e-6
_CACHE_CAP = 256


@dataclass(frozen=True, eq=False)
class ParameterSpace:
    """An axis-aligned box of admissible parameter values."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidProblem("parameter bounds must be 1-d and equally shaped")
        if np.any(hi < lo):
            raise InvalidProblem("upper bound below lower bound")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.width))

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def interior_grid(self, per_dim: int = 5) -> np.ndarray:
        """Midpoint probe grid: never touches the boundary."""
        axes = [
            lo + (np.arange(per_dim) + 0.5) * (hi - lo) / per_dim if hi > lo else np.full(per_dim, lo)
            for lo, hi in zip(self.lower, self.upper)
        ]
        if self.dim == 1:
            return axes[0][:, None]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True, eq=False)
class ObservationSpace:
    """Either a finite support of points or a box-truncated continuum.

    Continuous spaces carry explicit quadrature bounds (the modeled space may
    be unbounded; the window is where this library integrates) and optional
    per-axis anchor coordinates marking narrow features for the quadrature's
    initial subdivision.
    """

    kind: str
    dim: int
    support: tuple | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    anchors: tuple = ()

    @classmethod
    def continuous(cls, lower, upper, anchors: Sequence[Sequence[float]] | None = None):
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InvalidProblem("continuous observation window must have positive width")
        anch = tuple(tuple(float(a) for a in ax) for ax in anchors) if anchors else tuple(
            () for _ in range(lo.size)
        )
        if len(anch) != lo.size:
            raise InvalidProblem("anchors must give one sequence per observation axis")
        return cls("continuous", lo.size, None, lo, hi, anch)

    @classmethod
    def discrete(cls, points: Sequence):
        pts = tuple(np.atleast_1d(np.asarray(p, dtype=float)) for p in points)
        if not pts:
            raise InvalidProblem("discrete support must be nonempty")
        dim = pts[0].size
        if any(p.size != dim for p in pts):
            raise InvalidProblem("support points must share a dimension")
        stacked = np.stack(pts)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.max(np.abs(stacked[i] - stacked[j])) <= 1e-12:
                    raise InvalidProblem("support points must be distinct")
        return cls("discrete", dim, pts, None, None, ())

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    def support_array(self) -> np.ndarray:
        if not self.is_discrete:
            raise UnsupportedProblem("continuous observation space has no support list")
        return np.stack(self.support)


@dataclass(frozen=True, eq=False)
class Diffeomorphism:
    """A smooth invertible map with an explicit inverse and Jacobian.

    jacobian_det evaluates |det DF| at a point of the source space and must
    be nonzero wherever the map is used. `vectorized` marks callables that
    accept stacked (n, dim) arrays.
    """

    forward: Callable
    inverse: Callable
    jacobian_det: Callable
    name: str = "diffeo"
    vectorized: bool = False

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self._map(self.forward, points)

    def unapply(self, points: np.ndarray) -> np.ndarray:
        return self._map(self.inverse, points)

    def _map(self, fn, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.vectorized:
            out = np.atleast_2d(np.asarray(fn(pts), dtype=float))
        else:
            out = np.stack([np.atleast_1d(np.asarray(fn(p), dtype=float)) for p in pts])
        return out

    def check_roundtrip(self, points: np.ndarray, tol: float = 1e-9) -> None:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        back = self.unapply(self.apply(pts))
        worst = float(np.max(np.abs(back - pts)))
        if worst > tol:
            raise InvalidProblem(
                f"map {self.name!r} fails roundtrip: max |F^-1(F(x)) - x| = {worst:g}"
            )
        for p in pts:
            j = float(self.jacobian_det(np.atleast_1d(p)))
            if not math.isfinite(j) or abs(j) <= 0.0:
                raise InvalidProblem(f"map {self.name!r} has a vanishing Jacobian at {p}")


def identity_map(dim: int = 1) -> Diffeomorphism:
    return Diffeomorphism(
        forward=lambda p: p,
        inverse=lambda p: p,
        jacobian_det=lambda p: 1.0,
        name="identity",
        vectorized=True,
    )


def affine_map(scale: float, shift: float = 0.0) -> Diffeomorphism:
    if scale == 0.0:
        raise InvalidProblem("affine map needs a nonzero scale")
    a, b = float(scale), float(shift)
    return Diffeomorphism(
        forward=lambda p: a * p + b,
        inverse=lambda q: (q - b) / a,
        jacobian_det=lambda p: abs(a) ** np.atleast_1d(p).size,
        name=f"affine({a:g},{b:g})",
        vectorized=True,
    )


def cube_map() -> Diffeomorphism:
    """theta -> theta^3, valid on boxes excluding 0 (Jacobian vanishes there)."""
    return Diffeomorphism(
        forward=lambda p: p**3,
        inverse=lambda q: np.cbrt(q),
        jacobian_det=lambda p: float(np.prod(3.0 * np.atleast_1d(p) ** 2)),
        name="cube",
        vectorized=True,
    )


def exp_map() -> Diffeomorphism:
    """Coordinatewise exponential; Jacobian positive everywhere."""
    return Diffeomorphism(
        forward=lambda p: np.exp(p),
        inverse=lambda q: np.log(q),
        jacobian_det=lambda p: float(np.exp(np.sum(np.atleast_1d(p)))),
        name="exp",
        vectorized=True,
    )


@dataclass(eq=False)
class EstimationProblem:
    """Prior + likelihood family over a parameter box and observation space.

    theta_points, when given, lists the finitely many admissible parameters
    (the box is their hull) and `prior` returns masses at those points;
    otherwise `prior` is a density over the box. `likelihood(theta, x)` is a
    mass for discrete observation spaces and a density for continuous ones.

    Optional fast paths (all may be None):
      mass_fn(theta)            -> mass vector over the discrete support
      mass_batch(thetas)        -> (n_thetas, support) mass matrix
      theta_batch(thetas, x)    -> likelihood over stacked parameter points
      x_batch(theta, xs)        -> density over stacked observation points
      xt_batch(thetas, xs)      -> (n_thetas, n_xs) density matrix
      prior_batch(thetas)       -> prior over stacked parameter points

    Instances are treated as immutable after construction.
    """

    theta_space: ParameterSpace
    obs_space: ObservationSpace
    prior: Callable
    likelihood: Callable
    label: str
    theta_points: tuple | None = None
    mass_fn: Callable | None = None
    mass_batch: Callable | None = None
    theta_batch: Callable | None = None
    x_batch: Callable | None = None
    xt_batch: Callable | None = None
    prior_batch: Callable | None = None
    meta: dict = field(default_factory=dict)
    _mass_cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    # -- basic structure ----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.theta_space.dim

    @property
    def is_finite_theta(self) -> bool:
        return self.theta_points is not None

    def finite_points_array(self) -> np.ndarray:
        if not self.is_finite_theta:
            raise UnsupportedProblem(f"problem {self.label!r} has a continuous parameter space")
        return np.stack(self.theta_points)

    def finite_prior_masses(self) -> np.ndarray:
        pts = self.finite_points_array()
        return np.array([float(self.prior(p)) for p in pts])

    # -- evaluation ---------------------------------------------------------

    def support_masses(self, theta) -> np.ndarray:
        """Likelihood vector over the discrete support, cached per theta."""
        if not self.obs_space.is_discrete:
            raise UnsupportedProblem("support_masses needs a discrete observation space")
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        key = t.tobytes()
        cached = self._mass_cache.get(key)
        if cached is not None:
            self._mass_cache.move_to_end(key)
            return cached
        if self.mass_fn is not None:
            masses = np.asarray(self.mass_fn(t), dtype=float)
        else:
            masses = np.array([float(self.likelihood(t, x)) for x in self.obs_space.support])
        masses.setflags(write=False)
        self._mass_cache[key] = masses
        if len(self._mass_cache) > _CACHE_CAP:
            self._mass_cache.popitem(last=False)
        return masses

    def masses_over(self, thetas: np.ndarray) -> np.ndarray:
        """(n_thetas, support) mass matrix; vectorized when the problem allows."""
        pts = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.mass_batch is not None:
            return np.asarray(self.mass_batch(pts), dtype=float)
        return np.stack([self.support_masses(p) for p in pts])

    def likelihoods_over(self, thetas: np.ndarray, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.theta_batch is not None:
            return np.asarray(self.theta_batch(pts, x), dtype=float)
        return np.array([float(self.likelihood(p, x)) for p in pts])

    def densities_at(self, theta, xs: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.x_batch is not None:
            return np.asarray(self.x_batch(np.atleast_1d(theta), pts), dtype=float)
        return np.array([float(self.likelihood(np.atleast_1d(theta), x)) for x in pts])

    def densities_matrix(self, thetas: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """(n_thetas, n_xs) density matrix; one call when xt_batch is available."""
        ts = np.atleast_2d(np.asarray(thetas, dtype=float))
        pts = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.xt_batch is not None:
            return np.asarray(self.xt_batch(ts, pts), dtype=float)
        return np.stack([self.densities_at(t, pts) for t in ts])

    def prior_values(self, thetas: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.prior_batch is not None:
            return np.asarray(self.prior_batch(pts), dtype=float)
        return np.array([float(self.prior(p)) for p in pts])


# ---------------------------------------------------------------------------
# validation


def validate_problem(problem: EstimationProblem, probes_per_dim: int = 4) -> None:
    """Construction invariants: positivity, normalization, distinctness."""
    space = problem.theta_space
    if problem.is_finite_theta:
        pts = problem.finite_points_array()
        for p in pts:
            if not space.contains(p, tol=1e-12):
                raise InvalidProblem(f"parameter point {p} escapes the declared box")
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.max(np.abs(pts[i] - pts[j])) <= 1e-12:
                    raise InvalidProblem("parameter points must be distinct")
        masses = problem.finite_prior_masses()
        if np.any(masses <= 0.0):
            raise InvalidProblem("prior mass must be positive at every parameter point")
        if abs(float(np.sum(masses)) - 1.0) > _MASS_TOL:
            raise InvalidProblem(
                f"prior masses sum to {float(np.sum(masses))!r}, expected 1 +/- {_MASS_TOL}"
            )
        probe_thetas = pts
    else:
        probe_thetas = space.interior_grid(probes_per_dim)
        pv = problem.prior_values(probe_thetas)
        if np.any(pv <= 0.0):
            raise InvalidProblem("prior density must be positive on the parameter box interior")

    # likelihood positivity and per-theta normalization
    if problem.obs_space.is_discrete:
        vectors = []
        for t in probe_thetas:
            masses = problem.support_masses(t)
            if np.any(masses <= 0.0):
                raise InvalidProblem(
                    f"likelihood must be positive on the declared support (theta={t})"
                )
            total = float(np.sum(np.sort(masses)))
            if abs(total - 1.0) > _MASS_TOL:
                raise InvalidProblem(
                    f"likelihood masses at theta={t} sum to {total!r}, "
                    f"expected 1 +/- {_MASS_TOL}"
                )
            vectors.append(masses)
    else:
        vectors = []
        thetas = probe_thetas[:: max(1, len(probe_thetas) // 3)]
        for t in thetas:
            res = integrate_box(
                lambda xs: problem.densities_at(t, xs),
                problem.obs_space.lower,
                problem.obs_space.upper,
                tol=1e-8,
                vectorized=True,
                anchors=problem.obs_space.anchors or None,
                min_cells_per_dim=4,
            )
            if abs(res.value - 1.0) > _DENSITY_TOL:
                raise InvalidProblem(
                    f"observation density at theta={t} integrates to {res.value!r}, "
                    f"expected 1 +/- {_DENSITY_TOL}"
                )
            probe_x = np.linspace(problem.obs_space.lower, problem.obs_space.upper, 9)[1:-1]
            vectors.append(problem.densities_at(t, probe_x))

    # distinct parameters must induce distinct distributions
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            if float(np.max(np.abs(vectors[i] - vectors[j]))) <= 1e-12:
                raise InvalidProblem(
                    "two distinct parameter probes induce the same distribution: "
                    f"{probe_thetas[i]} vs {probe_thetas[j]}"
                )


# ---------------------------------------------------------------------------
# posterior weights


def finite_posterior(problem: EstimationProblem, x) -> np.ndarray:
    """Normalized posterior masses over the problem's finite parameter points."""
    pts = problem.finite_points_array()
    prior = problem.finite_prior_masses()
    lik = np.array([float(problem.likelihood(p, x)) for p in pts])
    joint = prior * lik
    total = float(np.sum(joint))
    if total <= 0.0 or not math.isfinite(total):
        raise InvalidProblem("posterior normalizer vanished: observation impossible under model")
    return joint / total

def posterior_normalizer(problem: EstimationProblem, x, tol: float = 1e-9) -> float:
    """Evidence integral over the parameter box (continuous parameters)."""
    if problem.is_finite_theta:
        raise UnsupportedProblem("finite problems normalize by summation")

    def joint(thetas):
        return problem.prior_values(thetas) * problem.likelihoods_over(thetas, x)

    res = integrate_box(
        joint,
        problem.theta_space.lower,
        problem.theta_space.upper,
        tol=tol,
        vectorized=True,
        min_cells_per_dim=4,
    )
    if res.value <= 0.0 or not math.isfinite(res.value):
        raise InvalidProblem("posterior normalizer vanished: observation impossible under model")
    return res.value


def posterior_weight(problem: EstimationProblem, x, theta, tol: float = 1e-9) -> float:
    """Posterior mass (finite parameters) or density (continuous) at theta."""
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    if problem.is_finite_theta:
        pts = problem.finite_points_array()
        dists = np.max(np.abs(pts - t), axis=1)
        idx = int(np.argmin(dists))
        if dists[idx] > 1e-9:
            raise InvalidProblem(f"theta {t} is not one of the problem's parameter points")
        return float(finite_posterior(problem, x)[idx])
    z = posterior_normalizer(problem, x, tol=tol)
    return float(problem.prior(t)) * float(problem.likelihood(t, x)) / z


# ---------------------------------------------------------------------------
# transforms


def _image_box(diffeo: Diffeomorphism, space: ParameterSpace, probes: int = 33):
    """Axis-aligned hull of the image of a box under a smooth map."""
    axes = [
        np.linspace(lo, hi, probes) if hi > lo else np.array([lo])
        for lo, hi in zip(space.lower, space.upper)
    ]
    if space.dim == 1:
        pts = axes[0][:, None]
    else:
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    images = diffeo.apply(pts)
    return np.min(images, axis=0), np.max(images, axis=0)


def _public_meta(problem: EstimationProblem) -> dict:
    """Metadata worth inheriting across a transform.

    Keys starting with an underscore are per-problem computation caches
    (quadrature rules, weight tables); carrying them into a derived problem
    whose support, window, or prior differs would serve stale values.
    """
    return {k: v for k, v in problem.meta.items() if not k.startswith("_")}


def reparameterize(
    problem: EstimationProblem, diffeo: Diffeomorphism, validate: bool = True
) -> EstimationProblem:
    """Express the same inference problem in transformed parameter coordinates.

    The new prior is the pushforward density (change of variables through the
    inverse map); likelihoods are composed with the inverse. The new box is
    the axis-aligned hull of the image; points of the hull outside the true
    image get zero prior. The pushforward's total mass is checked to 1e-6
    when `validate` is set and recorded in meta["reparam_mass"].
    """
    space = problem.theta_space
    if validate:
        diffeo.check_roundtrip(space.interior_grid(4), tol=1e-9)

    if problem.is_finite_theta:
        new_pts = tuple(np.atleast_1d(p) for p in diffeo.apply(problem.finite_points_array()))
        old_pts = problem.finite_points_array()
        masses = problem.finite_prior_masses()

        def match_index(phi):
            cand = np.max(np.abs(np.stack(new_pts) - np.atleast_1d(phi)), axis=1)
            idx = int(np.argmin(cand))
            if cand[idx] > 1e-9:
                raise InvalidProblem("parameter not among the transformed points")
            return idx

        new_prior = lambda phi: float(masses[match_index(phi)])
        new_lik = lambda phi, x: float(problem.likelihood(old_pts[match_index(phi)], x))
        lo = np.min(np.stack(new_pts), axis=0)
        hi = np.max(np.stack(new_pts), axis=0)
        out = EstimationProblem(
            theta_space=ParameterSpace(lo, hi),
            obs_space=problem.obs_space,
            prior=new_prior,
            likelihood=new_lik,
            label=f"{problem.label}|{diffeo.name}",
            theta_points=new_pts,
            mass_fn=(lambda t: problem.support_masses(old_pts[match_index(t)]))
            if problem.obs_space.is_discrete
            else None,
            meta={**_public_meta(problem), "reparam_of": problem.label},
        )
        return out

    lo, hi = _image_box(diffeo, space)
    inv = diffeo.inverse if diffeo.vectorized else None

    def pull_back(phis):
        pts = np.atleast_2d(np.asarray(phis, dtype=float))
        src = diffeo.unapply(pts)
        inside = np.all(
            (src >= space.lower - 1e-12) & (src <= space.upper + 1e-12), axis=1
        )
        return src, inside

    def new_prior_batch(phis):
        src, inside = pull_back(phis)
        out = np.zeros(src.shape[0])
        if np.any(inside):
            base = problem.prior_values(src[inside])
            jac = np.array([abs(float(diffeo.jacobian_det(s))) for s in src[inside]])
            out[inside] = base / jac
        return out

    def new_theta_batch(phis, x):
        src, inside = pull_back(phis)
        out = np.zeros(src.shape[0])
        if np.any(inside):
            out[inside] = problem.likelihoods_over(src[inside], x)
        return out

    out = EstimationProblem(
        theta_space=ParameterSpace(lo, hi),
        obs_space=problem.obs_space,
        prior=lambda phi: float(new_prior_batch(np.atleast_2d(phi))[0]),
        likelihood=lambda phi, x: float(new_theta_batch(np.atleast_2d(phi), x)[0]),
        label=f"{problem.label}|{diffeo.name}",
        mass_fn=(
            (lambda t: problem.support_masses(diffeo.unapply(np.atleast_2d(t))[0]))
            if problem.obs_space.is_discrete
            else None
        ),
        mass_batch=(
            (lambda ts: problem.masses_over(
                np.clip(pull_back(ts)[0], space.lower, space.upper)
            ))
            if problem.obs_space.is_discrete
            else None
        ),
        theta_batch=new_theta_batch,
        x_batch=(
            (lambda phi, xs: problem.densities_at(diffeo.unapply(np.atleast_2d(phi))[0], xs))
            if problem.x_batch is not None
            else None
        ),
        xt_batch=(
            (lambda phis, xs: problem.densities_matrix(
                np.clip(pull_back(phis)[0], space.lower, space.upper), xs
            ) * pull_back(phis)[1][:, None])
            if problem.xt_batch is not None
            else None
        ),
        prior_batch=new_prior_batch,
        meta={**_public_meta(problem), "reparam_of": problem.label},
    )
    if validate:
        res = integrate_box(
            new_prior_batch,
            lo,
            hi,
            tol=1e-8,
            vectorized=True,
            min_cells_per_dim=4,
        )
        out.meta["reparam_mass"] = res.value
        if abs(res.value - 1.0) > 1e-6:
            raise InvalidProblem(
                f"pushforward prior mass {res.value!r} leaks beyond 1e-6 from 1"
            )
    return out


def transform_observations(
    problem: EstimationProblem, diffeo: Diffeomorphism, validate: bool = True
) -> EstimationProblem:
    """Re-express observations through an invertible change of variables.

    Discrete supports are relabeled (masses ride along); continuous densities
    pick up the inverse map's Jacobian. Anchor coordinates for quadrature are
    regenerated by mapping a probe grid of the old window.
    """
    obs = problem.obs_space
    if obs.is_discrete:
        new_support = tuple(np.atleast_1d(p) for p in diffeo.apply(obs.support_array()))
        new_obs = ObservationSpace.discrete(new_support)
        sup_arr = np.stack(new_support)

        def match_index(y):
            d = np.max(np.abs(sup_arr - np.atleast_1d(y)), axis=1)
            idx = int(np.argmin(d))
            if d[idx] > 1e-9:
                raise InvalidProblem("observation not in the relabeled support")
            return idx

        old_support = obs.support

        def new_lik(theta, y):
            return float(problem.likelihood(theta, old_support[match_index(y)]))

        return EstimationProblem(
            theta_space=problem.theta_space,
            obs_space=new_obs,
            prior=problem.prior,
            likelihood=new_lik,
            label=f"{problem.label}|obs:{diffeo.name}",
            theta_points=problem.theta_points,
            mass_fn=problem.support_masses,  # same order, same masses
            mass_batch=problem.masses_over,
            prior_batch=problem.prior_batch,
            meta={**_public_meta(problem), "obs_transform_of": problem.label},
        )

    if validate:
        probe = np.linspace(obs.lower, obs.upper, 9)[1:-1]
        diffeo.check_roundtrip(probe, tol=1e-9)
    probe_grid = np.linspace(obs.lower, obs.upper, 33)
    images = diffeo.apply(probe_grid)
    lo = np.min(images, axis=0)
    hi = np.max(images, axis=0)
    old_anchor_pts = [np.full(obs.dim, a) for ax in obs.anchors for a in ax]
    anchor_imgs = diffeo.apply(np.stack(old_anchor_pts)) if old_anchor_pts else None
    anchors = []
    for d in range(obs.dim):
        if anchor_imgs is None:
            anchors.append(())
        else:
            keep = (anchor_imgs[:, d] > lo[d]) & (anchor_imgs[:, d] < hi[d])
            anchors.append(tuple(sorted(set(float(v) for v in anchor_imgs[keep, d]))))

    def jac_inv(ys):
        pts = np.atleast_2d(np.asarray(ys, dtype=float))
        src = diffeo.unapply(pts)
        return np.array([1.0 / abs(float(diffeo.jacobian_det(s))) for s in src]), src

    def new_x_batch(theta, ys):
        j, src = jac_inv(ys)
        return problem.densities_at(theta, src) * j

    def new_lik(theta, y):
        return float(new_x_batch(theta, np.atleast_2d(y))[0])

    return EstimationProblem(
        theta_space=problem.theta_space,
        obs_space=ObservationSpace.continuous(lo, hi, anchors),
        prior=problem.prior,
        likelihood=new_lik,
        label=f"{problem.label}|obs:{diffeo.name}",
        theta_points=problem.theta_points,
        theta_batch=(
            (lambda thetas, y: problem.likelihoods_over(
                thetas, diffeo.unapply(np.atleast_2d(y))[0]
            ) / abs(float(diffeo.jacobian_det(diffeo.unapply(np.atleast_2d(y))[0]))))
            if problem.theta_batch is not None
            else None
        ),
        x_batch=new_x_batch,
        xt_batch=(
            (lambda thetas, ys: problem.densities_matrix(thetas, jac_inv(ys)[1])
             * jac_inv(ys)[0][None, :])
            if problem.xt_batch is not None
            else None
        ),
        prior_batch=problem.prior_batch,
        meta={**_public_meta(problem), "obs_transform_of": problem.label},
    )


def augment_superfluous(
    problem: EstimationProblem, noise: Sequence[tuple], validate: bool = True
) -> EstimationProblem:
    """Append an independent, parameter-free coordinate to every observation.

    noise lists (value, mass) pairs for the extra coordinate. The augmented
    masses are products, so the posterior is untouched; the parent problem is
    recorded in meta for structure-aware consumers.
    """
    if not problem.obs_space.is_discrete:
        raise UnsupportedProblem("superfluous augmentation is defined for finite supports")
    pairs = [(float(v), float(c)) for v, c in noise]
    if len(pairs) < 1:
        raise InvalidProblem("noise must have at least one outcome")
    values = [v for v, _ in pairs]
    if len(set(values)) != len(values):
        raise InvalidProblem("noise outcome values must be distinct")
    csum = sum(sorted(c for _, c in pairs))
    if abs(csum - 1.0) > _MASS_TOL:
        raise InvalidProblem(f"noise masses sum to {csum!r}, expected 1 +/- {_MASS_TOL}")
    if any(c <= 0.0 for _, c in pairs):
        raise InvalidProblem("noise masses must be positive")

    base_support = problem.obs_space.support
    new_support = tuple(
        np.concatenate([x, [v]]) for x in base_support for v, _ in pairs
    )
    noise_masses = np.array([c for _, c in pairs])
    value_arr = np.array(values)

    def new_lik(theta, xy):
        xy = np.atleast_1d(np.asarray(xy, dtype=float))
        x, y = xy[:-1], xy[-1]
        d = np.abs(value_arr - y)
        j = int(np.argmin(d))
        if d[j] > 1e-12:
            raise InvalidProblem("augmented observation has an unknown noise value")
        return float(problem.likelihood(theta, x)) * float(noise_masses[j])

    def new_mass_fn(theta):
        return np.multiply.outer(problem.support_masses(theta), noise_masses).ravel()

    def new_mass_batch(thetas):
        base = problem.masses_over(thetas)
        return (base[:, :, None] * noise_masses[None, None, :]).reshape(base.shape[0], -1)

    out = EstimationProblem(
        theta_space=problem.theta_space,
        obs_space=ObservationSpace.discrete(new_support),
        prior=problem.prior,
        likelihood=new_lik,
        label=f"{problem.label}|+noise",
        theta_points=problem.theta_points,
        mass_fn=new_mass_fn,
        mass_batch=new_mass_batch,
        theta_batch=(
            (lambda thetas, xy: problem.likelihoods_over(
                thetas, np.atleast_1d(xy)[:-1]
            ) * noise_masses[int(np.argmin(np.abs(value_arr - np.atleast_1d(xy)[-1])))])
            if problem.theta_batch is not None
            else None
        ),
        prior_batch=problem.prior_batch,
        meta={
            **_public_meta(problem),
            "augmented_from": problem,
            "noise": tuple(pairs),
        },
    )
    if validate and problem.is_finite_theta:
        x0 = base_support[0]
        y0 = new_support[0]
        before = finite_posterior(problem, x0)
        after = finite_posterior(out, y0)
        if float(np.max(np.abs(before - after))) > 1e-12:
            raise InvalidProblem("augmentation moved the posterior beyond 1e-12")
    return out


# ---------------------------------------------------------------------------
# catalog


def bernoulli_observation(n: int, successes: int) -> np.ndarray:
    """A canonical trials vector with the given number of successes."""
    if not (0 <= successes <= n):
        raise InvalidProblem(f"successes must lie in [0, {n}]")
    return np.concatenate([np.ones(successes), np.zeros(n - successes)])


def _tilted_density(lo: float, hi: float, slope: float):
    """Linear prior density on [lo, hi], normalized; positive when |slope| is sane."""
    width = hi - lo
    mid = 0.5 * (lo + hi)
    floor = 1.0 / width - abs(slope) * 0.5 * width
    if floor <= 0.0:
        raise InvalidProblem("tilted prior slope makes the density nonpositive")

    def density(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return float(1.0 / width + slope * (t[0] - mid))

    def density_batch(ts):
        ts = np.atleast_2d(np.asarray(ts, dtype=float))
        return 1.0 / width + slope * (ts[:, 0] - mid)

    return density, density_batch


def _bernoulli_family(n: int, lo: float, hi: float, prior_kind, label: str) -> EstimationProblem:
    if n < 1 or n > 12:
        raise InvalidProblem("trial count must lie in [1, 12] (support is enumerated)")
    support = tuple(
        np.array(bits, dtype=float) for bits in itertools.product((0.0, 1.0), repeat=n)
    )
    successes = np.array([float(np.sum(x)) for x in support])

    def mass_fn(theta):
        p = float(np.atleast_1d(theta)[0])
        return p**successes * (1.0 - p) ** (n - successes)

    def mass_batch(thetas):
        ps = np.atleast_2d(thetas)[:, 0:1]
        return ps**successes * (1.0 - ps) ** (n - successes)

    def likelihood(theta, x):
        p = float(np.atleast_1d(theta)[0])
        s = float(np.sum(np.atleast_1d(x)))
        return p**s * (1.0 - p) ** (n - s)

    def theta_batch(thetas, x):
        ps = np.atleast_2d(thetas)[:, 0]
        s = float(np.sum(np.atleast_1d(x)))
        return ps**s * (1.0 - ps) ** (n - s)

    if prior_kind is None or prior_kind == "uniform" or prior_kind == {"kind": "uniform"}:
        width = hi - lo
        prior = lambda t: 1.0 / width
        prior_batch = lambda ts: np.full(np.atleast_2d(ts).shape[0], 1.0 / width)
    elif isinstance(prior_kind, dict) and prior_kind.get("kind") == "tilted":
        prior, prior_batch = _tilted_density(lo, hi, float(prior_kind.get("slope", 0.0)))
    else:
        raise InvalidProblem(f"unknown prior kind {prior_kind!r} for {label}")

    return EstimationProblem(
        theta_space=ParameterSpace([lo], [hi]),
        obs_space=ObservationSpace.discrete(support),
        prior=prior,
        likelihood=likelihood,
        label=label,
        mass_fn=mass_fn,
        mass_batch=mass_batch,
        theta_batch=theta_batch,
        prior_batch=prior_batch,
        meta={"bernoulli_n": n, "rate_interval": (lo, hi)},
    )


def bernoulli_trials(
    n: int = 10,
    prior_lower: float = 0.05,
    prior_upper: float = 0.95,
    prior=None,
    validate: bool = True,
) -> EstimationProblem:
    """n exchangeable binary trials with an unknown success rate."""
    problem = _bernoulli_family(n, float(prior_lower), float(prior_upper), prior, "bernoulli_trials")
    if validate:
        validate_problem(problem)
    return problem


def binomial_restricted(
    n: int = 10, eps: float = 0.05, prior=None, validate: bool = True
) -> EstimationProblem:
    """Binary trials with the rate restricted to [eps, 1/2]."""
    if not (0.0 < eps < 0.5):
        raise InvalidProblem("eps must lie strictly between 0 and 1/2")
    problem = _bernoulli_family(n, float(eps), 0.5, prior, "binomial_restricted")
    if validate:
        validate_problem(problem)
    return problem


def gaussian_mean(
    sigma: float = 1.0,
    prior_mean: float = 0.0,
    prior_sd: float = 1.0,
    lower: float = -4.0,
    upper: float = 4.0,
    validate: bool = True,
) -> EstimationProblem:
    """Unknown mean of a Gaussian with known scale; truncated Gaussian prior."""
    if sigma <= 0 or prior_sd <= 0:
        raise InvalidProblem("scales must be positive")
    lo, hi = float(lower), float(upper)
    if hi <= lo:
        raise InvalidProblem("parameter interval must have positive width")
    # normalizer of the prior truncated to [lo, hi]
    z = 0.5 * (
        math.erf((hi - prior_mean) / (prior_sd * math.sqrt(2.0)))
        - math.erf((lo - prior_mean) / (prior_sd * math.sqrt(2.0)))
    )
    pnorm = 1.0 / (prior_sd * math.sqrt(2.0 * math.pi) * z)
    lnorm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def prior(t):
        t0 = float(np.atleast_1d(t)[0])
        return pnorm * math.exp(-0.5 * ((t0 - prior_mean) / prior_sd) ** 2)

    def prior_batch(ts):
        t0 = np.atleast_2d(ts)[:, 0]
        return pnorm * np.exp(-0.5 * ((t0 - prior_mean) / prior_sd) ** 2)

    def likelihood(theta, x):
        t0 = float(np.atleast_1d(theta)[0])
        x0 = float(np.atleast_1d(x)[0])
        return lnorm * math.exp(-0.5 * ((x0 - t0) / sigma) ** 2)

    def theta_batch(thetas, x):
        t0 = np.atleast_2d(thetas)[:, 0]
        x0 = float(np.atleast_1d(x)[0])
        return lnorm * np.exp(-0.5 * ((x0 - t0) / sigma) ** 2)

    def x_batch(theta, xs):
        t0 = float(np.atleast_1d(theta)[0])
        x0 = np.atleast_2d(xs)[:, 0]
        return lnorm * np.exp(-0.5 * ((x0 - t0) / sigma) ** 2)

    def xt_batch(thetas, xs):
        t0 = np.atleast_2d(thetas)[:, 0]
        x0 = np.atleast_2d(xs)[:, 0]
        return lnorm * np.exp(-0.5 * ((x0[None, :] - t0[:, None]) / sigma) ** 2)

    problem = EstimationProblem(
        theta_space=ParameterSpace([lo], [hi]),
        obs_space=ObservationSpace.continuous([lo - 8.0 * sigma], [hi + 8.0 * sigma]),
        prior=prior,
        likelihood=likelihood,
        label="gaussian_mean",
        theta_batch=theta_batch,
        x_batch=x_batch,
        xt_batch=xt_batch,
        prior_batch=prior_batch,
        meta={"sigma": sigma, "prior_mean": prior_mean, "prior_sd": prior_sd},
    )
    if validate:
        validate_problem(problem)
    return problem


def finite_categorical(
    theta_points: Sequence,
    probs: Sequence[Sequence[float]],
    prior: Sequence[float] | None = None,
    support: Sequence | None = None,
    validate: bool = True,
) -> EstimationProblem:
    """Finitely many hypotheses over a finite observation alphabet."""
    pts = tuple(np.atleast_1d(np.asarray(p, dtype=float)) for p in theta_points)
    rows = np.asarray(probs, dtype=float)
    if rows.ndim != 2 or rows.shape[0] != len(pts):
        raise InvalidProblem("probs must give one row per parameter point")
    if support is None:
        sup = tuple(np.array([float(j)]) for j in range(rows.shape[1]))
    else:
        sup = tuple(np.atleast_1d(np.asarray(s, dtype=float)) for s in support)
    if len(sup) != rows.shape[1]:
        raise InvalidProblem("support size must match the probability row length")
    if prior is None:
        masses = np.full(len(pts), 1.0 / len(pts))
    else:
        masses = np.asarray(prior, dtype=float)
        if masses.shape != (len(pts),):
            raise InvalidProblem("prior must give one mass per parameter point")

    stacked = np.stack(pts)
    sup_arr = np.stack(sup)

    def t_index(theta):
        d = np.max(np.abs(stacked - np.atleast_1d(theta)), axis=1)
        idx = int(np.argmin(d))
        if d[idx] > 1e-9:
            raise InvalidProblem(f"theta {theta} is not a catalog hypothesis")
        return idx

    def x_index(x):
        d = np.max(np.abs(sup_arr - np.atleast_1d(x)), axis=1)
        idx = int(np.argmin(d))
        if d[idx] > 1e-9:
            raise InvalidProblem(f"observation {x} is not in the support")
        return idx

    problem = EstimationProblem(
        theta_space=ParameterSpace(np.min(stacked, axis=0), np.max(stacked, axis=0)),
        obs_space=ObservationSpace.discrete(sup),
        prior=lambda t: float(masses[t_index(t)]),
        likelihood=lambda t, x: float(rows[t_index(t), x_index(x)]),
        label="finite_categorical",
        theta_points=pts,
        mass_fn=lambda t: rows[t_index(t)].copy(),
        meta={"rows": rows.copy()},
    )
    if validate:
        validate_problem(problem)
    return problem


PROBLEM_CATALOG = {
    "finite_categorical": finite_categorical,
    "bernoulli_trials": bernoulli_trials,
    "binomial_restricted": binomial_restricted,
    "gaussian_mean": gaussian_mean,
}


def builtin_problem(catalog_id: str, params: dict | None = None) -> EstimationProblem:
    """Instantiate a cataloged problem by id with keyword parameters."""
    if catalog_id not in PROBLEM_CATALOG:
        raise UnknownCatalogId(
            f"unknown problem {catalog_id!r}; available: {sorted(PROBLEM_CATALOG)}"
        )
    return PROBLEM_CATALOG[catalog_id](**(params or {}))
