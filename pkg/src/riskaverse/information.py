"""Fisher information, loss Hessians, and the constant tying them together.

For well-behaved likelihood-based losses the Hessian of L(., theta) at theta
is a scalar multiple of the Fisher information matrix; gamma_fit recovers
that scalar and reports how far the proportionality actually holds.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SingularInformation
from .losses import Loss
from .numerics import finite_diff_hessian, integrate_box
from .problems import EstimationProblem


@dataclass(frozen=True)
class InfoMatrix:
    """Symmetric PSD matrix attached to the point where it was evaluated."""

    entries: np.ndarray
    theta: np.ndarray
    method: str
    boundary_flags: tuple = ()

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.entries, dtype=float))
        object.__setattr__(self, "entries", m)
        object.__setattr__(
            self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float))
        )
        if m.shape[0] != m.shape[1]:
            raise SingularInformation("information matrix must be square")
        if float(np.max(np.abs(m - m.T))) > 1e-9:
            raise SingularInformation("information matrix must be symmetric to 1e-9")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.entries)))

    def det(self) -> float:
        return float(np.linalg.det(self.entries))


def _score_step(problem: EstimationProblem, theta: np.ndarray, step: float | None):
    """Per-axis steps plus the axes forced to one-sided differences.

    sides maps axis -> +1/-1, the direction with more room, for axes where a
    centered step would leave the box.
    """
    lo, hi = problem.theta_space.lower, problem.theta_space.upper
    base = step if step is not None else 1e-4 * float(np.max(problem.theta_space.width))
    steps = np.full(theta.size, base)
    sides: dict[int, float] = {}
    for d in range(theta.size):
        room_up = hi[d] - theta[d]
        room_dn = theta[d] - lo[d]
        if room_up <= 0 or room_dn <= 0:
            raise SingularInformation(
                f"theta {theta} sits on the parameter boundary along axis {d}"
            )
        if min(room_up, room_dn) >= base:
            continue
        sides[d] = 1.0 if room_up >= room_dn else -1.0
        steps[d] = min(base, 0.999 * max(room_up, room_dn))
    return steps, sides


def fisher_information(
    problem: EstimationProblem, theta, step: float | None = None
) -> InfoMatrix:
    """Expected outer product of the score, by central differences.

    Discrete observation spaces are summed exactly over their support;
    continuous ones are integrated over the observation window. Directions
    where theta is within one step of the boundary fall back to one-sided
    differences and are flagged.
    """
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    m = t.size
    steps, sides = _score_step(problem, t, step)
    if sides:
        warnings.warn(
            f"one-sided score differences near the boundary on axes {sorted(sides)}",
            stacklevel=2,
        )

    def shifted(d, sign):
        out = t.copy()
        out[d] += sign * steps[d]
        return out

    if problem.obs_space.is_discrete:
        base = problem.support_masses(t)
        scores = np.empty((m, base.size))
        for d in range(m):
            if d in sides:
                plus = np.log(problem.support_masses(shifted(d, sides[d])))
                scores[d] = sides[d] * (plus - np.log(base)) / steps[d]
            else:
                plus = np.log(problem.support_masses(shifted(d, 1)))
                minus = np.log(problem.support_masses(shifted(d, -1)))
                scores[d] = (plus - minus) / (2.0 * steps[d])
        if not np.all(np.isfinite(scores)):
            raise SingularInformation("non-finite score on the support")
        entries = (scores * base) @ scores.T
        entries = 0.5 * (entries + entries.T)
        return InfoMatrix(entries, t, "exact_discrete", tuple(sorted(sides)))

    def entry(i, j):
        def integrand(xs):
            base = np.maximum(problem.densities_at(t, xs), 1e-300)
            rows = []
            for d in (i, j) if i != j else (i,):
                if d in sides:
                    plus = np.maximum(problem.densities_at(shifted(d, sides[d]), xs), 1e-300)
                    rows.append(sides[d] * (np.log(plus) - np.log(base)) / steps[d])
                else:
                    plus = np.maximum(problem.densities_at(shifted(d, 1), xs), 1e-300)
                    minus = np.maximum(problem.densities_at(shifted(d, -1), xs), 1e-300)
                    rows.append((np.log(plus) - np.log(minus)) / (2.0 * steps[d]))
            si = rows[0]
            sj = rows[0] if i == j else rows[1]
            return si * sj * base

        res = integrate_box(
            integrand,
            problem.obs_space.lower,
            problem.obs_space.upper,
            tol=1e-9,
            vectorized=True,
            anchors=problem.obs_space.anchors or None,
            min_cells_per_dim=4,
        )
        return res.value

    entries = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            entries[i, j] = entries[j, i] = entry(i, j)
    return InfoMatrix(entries, t, "quadrature", tuple(sorted(sides)))


def loss_hessian(
    problem: EstimationProblem, loss: Loss, theta, step: float | None = None
) -> InfoMatrix:
    """Hessian of L(., theta) at theta, symmetrized.

    Losses vanishing to second order at the diagonal have PSD Hessians;
    an eigenvalue below -1e-6 is reported as a violation.
    """
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    bound = loss.bind_second(problem, t)

    def fn(p):
        return float(bound(np.atleast_2d(p))[0])

    h = step if step is not None else 1e-4 * float(np.max(problem.theta_space.width))
    entries = finite_diff_hessian(
        fn,
        t,
        step=h,
        lower=problem.theta_space.lower,
        upper=problem.theta_space.upper,
    )
    entries = 0.5 * (entries + entries.T)
    info = InfoMatrix(entries, t, "quadrature")
    if info.min_eigenvalue() < -1e-6:
        raise SingularInformation(
            f"loss {loss.name!r} has Hessian eigenvalue {info.min_eigenvalue():g} "
            f"below -1e-6 at theta={t}; nonnegativity near the diagonal is violated"
        )
    return info


def gamma_fit(
    problem: EstimationProblem, loss: Loss, theta_grid, step: float | None = None
) -> tuple[float, float]:
    """Least-squares scalar fit of loss Hessians to Fisher matrices.

    Returns (gamma, max_residual), the residual measured in relative
    Frobenius norm over the grid. Singular Fisher points are skipped with a
    warning rather than failing the fit.
    """
    pairs = []
    for theta in theta_grid:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        fisher = fisher_information(problem, t, step=step)
        norm = float(np.linalg.norm(fisher.entries))
        if norm <= 0.0 or abs(fisher.det()) < 1e-12 * max(norm, 1.0) ** fisher.dim:
            warnings.warn(f"skipping singular Fisher matrix at theta={t}", stacklevel=2)
            continue
        hess = loss_hessian(problem, loss, t, step=step)
        pairs.append((hess.entries, fisher.entries))
    if not pairs:
        raise SingularInformation("no usable grid points: Fisher singular everywhere")
    num = sum(float(np.sum(h * i)) for h, i in pairs)
    den = sum(float(np.sum(i * i)) for _, i in pairs)
    gamma = num / den
    residual = max(
        float(np.linalg.norm(h - gamma * i) / np.linalg.norm(i)) for h, i in pairs
    )
    return gamma, residual
