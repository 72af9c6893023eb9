"""Figure rendering for the report paths.

Figures are a convenience layered next to the delimited output; nothing
downstream reads them back, and the determinism guarantee covers the CSV and
JSON files only. The Agg backend keeps rendering headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .problems import EstimationProblem, finite_posterior

def _save(fig, path, provenance: str) -> None:
    # Software stripped so reruns do not differ by a library version string;
    # the Description text chunk carries the same stamp as the CSV header
    fig.savefig(path, dpi=150, metadata={"Software": None, "Description": provenance})
    plt.close(fig)


def plot_estimates(problem: EstimationProblem, x, rows, path, provenance: str = "") -> None:
    """Posterior shape with one marker per estimator row."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    if problem.is_finite_theta:
        pts = problem.finite_points_array()[:, 0]
        ax.bar(pts, finite_posterior(problem, x), width=0.6 * np.min(np.diff(np.sort(pts))),
               color="0.8", edgecolor="0.4", label="posterior mass")
    else:
        lo, hi = problem.theta_space.lower[0], problem.theta_space.upper[0]
        ts = np.linspace(lo, hi, 401)[:, None]
        dens = problem.prior_values(ts) * problem.likelihoods_over(ts, x)
        area = np.trapezoid(dens, ts[:, 0])
        if area > 0:
            dens = dens / area
        ax.plot(ts[:, 0], dens, color="0.3", label="posterior density")
    for j, (name, points) in enumerate(rows):
        for p in points:
            ax.axvline(p[0], color=f"C{j}", linestyle="--", alpha=0.8)
        if points:
            ax.plot([], [], color=f"C{j}", linestyle="--", label=name)
    ax.set_xlabel("theta")
    ax.set_ylabel("posterior")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path, provenance)


def plot_trace(trace, references, path, provenance: str = "") -> None:
    """Retained argmax points per risk level, with reference estimators."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for k, est in zip(trace.k_values, trace.per_k_estimates):
        for p in est.points:
            ax.plot(k, float(np.atleast_1d(p)[0]), "o", color="0.2", ms=3)
    for j, (name, points) in enumerate(references.items()):
        for p in points:
            ax.axhline(float(np.atleast_1d(p)[0]), color=f"C{j}", linestyle=":", alpha=0.8)
        if len(points):
            ax.plot([], [], color=f"C{j}", linestyle=":", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("risk level k")
    ax.set_ylabel("argmax set")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path, provenance)


def plot_fisher(thetas, fisher_dets, hessian_dets, gamma, path, provenance: str = "") -> None:
    """Information and loss-curvature determinants over the parameter grid."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ts = np.asarray(thetas, dtype=float)[:, 0]
    ax.plot(ts, fisher_dets, color="C0", label="|I|")
    ax.plot(ts, hessian_dets, color="C1", label="|H_L|")
    ax.plot(ts, gamma ** len(np.atleast_1d(thetas[0])) * np.asarray(fisher_dets),
            color="C2", linestyle="--", label="gamma-scaled |I|")
    ax.set_xlabel("theta")
    ax.set_ylabel("determinant")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path, provenance)
