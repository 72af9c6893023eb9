"""Command-line front end: estimate, trace, fisher, axioms.

Every run is driven by one JSON config file and is fully deterministic:
identical configs produce byte-identical CSV and JSON artifacts, each stamped
with the config digest and package version. Exit codes: 0 success, 1 axiom
verdict mismatch, 2 bad config, 3 numerical failure (diagnostic written).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .axioms import (
    check_iia,
    check_irp,
    check_iro,
    check_isi,
    default_pairs,
    discriminativity_probe,
    iia_problem_pair,
    necessity_suite,
)
from .config import ESTIMATOR_NAMES, ExperimentConfig, load_config
from .errors import ConfigError, RiskaverseError
from .estimators import (
    fmap_estimate,
    generalized_wf,
    map_estimate,
    ml_estimate,
    posterior_mean,
    risk_averse_estimate,
    wf_estimate,
)
from .information import fisher_information, gamma_fit, loss_hessian
from .numerics import SetEstimate, set_distance


def _fnum(v) -> str:
    return format(float(v), ".17g")


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config_digest": cfg.digest, "version": __version__}


def _plot_stamp(cfg: ExperimentConfig) -> str:
    return f"config_digest={cfg.digest} version={__version__}"


def _write_csv(path: Path, cfg: ExperimentConfig, columns, rows) -> None:
    lines = [f"# config_digest={cfg.digest} version={__version__}"]
    lines.append(",".join(columns))
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> None:
    doc = {**_provenance(cfg), **payload}
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n",
        encoding="utf-8",
    )


def _points_cell(points) -> str:
    return ";".join(" ".join(_fnum(c) for c in np.atleast_1d(p)) for p in points)


def _points_list(points) -> list:
    return [[float(c) for c in np.atleast_1d(p)] for p in points]


# ---------------------------------------------------------------------------
# estimate


def _default_estimators(problem, have_loss: bool) -> tuple:
    if problem.is_finite_theta:
        return ("map", "ml")
    names = ["fmap", "ml", "wf", "posterior_mean"]
    if have_loss:
        names.insert(3, "gwf")
    return tuple(names)


def _run_estimator(name: str, cfg: ExperimentConfig, problem, x, grid) -> SetEstimate:
    if name == "map":
        return map_estimate(problem, x)
    if name == "fmap":
        return fmap_estimate(problem, x, grid)
    if name == "ml":
        return ml_estimate(problem, x, grid)
    if name == "wf":
        return wf_estimate(problem, x, grid)
    if name == "gwf":
        return generalized_wf(problem, x, cfg.build_loss(problem), grid)
    if name == "posterior_mean":
        # not an argmax: no objective value, no grid quantization
        mean = posterior_mean(problem, x)
        return SetEstimate(points=(mean,), value=float("nan"), plateau_tol=0.0, resolution=0.0)
    raise ConfigError(f"unknown estimator {name!r}; available: {list(ESTIMATOR_NAMES)}")


def cmd_estimate(cfg: ExperimentConfig, out_dir: Path, plot: bool) -> int:
    problem = cfg.build_problem()
    x = cfg.build_observation(problem)
    grid = cfg.build_grid()
    names = cfg.estimators or _default_estimators(problem, cfg.loss is not None)

    table = []
    for name in names:
        est = _run_estimator(name, cfg, problem, x, grid)
        table.append((name, est))

    csv_path = out_dir / cfg.output_name("csv", "estimate.csv")
    rows = [
        (name, _points_cell(est.points), _fnum(est.value), _fnum(est.resolution))
        for name, est in table
    ]
    _write_csv(csv_path, cfg, ("estimator", "points", "value", "resolution"), rows)

    payload = {
        "estimates": {
            name: {
                "points": _points_list(est.points),
                "value": None if not np.isfinite(est.value) else float(est.value),
                "resolution": float(est.resolution),
                "plateau": bool(est.plateau),
            }
            for name, est in table
        }
    }
    _write_json(out_dir / cfg.output_name("json", "estimate.json"), cfg, payload)

    if plot:
        from .plots import plot_estimates

        plot_estimates(
            problem, x, [(name, est.points) for name, est in table],
            csv_path.with_suffix(".png"), _plot_stamp(cfg),
        )
    return 0


# ---------------------------------------------------------------------------
# trace


def _reference_estimates(cfg: ExperimentConfig, problem, x, grid) -> dict:
    names = ("map", "ml") if problem.is_finite_theta else ("fmap", "ml", "wf", "posterior_mean")
    refs = {}
    for name in names:
        try:
            refs[name] = _run_estimator(name, cfg, problem, x, grid).points
        except RiskaverseError:
            continue  # a missing reference is not a trace failure
    return refs


def cmd_trace(cfg: ExperimentConfig, out_dir: Path, plot: bool) -> int:
    problem = cfg.build_problem()
    x = cfg.build_observation(problem)
    L = cfg.build_loss(problem)
    A = cfg.build_attenuation()
    schedule = cfg.build_schedule()
    grid = cfg.build_grid()

    trace, final = risk_averse_estimate(problem, L, A, schedule, x=x, grid=grid)
    refs = _reference_estimates(cfg, problem, x, grid)

    csv_path = out_dir / cfg.output_name("csv", "trace.csv")
    dim = problem.dim
    columns = ("k", *(f"theta_{d}" for d in range(dim)), "max_gain", "plateau")
    rows = [
        tuple(_fnum(c) for c in row[:-1]) + (str(int(row[-1])),) for row in trace.rows()
    ]
    _write_csv(csv_path, cfg, columns, rows)

    limit = trace.limit
    distances = {
        name: (None if limit.diverged else float(set_distance(limit.points, pts)))
        for name, pts in refs.items()
    }
    payload = {
        "limit": {
            "points": _points_list(limit.points),
            "diverged": bool(limit.diverged),
            "reason": limit.reason,
            "window": int(limit.window),
            "match_radius": float(limit.match_radius),
        },
        "distance_to": distances,
        "final_max_gain": float(trace.per_k_max_gain[-1]),
        "loss": L.name,
        "attenuation": A.name,
    }
    _write_json(out_dir / cfg.output_name("json", "trace.json"), cfg, payload)

    if plot:
        from .plots import plot_trace

        plot_trace(trace, refs, csv_path.with_suffix(".png"), _plot_stamp(cfg))
    return 0


# ---------------------------------------------------------------------------
# fisher


def cmd_fisher(cfg: ExperimentConfig, out_dir: Path, plot: bool) -> int:
    problem = cfg.build_problem()
    L = cfg.build_loss(problem)
    grid = cfg.build_grid()
    thetas = problem.theta_space.interior_grid(grid.points_per_dim)

    caught: list[str] = []
    with warnings.catch_warnings(record=True) as records:
        warnings.simplefilter("always")
        gamma, max_residual = gamma_fit(problem, L, thetas)
        caught.extend(sorted({str(r.message) for r in records}))

    dim = problem.dim
    rows = []
    fisher_dets = []
    hessian_dets = []
    kept_thetas = []
    for theta in thetas:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            fisher = fisher_information(problem, theta)
            norm = float(np.linalg.norm(fisher.entries))
            if norm <= 0.0 or abs(fisher.det()) < 1e-12 * max(norm, 1.0) ** dim:
                continue  # the fit skipped it; the table does too
            hess = loss_hessian(problem, L, theta)
        residual = float(np.linalg.norm(hess.entries - gamma * fisher.entries) / norm)
        cells = [_fnum(c) for c in theta]
        cells += [_fnum(v) for v in fisher.entries.ravel()]
        cells += [_fnum(v) for v in hess.entries.ravel()]
        cells += [_fnum(gamma), _fnum(residual)]
        rows.append(tuple(cells))
        fisher_dets.append(fisher.det())
        hessian_dets.append(hess.det())
        kept_thetas.append(theta)

    columns = (
        *(f"theta_{d}" for d in range(dim)),
        *(f"I_{i}{j}" for i in range(dim) for j in range(dim)),
        *(f"H_{i}{j}" for i in range(dim) for j in range(dim)),
        "gamma",
        "residual",
    )
    csv_path = out_dir / cfg.output_name("csv", "fisher.csv")
    _write_csv(csv_path, cfg, columns, rows)

    payload = {
        "gamma": float(gamma),
        "max_residual": float(max_residual),
        "loss": L.name,
        "grid_points": len(rows),
        "skipped": len(thetas) - len(rows),
        "warnings": caught,
    }
    _write_json(out_dir / cfg.output_name("json", "fisher.json"), cfg, payload)

    if plot and rows:
        from .plots import plot_fisher

        plot_fisher(kept_thetas, fisher_dets, hessian_dets, gamma,
                    csv_path.with_suffix(".png"), _plot_stamp(cfg))
    return 0


# ---------------------------------------------------------------------------
# axioms


def _run_check(name: str, L, problem):
    if name == "IRP":
        return check_irp(L, problem)
    if name == "IRO":
        return check_iro(L, problem)
    if name == "IIA":
        t1, t2 = default_pairs(problem)[0]
        a, b = iia_problem_pair(problem, t1, t2)
        return check_iia(L, a, b, t1, t2)
    if name == "ISI":
        return check_isi(L, problem)
    if name == "discriminativity":
        return discriminativity_probe(L, problem).to_report()
    raise ConfigError(f"unknown check {name!r}")


def cmd_axioms(cfg: ExperimentConfig, out_dir: Path, plot: bool) -> int:
    spec = cfg.axioms or {"suite": "necessity"}
    json_path = out_dir / cfg.output_name("json", "axioms.json")

    if "suite" in spec:
        report = necessity_suite(
            tol_grid=spec.get("tolerances"),
            grid=cfg.build_grid() if cfg.grid else None,
            schedule=cfg.build_schedule() if cfg.schedule else None,
        )
        _write_json(json_path, cfg, report.to_dict())
        return 0 if report.passed else 1

    problem = cfg.build_problem()
    L = cfg.build_loss(problem)
    expect = spec.get("expect", {})
    records = []
    mismatches = []
    for name in spec["checks"]:
        report = _run_check(name, L, problem)
        records.append(report.to_dict())
        wanted = expect.get(name, "satisfied_on_probes")
        if report.verdict != wanted:
            mismatches.append(
                {
                    "check": name,
                    "expected": wanted,
                    "verdict": report.verdict,
                    "witness": report.to_dict()["witness"],
                }
            )
    payload = {
        "records": records,
        "mismatches": mismatches,
        "summary": {
            "checks_run": len(records),
            "matched": len(records) - len(mismatches),
        },
    }
    _write_json(json_path, cfg, payload)
    return 1 if mismatches else 0


# ---------------------------------------------------------------------------
# entry point


_COMMANDS = {
    "estimate": (cmd_estimate, "compare the point estimators on one problem"),
    "trace": (cmd_trace, "run the attenuated-gain limit and trace its argmax sets"),
    "fisher": (cmd_fisher, "tabulate information and loss curvature over the parameter grid"),
    "axioms": (cmd_axioms, "run invariance checks or the necessity suite"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskaverse",
        description="Deterministic experiment runner for risk-averse Bayesian estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--grid-points", type=int, default=None,
                       help="override grid points per dimension")
        p.add_argument("--refine", type=int, default=None,
                       help="override grid refinement rounds")
        p.add_argument("--no-plot", action="store_true",
                       help="skip the PNG next to the CSV")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    command, _ = _COMMANDS[args.command]
    out_dir = Path(args.out)

    try:
        cfg = load_config(
            args.config, {"grid_points": args.grid_points, "refine": args.refine}
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return command(cfg, out_dir, not args.no_plot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RiskaverseError as exc:
        diagnostic = {
            **_provenance(cfg),
            "command": args.command,
            "error": type(exc).__name__,
            "message": str(exc),
        }
        path = out_dir / f"{args.command}_error.json"
        path.write_text(json.dumps(diagnostic, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
