"""Experiment configuration: a JSON file describing one deterministic run.

The schema is flat and auditable. Every name must resolve against the
problem, loss, and attenuation catalogs at load time, so a bad config fails
before any computation starts, and the canonical digest of the effective
config is embedded in every output file.

Top-level keys (all optional unless a command needs them):

    problem      {"name": str, "params": {...}}        required
    observation  {"value": number|list} or {"statistic": {"successes": int}}
    loss         {"name": str, "params": {...}}
    attenuation  "truncated_quadratic" | "raised_cosine"
    schedule     {"values": [k, ...]} or
                 {"kind": "geometric", "base": b, "count": n, "start": s}
    grid         {"points_per_dim": int, "refinement_rounds": int,
                  "shrink_factor": float}
    estimators   subset of ["map","fmap","ml","wf","gwf","posterior_mean"]
    axioms       {"suite": "necessity", "tolerances": {...}} or
                 {"checks": [...], "expect": {check: verdict}}
    outputs      {"csv": filename, "json": filename}
    seedless     true (the only supported value; documents the determinism)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ScheduleError
from .estimators import KSchedule
from .losses import ATTENUATIONS, LOSS_NAMES, Attenuation, Loss, make_loss
from .numerics import GridSpec
from .problems import (
    PROBLEM_CATALOG,
    EstimationProblem,
    bernoulli_observation,
    builtin_problem,
)

ESTIMATOR_NAMES = ("map", "fmap", "ml", "wf", "gwf", "posterior_mean")

_TOP_LEVEL_KEYS = frozenset(
    {
        "problem",
        "observation",
        "loss",
        "attenuation",
        "schedule",
        "grid",
        "estimators",
        "axioms",
        "outputs",
        "seedless",
    }
)

_CHECK_NAMES = ("IRP", "IRO", "IIA", "ISI", "discriminativity")


def canonical_json(obj) -> str:
    """Key-sorted, whitespace-free JSON; the digest input."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description plus its provenance digest."""

    problem: dict
    observation: dict | None = None
    loss: dict | None = None
    attenuation: str | None = None
    schedule: dict | None = None
    grid: dict | None = None
    estimators: tuple = ()
    axioms: dict | None = None
    outputs: dict = field(default_factory=dict)
    seedless: bool = True
    digest: str = ""

    # -- builders ----------------------------------------------------------

    def build_problem(self) -> EstimationProblem:
        return builtin_problem(self.problem["name"], self.problem.get("params"))

    def build_observation(self, problem: EstimationProblem):
        if self.observation is None:
            raise ConfigError("this command needs an 'observation' entry")
        spec = self.observation
        if "value" in spec:
            return np.asarray(spec["value"], dtype=float)
        stat = spec["statistic"]
        if "successes" not in stat:
            raise ConfigError(f"unknown sufficient statistic {sorted(stat)!r}")
        n = int(self.problem.get("params", {}).get("n", 10))
        return bernoulli_observation(n, int(stat["successes"]))

    def build_loss(self, problem: EstimationProblem) -> Loss:
        if self.loss is None:
            raise ConfigError("this command needs a 'loss' entry")
        return make_loss(self.loss["name"], problem, **self.loss.get("params", {}))

    def build_attenuation(self) -> Attenuation:
        if self.attenuation is None:
            raise ConfigError("this command needs an 'attenuation' entry")
        return ATTENUATIONS[self.attenuation]

    def build_schedule(self) -> KSchedule:
        if self.schedule is None:
            raise ConfigError("this command needs a 'schedule' entry")
        spec = self.schedule
        try:
            if "values" in spec:
                return KSchedule(tuple(spec["values"]))
            return KSchedule.geometric(
                base=float(spec.get("base", 4.0)),
                count=int(spec.get("count", 13)),
                start=float(spec.get("start", 1.0)),
            )
        except ScheduleError as exc:
            raise ConfigError(f"bad schedule: {exc}") from exc

    def build_grid(self) -> GridSpec:
        spec = self.grid or {}
        return GridSpec(
            points_per_dim=int(spec.get("points_per_dim", 33)),
            refinement_rounds=int(spec.get("refinement_rounds", 3)),
            shrink_factor=float(spec.get("shrink_factor", 0.15)),
        )

    def output_name(self, kind: str, default: str) -> str:
        return str(self.outputs.get(kind, default))


def _validate(raw: dict) -> None:
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)!r}")
    if "problem" not in raw:
        raise ConfigError("config needs a 'problem' entry")
    prob = raw["problem"]
    if not isinstance(prob, dict) or "name" not in prob:
        raise ConfigError("'problem' must be an object with a 'name'")
    if prob["name"] not in PROBLEM_CATALOG:
        raise ConfigError(
            f"unknown problem {prob['name']!r}; available: {sorted(PROBLEM_CATALOG)}"
        )
    loss = raw.get("loss")
    if loss is not None:
        if not isinstance(loss, dict) or "name" not in loss:
            raise ConfigError("'loss' must be an object with a 'name'")
        if loss["name"] not in LOSS_NAMES:
            raise ConfigError(f"unknown loss {loss['name']!r}; available: {list(LOSS_NAMES)}")
    att = raw.get("attenuation")
    if att is not None and att not in ATTENUATIONS:
        raise ConfigError(f"unknown attenuation {att!r}; available: {sorted(ATTENUATIONS)}")
    sched = raw.get("schedule")
    if sched is not None:
        if not isinstance(sched, dict):
            raise ConfigError("'schedule' must be an object")
        if "values" in sched:
            ks = list(sched["values"])
            if any(b <= a for a, b in zip(ks, ks[1:])):
                raise ConfigError("schedule values must increase strictly")
    obs = raw.get("observation")
    if obs is not None and not ({"value", "statistic"} & set(obs)):
        raise ConfigError("'observation' needs a 'value' or a 'statistic'")
    for name in raw.get("estimators", []):
        if name not in ESTIMATOR_NAMES:
            raise ConfigError(f"unknown estimator {name!r}; available: {list(ESTIMATOR_NAMES)}")
    ax = raw.get("axioms")
    if ax is not None:
        if "suite" in ax:
            if ax["suite"] != "necessity":
                raise ConfigError(f"unknown suite {ax['suite']!r}")
        elif "checks" in ax:
            for c in ax["checks"]:
                if c not in _CHECK_NAMES:
                    raise ConfigError(f"unknown check {c!r}; available: {list(_CHECK_NAMES)}")
        else:
            raise ConfigError("'axioms' needs a 'suite' or a 'checks' list")
    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict) or set(outputs) - {"csv", "json"}:
        raise ConfigError("'outputs' may only name 'csv' and 'json' files")
    if raw.get("seedless", True) is not True:
        raise ConfigError("'seedless' must be true: the pipeline has no random state")


def parse_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a raw config dict; overrides land in the digest too."""
    raw = json.loads(canonical_json(raw))  # detached copy, JSON types only
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "grid_points":
            raw.setdefault("grid", {})["points_per_dim"] = int(value)
        elif key == "refine":
            raw.setdefault("grid", {})["refinement_rounds"] = int(value)
        else:
            raise ConfigError(f"unknown override {key!r}")
    _validate(raw)
    return ExperimentConfig(
        problem=raw["problem"],
        observation=raw.get("observation"),
        loss=raw.get("loss"),
        attenuation=raw.get("attenuation"),
        schedule=raw.get("schedule"),
        grid=raw.get("grid"),
        estimators=tuple(raw.get("estimators", ())),
        axioms=raw.get("axioms"),
        outputs=raw.get("outputs", {}),
        seedless=bool(raw.get("seedless", True)),
        digest=config_digest(raw),
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {p} must hold a JSON object")
    return parse_config(raw, overrides)
