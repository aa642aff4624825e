"""Scenario files: TOML documents validated against a JSON schema."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, TrackingError
from .models import MeasurementNoise, SensorPose, TransitionModel, white_noise_q
from .simulator import MotionSegment, OwnshipLeg, Scenario, SensorSpec, TargetSpec

FILTERS = ("ekf", "pf", "bootstrap", "ippf", "mmpf", "mcjpdaf", "mcmmjpdaf")


@dataclass(frozen=True)
class FilterSpec:
    """Everything a filter needs beyond the scenario truth."""
    prior_mean: np.ndarray  # (K, 4)
    prior_cov: np.ndarray  # (K, 4, 4)
    process_noise: np.ndarray  # (K, 4, 4)
    default: str = "pf"
    n_particles: int = 100
    n_thr: Optional[float] = None
    roughening_k: float = 0.2
    roughening_scale: str = "variance"
    resample: str = "systematic"
    index_sampler: str = "stratified"
    gate_chi2: float = 9.21
    models: tuple = (TransitionModel("cv"),)
    mode_transition: np.ndarray = field(default_factory=lambda: np.eye(1))
    initial_mode_probs: np.ndarray = field(default_factory=lambda: np.ones(1))

    @property
    def multiple_model(self) -> bool:
        return len(self.models) > 1


@dataclass(frozen=True)
class Experiment:
    scenario: Scenario
    filter: FilterSpec
    runs: int = 1
    seed: int = 0
    divergence_threshold: float = 50.0


def schema() -> dict:
    return json.loads(resources.files("pftrack").joinpath("scenario.schema.json").read_text())


def bundled_scenarios() -> list[str]:
    root = resources.files("pftrack").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario_path(name_or_path: str):
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = name_or_path[:-5] if name_or_path.endswith(".toml") else name_or_path
    res = resources.files("pftrack").joinpath("scenarios", stem + ".toml")
    if res.is_file():
        return res
    raise ConfigError(f"no scenario file or bundled scenario named {name_or_path!r}")


def load_experiment(name_or_path: str) -> Experiment:
    path = resolve_scenario_path(name_or_path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_experiment(doc)


def _per_target(rows, K: int, what: str) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.shape[0] == 1 and K > 1:
        arr = np.repeat(arr, K, axis=0)
    if arr.shape != (K, 4):
        raise ConfigError(f"{what} needs one 4-vector per target")
    return arr


def _transition(d: dict, T: float) -> TransitionModel:
    if d["model"] == "ct" and "omega" not in d:
        raise ConfigError("coordinated-turn entries need an omega")
    return TransitionModel(d["model"], T, float(d.get("omega", 0.0)))


def parse_experiment(doc: dict) -> Experiment:
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"scenario invalid at {where}: {exc.message}") from None
    try:
        return _build(doc)
    except ConfigError:
        raise
    except TrackingError as exc:
        raise ConfigError(str(exc)) from exc


def _build(doc: dict) -> Experiment:
    T = float(doc["T"])
    targets = tuple(
        TargetSpec(np.asarray(t["x0"], float),
                   tuple(MotionSegment(_transition(s, T), s["steps"]) for s in t["segments"]))
        for t in doc["targets"])
    sensors = tuple(
        SensorSpec(SensorPose(*map(float, s["position"])),
                   MeasurementNoise(float(s["sigma_r"]), float(s["sigma_theta"])),
                   float(s.get("r_max", math.inf)))
        for s in doc.get("sensors", []))
    clutter = doc.get("clutter", {})
    own = doc.get("ownship")
    known = doc.get("association", "known") == "known"
    if not known:
        for s in sensors:
            if math.isinf(s.r_max):
                raise ConfigError("sensors need r_max when association is unknown")
    sc = Scenario(
        name=doc["name"],
        targets=targets,
        sensors=sensors,
        T=T,
        horizon=int(doc["horizon"]),
        p_detect=float(clutter.get("p_detect", 1.0)),
        clutter_rate=float(clutter.get("rate", 0.0)),
        truth_sigma=tuple(doc.get("truth", {}).get("sigma", (0.0, 0.0))),
        known_association=known,
        range_limited=bool(clutter.get("range_limited", False)),
        ownship_legs=None if own is None else tuple(
            OwnshipLeg(float(l["course_deg"]), float(l["speed_kn"]), int(l["steps"])) for l in own["legs"]),
        bearing_sigma=0.0 if own is None else float(own["sigma_theta"]),
    )
    if known and not sc.bearings_only and len(sensors) != 1:
        raise ConfigError("known-association scenarios use exactly one sensor")
    if sc.bearings_only and sc.n_targets != 1:
        raise ConfigError("bearings-only scenarios track a single target")

    f = doc["filter"]
    K = sc.n_targets
    if "process_noise_diag" in f:
        q = np.stack([np.diag(r) for r in _per_target(f["process_noise_diag"], K, "process_noise_diag")])
    elif "process_noise_sigma" in f:
        sx, sy = f["process_noise_sigma"]
        q = np.repeat(white_noise_q(sx, sy, T)[None], K, axis=0)
    else:
        raise ConfigError("filter needs process_noise_diag or process_noise_sigma")
    models = tuple(_transition(m, T) for m in f.get("models", [{"model": "cv"}]))
    s = len(models)
    pi = np.asarray(f.get("mode_transition", np.eye(s)), dtype=float)
    p0 = np.asarray(f.get("initial_mode_probs", np.full(s, 1.0 / s)), dtype=float)
    if pi.shape != (s, s) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-12):
        raise ConfigError("mode_transition must be a row-stochastic matrix with one row per model")
    if p0.shape != (s,) or abs(p0.sum() - 1.0) > 1e-9:
        raise ConfigError("initial_mode_probs must have one entry per model and sum to one")
    n = int(f.get("n_particles", 100))
    n_thr = f.get("n_thr")
    if n_thr is not None and not 1 <= n_thr <= n:
        raise ConfigError("n_thr must lie in [1, n_particles]")
    spec = FilterSpec(
        prior_mean=_per_target(f["prior_mean"], K, "prior_mean"),
        prior_cov=np.stack([np.diag(r) for r in _per_target(f["prior_cov_diag"], K, "prior_cov_diag")]),
        process_noise=q,
        default=f.get("default", "pf"),
        n_particles=n,
        n_thr=None if n_thr is None else float(n_thr),
        roughening_k=float(f.get("roughening_k", 0.2)),
        roughening_scale=f.get("roughening_scale", "variance"),
        resample=f.get("resample", "systematic"),
        index_sampler=f.get("index_sampler", "stratified"),
        gate_chi2=float(f.get("gate_chi2", 9.21)),
        models=models,
        mode_transition=pi,
        initial_mode_probs=p0,
    )
    run = doc.get("run", {})
    return Experiment(sc, spec, int(run.get("runs", 1)), int(run.get("seed", 0)),
                      float(run.get("divergence_threshold", 50.0)))


def with_overrides(exp: Experiment, *, particles=None, runs=None, seed=None, kind=None) -> Experiment:
    spec = exp.filter
    if particles is not None:
        if particles < 1:
            raise ConfigError("--particles must be at least 1")
        n_thr = spec.n_thr if spec.n_thr is None or spec.n_thr <= particles else float(particles)
        spec = replace(spec, n_particles=int(particles), n_thr=n_thr)
    if kind is not None:
        if kind not in FILTERS:
            raise ConfigError(f"unknown filter {kind!r}")
        spec = replace(spec, default=kind)
    if runs is not None and runs < 1:
        raise ConfigError("--runs must be at least 1")
    return replace(exp, filter=spec, runs=exp.runs if runs is None else int(runs),
                   seed=exp.seed if seed is None else int(seed))
