"""Monte Carlo experiment execution and output writing."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from .config import FILTERS, Experiment
from .errors import ConfigError
from .filters import (
    FilterConfig,
    GaussianBelief,
    StackedMeasurementModel,
    bearings_only_ekf_step,
    bearings_only_pf_step,
    bootstrap_step,
    ekf_step,
    generic_pf_step,
    PriorProposal,
    sample_prior,
)
from .ippf import PartitionedSet, ippf_step
from .jpdaf import mcjpdaf_step, mcmmjpdaf_step
from .metrics import MetricsReport, detect_divergence, detect_swaps, position_sq_errors
from .mmpf import AugmentedParticleSet, initial_regimes, mmpf_step
from .models import LinearGaussianDynamics, NorthBearingModel, RangeBearingModel, block_dynamics
from .association import AssociationModel
from .particles import ParticleSet, RougheningParams
from .simulator import ownship_track, simulate_bearings_only, simulate_observations, simulate_truth


@dataclass
class RunTrace:
    truth: np.ndarray  # (H+1, K, 4)
    est: np.ndarray  # (H, K, 4), steps 1..H
    cov_trace: np.ndarray  # (H, K)
    mode_probs: Optional[np.ndarray]  # (H, K, s)
    warnings: int = 0


def check_compatibility(exp: Experiment, kind: str) -> None:
    sc, spec = exp.scenario, exp.filter
    if kind not in FILTERS:
        raise ConfigError(f"unknown filter {kind!r}")
    jpda = kind in ("mcjpdaf", "mcmmjpdaf")
    if sc.bearings_only and kind not in ("ekf", "pf", "bootstrap"):
        raise ConfigError(f"{kind} does not support bearings-only scenarios")
    if jpda and sc.known_association:
        raise ConfigError(f"{kind} needs a scenario with unknown association (clutter and missed detections)")
    if not jpda and not sc.known_association:
        raise ConfigError(f"{kind} needs pre-associated measurements; use mcjpdaf or mcmmjpdaf")
    if kind in ("ekf", "mmpf") and sc.n_targets != 1:
        raise ConfigError(f"{kind} tracks a single target")


def _seeds(seed: int, run: int) -> tuple[np.random.Generator, np.random.Generator]:
    sim, filt = np.random.SeedSequence(seed, spawn_key=(run,)).spawn(2)
    return np.random.default_rng(sim), np.random.default_rng(filt)


def _filter_config(spec) -> FilterConfig:
    return FilterConfig(spec.n_particles, spec.n_thr,
                        RougheningParams(spec.roughening_k, None, spec.roughening_scale), spec.resample)


def run_once(exp: Experiment, kind: str, run: int) -> RunTrace:
    """Simulate one run and filter it with ``kind``."""
    sim_rng, rng = _seeds(exp.seed, run)
    sc, spec = exp.scenario, exp.filter
    truth = simulate_truth(sc, sim_rng)
    if sc.bearings_only:
        return _run_bearings_only(exp, kind, truth.states, sim_rng, rng)
    meas = simulate_observations(truth, sc, sim_rng)
    H, K = sc.horizon, sc.n_targets
    cfg = _filter_config(spec)
    F0 = spec.models[0].matrix()
    dyns = [LinearGaussianDynamics(F0, spec.process_noise[k]) for k in range(K)]
    mm_models = [[LinearGaussianDynamics(m.matrix(), spec.process_noise[k]) for m in spec.models] for k in range(K)]
    sensors = [RangeBearingModel(s.pose, s.noise) for s in sc.sensors]
    est = np.empty((H, K, 4))
    ctr = np.empty((H, K))
    probs = None
    warnings = 0

    def record(t, k, e):
        est[t, k] = e.mean
        ctr[t, k] = np.trace(e.cov)

    if kind == "ekf":
        b = GaussianBelief(spec.prior_mean[0], spec.prior_cov[0])
        for t in range(H):
            b = ekf_step(b, meas.frames[t][0][0], dyns[0].F, dyns[0].Q, sensors[0])
            record(t, 0, b)
    elif kind in ("pf", "bootstrap"):
        dyn = block_dynamics(dyns)
        mm = StackedMeasurementModel([sensors[0]] * K)
        prior = GaussianBelief(spec.prior_mean.reshape(-1), block_diag(*spec.prior_cov))
        ps = sample_prior(prior, spec.n_particles, rng)
        q = PriorProposal(dyn)
        for t in range(H):
            zs = list(meas.frames[t][0])
            if kind == "bootstrap":
                ps, e = bootstrap_step(ps, zs, dyn, mm, cfg, rng)
            else:
                ps, e = generic_pf_step(ps, zs, q, dyn, mm, cfg, rng)
            warnings += int(e.degenerate)
            for k in range(K):
                sl = slice(4 * k, 4 * k + 4)
                est[t, k] = e.mean[sl]
                ctr[t, k] = np.trace(e.cov[sl, sl])
    elif kind == "ippf":
        init = np.stack([sample_prior(GaussianBelief(spec.prior_mean[k], spec.prior_cov[k]),
                                      spec.n_particles, rng).states for k in range(K)], axis=1)
        ps = PartitionedSet.uniform(init)
        for t in range(H):
            res = ippf_step(ps, list(meas.frames[t][0]), dyns, [sensors[0]] * K, cfg, rng,
                            spec.index_sampler, recover=True)
            ps = res.particles
            warnings += int(res.estimates[0].degenerate)
            for k in range(K):
                record(t, k, res.estimates[k])
    elif kind == "mmpf":
        s = len(spec.models)
        probs = np.empty((H, 1, s))
        ps0 = sample_prior(GaussianBelief(spec.prior_mean[0], spec.prior_cov[0]), spec.n_particles, rng)
        aps = AugmentedParticleSet(ps0.states, initial_regimes(spec.n_particles, spec.initial_mode_probs, rng),
                                   ps0.log_weights)
        for t in range(H):
            res = mmpf_step(aps, meas.frames[t][0][0], spec.mode_transition, mm_models[0], sensors[0], cfg, rng)
            aps = res.particles
            warnings += int(res.estimate.degenerate)
            record(t, 0, res.estimate)
            probs[t, 0] = res.mode_probs
    else:
        assoc = [AssociationModel.for_range(sc.p_detect, sc.clutter_rate, s.r_max) for s in sc.sensors]
        multi = kind == "mcmmjpdaf"
        s = len(spec.models)
        if multi:
            probs = np.empty((H, K, s))
        sets = []
        for k in range(K):
            ps0 = sample_prior(GaussianBelief(spec.prior_mean[k], spec.prior_cov[k]), spec.n_particles, rng)
            if multi:
                reg = initial_regimes(spec.n_particles, spec.initial_mode_probs, rng)
                sets.append(AugmentedParticleSet(ps0.states, reg, ps0.log_weights))
            else:
                sets.append(ps0)
        for t in range(H):
            frames = meas.frames[t]
            if multi:
                res = mcmmjpdaf_step(sets, frames, spec.mode_transition, mm_models, sensors, assoc, cfg, rng,
                                     spec.gate_chi2)
                probs[t] = np.stack(res.mode_probs)
            else:
                res = mcjpdaf_step(sets, frames, sensors, assoc, dyns, cfg, rng, spec.gate_chi2)
            sets = res.particles
            warnings += res.info.warnings
            for k in range(K):
                record(t, k, res.estimates[k])
    return RunTrace(truth.states, est, ctr, probs, warnings)


def _run_bearings_only(exp, kind, target_states, sim_rng, rng) -> RunTrace:
    sc, spec = exp.scenario, exp.filter
    H = sc.horizon
    own = ownship_track(sc.ownship_legs, sc.T)
    z = simulate_bearings_only(target_states[:, 0], own, sc.bearing_sigma, sim_rng)
    meas = NorthBearingModel(sc.bearing_sigma)
    base = LinearGaussianDynamics(spec.models[0].matrix(), spec.process_noise[0])
    prior = GaussianBelief(spec.prior_mean[0] - own[0], spec.prior_cov[0])
    est = np.empty((H, 1, 4))
    ctr = np.empty((H, 1))
    warnings = 0
    if kind == "ekf":
        b = prior
        for t in range(1, H + 1):
            b, absolute = bearings_only_ekf_step(b, z[t - 1], own[t], own[t - 1], base, meas)
            est[t - 1, 0] = absolute
            ctr[t - 1, 0] = np.trace(b.cov)
    else:
        cfg = _filter_config(spec)
        ps = sample_prior(prior, spec.n_particles, rng)
        for t in range(1, H + 1):
            ps, e, absolute = bearings_only_pf_step(ps, z[t - 1], own[t], own[t - 1], base, meas, cfg, rng,
                                                    bootstrap=(kind == "bootstrap"))
            warnings += int(e.degenerate)
            est[t - 1, 0] = absolute
            ctr[t - 1, 0] = np.trace(e.cov)
    return RunTrace(target_states, est, ctr, None, warnings)


def _run_job(args):
    exp, kind, run = args
    return run_once(exp, kind, run)


def correct_mode_indices(exp: Experiment, k: int) -> list[Optional[int]]:
    """Filter model matching target ``k``'s true motion at each step 1..H.

    ``None`` outside turns; inside a turn, the turn model whose rate is
    closest to the true one.
    """
    turn_models = [(i, m.omega) for i, m in enumerate(exp.filter.models) if m.kind == "ct"]
    out: list[Optional[int]] = []
    for m in exp.scenario.targets[k].schedule():
        if m.kind != "ct" or not turn_models:
            out.append(None)
        else:
            out.append(min(turn_models, key=lambda im: (abs(im[1] - m.omega), im[0]))[0])
    return out


def summarize(exp: Experiment, kind: str, traces: list[RunTrace], wall: float = 0.0) -> MetricsReport:
    truth = np.stack([tr.truth[1:] for tr in traces])  # (R, H, K, 4)
    est = np.stack([tr.est for tr in traces])
    sq = position_sq_errors(est, truth)  # (R, H, K)
    mse = sq.mean(axis=0)
    final_err = np.sqrt(sq[:, -1, :])
    diverged = [i for i, tr in enumerate(traces)
                if np.any(detect_divergence(tr.est[-1], tr.truth[-1], exp.divergence_threshold))]
    swapped = [i for i, tr in enumerate(traces)
               if tr.truth.shape[1] > 1 and detect_swaps(tr.est[-1], tr.truth[-1]) is not None]
    mode_mean = None
    maneuver = None
    if traces[0].mode_probs is not None:
        mp = np.stack([tr.mode_probs for tr in traces])  # (R, H, K, s)
        mode_mean = mp.mean(axis=0).tolist()
        vals = []
        for k in range(mp.shape[2]):
            for t, c in enumerate(correct_mode_indices(exp, k)):
                if c is not None:
                    vals.append(mp[:, t, k, c])
        if vals:
            maneuver = float(np.mean(np.concatenate(vals)))
    return MetricsReport(
        scenario=exp.scenario.name,
        filter=kind,
        n_runs=len(traces),
        seed=exp.seed,
        n_particles=exp.filter.n_particles,
        divergence_threshold=exp.divergence_threshold,
        mse=mse.tolist(),
        rmse_time_avg=np.sqrt(mse).mean(axis=0).tolist(),
        final_errors=final_err.tolist(),
        diverged_runs=diverged,
        swapped_runs=swapped,
        divergence_count=len(diverged),
        swap_count=len(swapped),
        warnings=int(sum(tr.warnings for tr in traces)),
        mode_prob_mean=mode_mean,
        maneuver_mode_prob=maneuver,
        wall_clock_s=wall,
    )


def run_monte_carlo(exp: Experiment, kind: Optional[str] = None, workers: int = 1):
    """Run ``exp.runs`` independent runs; returns ``(report, traces)``.

    Each run draws from its own stream derived from ``(seed, run index)``,
    so results do not depend on ``workers``.
    """
    kind = kind or exp.filter.default
    check_compatibility(exp, kind)
    t0 = time.perf_counter()
    jobs = [(exp, kind, i) for i in range(exp.runs)]
    if workers > 1 and exp.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_job, jobs))
    else:
        traces = [_run_job(j) for j in jobs]
    return summarize(exp, kind, traces, time.perf_counter() - t0), traces


def _fmt(x) -> str:
    return repr(float(x))


def write_outputs(report: MetricsReport, traces: list[RunTrace], outdir) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"wall_clock_s": report.wall_clock_s}) + "\n")
    s = traces[0].mode_probs.shape[2] if traces[0].mode_probs is not None else 0
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "t", "target", "true_x", "true_y", "true_vx", "true_vy",
                    "est_x", "est_y", "est_vx", "est_vy", "cov_trace"]
                   + [f"mode_prob_{i + 1}" for i in range(s)])
        for r, tr in enumerate(traces):
            H, K = tr.est.shape[:2]
            for t in range(H):
                for k in range(K):
                    x = tr.truth[t + 1, k]
                    e = tr.est[t, k]
                    row = [r, t + 1, k + 1, _fmt(x[0]), _fmt(x[2]), _fmt(x[1]), _fmt(x[3]),
                           _fmt(e[0]), _fmt(e[2]), _fmt(e[1]), _fmt(e[3]), _fmt(tr.cov_trace[t, k])]
                    if s:
                        row += [_fmt(p) for p in tr.mode_probs[t, k]]
                    w.writerow(row)
    mse = np.asarray(report.mse)
    with open(out / "mse.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        K = mse.shape[1]
        w.writerow(["t"] + [f"mse_target_{k + 1}" for k in range(K)] + ["rmse"])
        for t in range(mse.shape[0]):
            w.writerow([t + 1] + [_fmt(v) for v in mse[t]] + [_fmt(np.sqrt(mse[t].mean()))])
    return out
