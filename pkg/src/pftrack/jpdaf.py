"""Monte Carlo JPDA filters, with and without multiple motion models.

Each target keeps its own particle cloud. At every step the clouds are
predicted, each observer's measurements are associated through a joint
hypothesis enumeration, and every target is reweighted with the mixture of
measurement likelihoods its marginal association probabilities imply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .association import (
    DEFAULT_CHI2,
    AssociationModel,
    gate,
    loglik_matrix,
    observer_beta,
    predictive_gaussian,
    predictive_loglik,
    target_loglik,
)
from .errors import DegenerateAssociationError, InvalidArgumentError
from .filters import Estimate, FilterConfig, _weighted_update
from .mmpf import AugmentedParticleSet, check_transition_matrix, mode_probabilities, propagate_regimes, regime_transition
from .particles import ParticleSet, normalize, resample_indices, roughen_states


@dataclass(frozen=True)
class ObservationFrame:
    """Measurements from one observer at one step, as an ``(M, 2)`` array."""
    observer_id: int
    measurements: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.measurements, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "measurements", y)

    @property
    def m(self) -> int:
        return self.measurements.shape[0]


@dataclass
class JPDAStepInfo:
    betas: list  # per observer, (M_i+1, K)
    gated: list  # per observer, per target list of 1-based validated indices
    warnings: int = 0  # observers downgraded to all-clutter plus weight resets


def _frames_as_arrays(frames) -> list[np.ndarray]:
    out = []
    for f in frames:
        out.append(f.measurements if isinstance(f, ObservationFrame) else np.asarray(f, float).reshape(-1, 2))
    return out


def jpda_loglik(prev_log_weights: Sequence[np.ndarray], proposed: Sequence[np.ndarray], frames,
                sensors: Sequence, models, chi2: float = DEFAULT_CHI2):
    """Association stage shared by both filters.

    Returns per-target log-likelihood increments ``(N,)`` and step info.
    ``models`` is one :class:`AssociationModel` or one per observer.
    """
    K = len(proposed)
    ys = _frames_as_arrays(frames)
    if len(ys) != len(sensors):
        raise InvalidArgumentError("one frame per sensor is required")
    if isinstance(models, AssociationModel):
        models = [models] * len(sensors)
    alphas = [np.exp(normalize(lw)) for lw in prev_log_weights]  # prior proposal
    info = JPDAStepInfo([], [])
    per_target_betas = [[] for _ in range(K)]
    per_target_ll = [[] for _ in range(K)]
    for y, sensor, model in zip(ys, sensors, models):
        M = y.shape[0]
        lls = [loglik_matrix(y, x, sensor) for x in proposed]
        log_pred = np.zeros((M, K))
        validated = []
        for k in range(K):
            log_pred[:, k] = predictive_loglik(alphas[k], lls[k]) if M else []
            if math.isinf(chi2):
                validated.append(list(range(1, M + 1)))
            else:
                validated.append(gate(predictive_gaussian(proposed[k], alphas[k], sensor), y, chi2)[0])
        try:
            beta = observer_beta(log_pred, model, validated)
        except DegenerateAssociationError:
            beta = np.zeros((M + 1, K))
            beta[0] = 1.0
            info.warnings += 1
        info.betas.append(beta)
        info.gated.append(validated)
        for k in range(K):
            per_target_betas[k].append(beta[:, k])
            per_target_ll[k].append(lls[k])
    incs = []
    for k in range(K):
        n = proposed[k].shape[0]
        inc = target_loglik(per_target_betas[k], per_target_ll[k]) if ys else np.zeros(n)
        incs.append(inc)
    return incs, info


@dataclass(frozen=True)
class JPDAResult:
    particles: list  # ParticleSet or AugmentedParticleSet per target
    estimates: list  # Estimate per target, before resampling
    info: JPDAStepInfo
    mode_probs: list | None = None  # per target, multiple-model filter only


def _maybe_resample(states, log_weights, cfg: FilterConfig, rng, regimes=None):
    w = np.exp(log_weights)
    if 1.0 / np.dot(w, w) >= cfg.threshold:
        return states, log_weights, regimes
    idx = resample_indices(log_weights, cfg.resample_scheme, rng)
    states = roughen_states(states[idx], cfg.roughening, rng)
    lw = np.full(states.shape[0], -np.log(states.shape[0]))
    return states, lw, None if regimes is None else regimes[idx]


def mcjpdaf_step(sets: Sequence[ParticleSet], frames, sensors: Sequence, model, dynamics: Sequence,
                 cfg: FilterConfig, rng, chi2: float = DEFAULT_CHI2) -> JPDAResult:
    """One MC-JPDAF cycle with the transitional prior as proposal."""
    if len(sets) != len(dynamics):
        raise InvalidArgumentError("one dynamics model per target is required")
    proposed = [dyn.sample(ps.states, rng) for ps, dyn in zip(sets, dynamics)]
    prev = [ps.log_weights for ps in sets]
    incs, info = jpda_loglik(prev, proposed, frames, sensors, model, chi2)
    out_sets, ests = [], []
    for k, ps in enumerate(sets):
        upd, est = _weighted_update(ps, proposed[k], ps.log_weights + incs[k])
        info.warnings += int(est.degenerate)
        ests.append(est)
        states, lw, _ = _maybe_resample(upd.states, upd.log_weights, cfg, rng)
        out_sets.append(ParticleSet(states, lw))
    return JPDAResult(out_sets, ests, info)


def mcmmjpdaf_step(sets: Sequence[AugmentedParticleSet], frames, pi, models: Sequence, sensors: Sequence,
                   model, cfg: FilterConfig, rng, chi2: float = DEFAULT_CHI2) -> JPDAResult:
    """MC-JPDAF with per-target regime transition and regime-conditioned proposals.

    ``models`` lists one dynamics per regime, shared by all targets, or one
    such list per target.
    """
    pi = check_transition_matrix(pi)
    per_target = models if isinstance(models[0], (list, tuple)) else [models] * len(sets)
    if any(pi.shape[0] != len(m) for m in per_target):
        raise InvalidArgumentError("one motion model per regime is required")
    regimes, proposed = [], []
    for aps, mods in zip(sets, per_target):
        reg = regime_transition(aps.regimes, pi, rng)
        regimes.append(reg)
        proposed.append(propagate_regimes(aps.states, reg, mods, rng))
    prev = [aps.log_weights for aps in sets]
    incs, info = jpda_loglik(prev, proposed, frames, sensors, model, chi2)
    out_sets, ests, probs = [], [], []
    for k, aps in enumerate(sets):
        upd, est = _weighted_update(aps, proposed[k], aps.log_weights + incs[k])
        info.warnings += int(est.degenerate)
        ests.append(est)
        probs.append(mode_probabilities(AugmentedParticleSet(upd.states, regimes[k], upd.log_weights), pi.shape[0]))
        states, lw, reg = _maybe_resample(upd.states, upd.log_weights, cfg, rng, regimes[k])
        out_sets.append(AugmentedParticleSet(states, reg, lw))
    return JPDAResult(out_sets, ests, info, probs)
