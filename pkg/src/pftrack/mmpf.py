"""Multiple model particle filter.

Each particle carries a discrete regime label selecting the motion model
that propagates it. Labels are 0-based here: regime ``i`` means model
``models[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .filters import Estimate, FilterConfig, _weighted_update
from .particles import ParticleSet, resample_indices, roughen_states, sample_indices_scan


def check_transition_matrix(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise InvalidArgumentError("mode transition matrix must be square")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-12):
        raise InvalidArgumentError("mode transition matrix must be row-stochastic")
    return pi


@dataclass(frozen=True)
class AugmentedParticleSet:
    states: np.ndarray  # (N, d)
    regimes: np.ndarray  # (N,) int, 0-based
    log_weights: np.ndarray  # (N,)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        r = np.asarray(self.regimes, dtype=int).reshape(-1)
        lw = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if s.ndim != 2 or not (s.shape[0] == r.size == lw.size) or r.size < 1:
            raise InvalidArgumentError("states, regimes and weights must be parallel arrays")
        if np.any(r < 0):
            raise InvalidArgumentError("regime labels must be non-negative")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "regimes", r)
        object.__setattr__(self, "log_weights", lw)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    def particle_set(self) -> ParticleSet:
        return ParticleSet(self.states, self.log_weights)


def initial_regimes(n: int, probs, rng) -> np.ndarray:
    """Split ``n`` particles across modes in proportion to ``probs``.

    Each mode gets ``floor(n * p_i)`` particles; the few left over are drawn
    at random from ``probs``.
    """
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError("initial mode probabilities must sum to one")
    counts = np.floor(n * probs).astype(int)
    labels = np.repeat(np.arange(probs.size), counts)
    rest = n - labels.size
    if rest:
        labels = np.concatenate([labels, sample_indices_scan(probs, rest, rng)])
    return labels


def regime_transition(regimes, pi, rng) -> np.ndarray:
    """Draw each label's successor from its row of ``pi`` by cumulative scan."""
    pi = check_transition_matrix(pi)
    regimes = np.asarray(regimes, dtype=int)
    s = pi.shape[0]
    if s == 1:
        return regimes.copy()
    c = np.cumsum(pi, axis=1)
    c[:, -1] = 1.0
    u = rng.random(regimes.size)
    # first column with c >= u, the same rule as the resampling scans
    nxt = np.sum(c[regimes] < u[:, None], axis=1)
    return np.minimum(nxt, s - 1)


def propagate_regimes(states: np.ndarray, regimes: np.ndarray, models: Sequence, rng) -> np.ndarray:
    """Move each particle with the model its label selects.

    One block of standard normals is drawn for the whole cloud so that a
    single-model run consumes the generator exactly like a plain filter.
    """
    eps = rng.standard_normal(states.shape)
    if len(models) == 1:
        m = models[0]
        return m.mean(states) + eps @ m.chol.T
    out = np.empty_like(states)
    for i, m in enumerate(models):
        sel = regimes == i
        if np.any(sel):
            out[sel] = m.mean(states[sel]) + eps[sel] @ m.chol.T
    return out


def rc_sis_step(aps: AugmentedParticleSet, z, models: Sequence, meas_model, rng) -> AugmentedParticleSet:
    """Regime-conditioned SIS with the per-regime prior as proposal."""
    from .particles import normalize

    new = propagate_regimes(aps.states, aps.regimes, models, rng)
    lw = normalize(aps.log_weights + meas_model.loglik(z, new))
    return AugmentedParticleSet(new, aps.regimes, lw)


def mode_probabilities(aps: AugmentedParticleSet, s: int | None = None) -> np.ndarray:
    """Weighted share of each regime."""
    from .particles import normalize

    s = s or int(aps.regimes.max()) + 1
    w = np.exp(normalize(aps.log_weights))
    return np.bincount(aps.regimes, weights=w, minlength=s)[:s]


@dataclass(frozen=True)
class MMPFResult:
    particles: AugmentedParticleSet
    estimate: Estimate
    mode_probs: np.ndarray


def mmpf_step(aps: AugmentedParticleSet, z, pi, models: Sequence, meas_model,
              cfg: FilterConfig, rng) -> MMPFResult:
    """Regime transition, regime-conditioned SIS, then optional resample.

    Resampling moves labels together with their states; roughening jitters
    only the continuous states.
    """
    pi = check_transition_matrix(pi)
    if pi.shape[0] != len(models):
        raise InvalidArgumentError("one motion model per regime is required")
    regimes = regime_transition(aps.regimes, pi, rng)
    new = propagate_regimes(aps.states, regimes, models, rng)
    ps, est = _weighted_update(aps, new, aps.log_weights + meas_model.loglik(z, new))
    out = AugmentedParticleSet(ps.states, regimes, ps.log_weights)
    probs = mode_probabilities(out, len(models))
    w = np.exp(out.log_weights)
    if 1.0 / np.dot(w, w) < cfg.threshold:
        idx = resample_indices(out.log_weights, cfg.resample_scheme, rng)
        states = roughen_states(out.states[idx], cfg.roughening, rng)
        out = AugmentedParticleSet(states, regimes[idx], np.full(out.n, -np.log(out.n)))
    return MMPFResult(out, est, probs)
