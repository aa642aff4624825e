"""Independent partition particle filter for several independent targets.

Each joint particle holds one partition per target. Partitions are proposed
and scored separately, then recombined by drawing an index map per target
from that target's normalized likelihood. The crossover lets good target-1
states pair with good target-2 states even when no single joint particle
had both.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateWeightsError, InvalidArgumentError
from .filters import Estimate, FilterConfig
from .particles import SAMPLERS, normalize, resample_indices, roughen_states, weighted_moments


@dataclass(frozen=True)
class PartitionedSet:
    """Joint particles of shape ``(N, K, d)`` with log-weights ``(N,)``."""
    states: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        lw = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if s.ndim != 3 or s.shape[0] < 1 or s.shape[1] < 1 or s.shape[0] != lw.size:
            raise InvalidArgumentError("states must be (N, K, d) with N matching log_weights")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def uniform(cls, states) -> "PartitionedSet":
        states = np.asarray(states, dtype=float)
        return cls(states, np.full(states.shape[0], -np.log(states.shape[0])))

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def n_targets(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class IPPFResult:
    particles: PartitionedSet
    estimates: list  # one Estimate per target
    index_maps: np.ndarray  # (K, N) crossover indices, 0-based
    log_rho: np.ndarray  # (K, N) normalized secondary log-weights
    loglik: np.ndarray  # (K, N) per-partition log-likelihoods of the proposals


def crossover_indices(rho_per_partition, N: int, rng, method: str = "stratified") -> np.ndarray:
    """One independent length-``N`` index map per partition."""
    try:
        sampler = SAMPLERS[method]
    except KeyError:
        raise InvalidArgumentError(f"unknown index sampler {method!r}") from None
    return np.stack([sampler(rho, N, rng) for rho in rho_per_partition])


def ippf_step(ps: PartitionedSet, zs: Sequence, dynamics: Sequence, meas_models: Sequence,
              cfg: FilterConfig, rng, sampler: str = "stratified",
              recover: bool = False) -> IPPFResult:
    """One IPPF cycle with the transitional prior as proposal.

    ``zs[k]``, ``dynamics[k]`` and ``meas_models[k]`` belong to target ``k``;
    measurements are assumed to be associated already. A partition whose
    likelihoods are all zero raises, unless ``recover`` is set, in which case
    that partition is crossed over uniformly and the estimates are flagged.
    """
    N, K, _ = ps.states.shape
    if not (len(zs) == len(dynamics) == len(meas_models) == K):
        raise InvalidArgumentError("need one measurement, dynamics and sensor per target")

    proposed = np.empty_like(ps.states)
    loglik = np.empty((K, N))
    log_rho = np.empty((K, N))
    degenerate = False
    for k in range(K):
        proposed[:, k] = dynamics[k].sample(ps.states[:, k], rng)
        loglik[k] = meas_models[k].loglik(zs[k], proposed[:, k])
        if not np.any(loglik[k] > -np.inf):
            if not recover:
                raise DegenerateWeightsError(partition=k)
            loglik[k] = 0.0
            degenerate = True
        log_rho[k] = loglik[k] - logsumexp(loglik[k])

    maps = crossover_indices(np.exp(log_rho), N, rng, sampler)
    k_idx = np.arange(K)
    new_states = proposed[maps.T, k_idx]  # (N, K, d)

    prev = normalize(ps.log_weights)
    lw_prev = prev[maps].sum(axis=0)
    lik = loglik[k_idx[:, None], maps].sum(axis=0)
    rho = log_rho[k_idx[:, None], maps].sum(axis=0)
    lw = normalize(lw_prev + lik - rho)

    w = np.exp(lw)
    ests = [Estimate(*weighted_moments(new_states[:, k], w), degenerate) for k in range(K)]
    out = PartitionedSet(new_states, lw)
    if 1.0 / np.dot(w, w) < cfg.threshold:
        out = _resample_roughen(out, cfg, rng)
    return IPPFResult(out, ests, maps, log_rho, loglik)


def _resample_roughen(ps: PartitionedSet, cfg: FilterConfig, rng) -> PartitionedSet:
    idx = resample_indices(ps.log_weights, cfg.resample_scheme, rng)
    N, K, d = ps.states.shape
    flat = roughen_states(ps.states[idx].reshape(N, K * d), cfg.roughening, rng)
    return PartitionedSet.uniform(flat.reshape(N, K, d))
