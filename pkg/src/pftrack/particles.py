"""Weighted particle sets, resampling, roughening and index samplers.

Weights are kept as log-weights. Indices returned by the samplers are
0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateWeightsError, InvalidArgumentError


@dataclass(frozen=True)
class ParticleSet:
    """``N`` samples of dimension ``d`` with log-domain weights."""
    states: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        lw = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if s.shape[0] < 1 or s.shape[0] != lw.shape[0]:
            raise InvalidArgumentError("states and log_weights must have equal, non-zero length")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def uniform(cls, states) -> "ParticleSet":
        states = np.asarray(states, dtype=float)
        n = states.shape[0]
        return cls(states, np.full(n, -np.log(n)))

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def normalize(log_weights) -> np.ndarray:
    """Shift log-weights so that their exponentials sum to one."""
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0 or not np.any(lw > -np.inf):
        raise DegenerateWeightsError()
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise DegenerateWeightsError("importance weights contain NaN or +inf")
    return lw - logsumexp(lw)


def _check_normalized(w: np.ndarray, tol: float = 1e-8) -> None:
    if np.any(w < 0) or abs(w.sum() - 1.0) > tol:
        raise InvalidArgumentError("weights are not normalized")


def effective_sample_size(weights) -> float:
    """``1 / sum(w^2)`` for linear-domain normalized weights."""
    w = np.asarray(weights, dtype=float)
    _check_normalized(w)
    return float(1.0 / np.dot(w, w))


def _cumulative(rho: np.ndarray) -> np.ndarray:
    c = np.cumsum(rho)
    c[-1] = 1.0  # guard against round-off leaving the last bin short
    return c


def _project(c: np.ndarray, u: np.ndarray) -> np.ndarray:
    # smallest m with c[m] >= u, i.e. "while c(m) < u: m += 1"
    return np.minimum(np.searchsorted(c, u, side="left"), c.size - 1)


def _as_probs(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or rho.size == 0:
        raise InvalidArgumentError("rho must be a non-empty vector")
    if np.any(rho < 0) or not np.isfinite(rho).all():
        raise InvalidArgumentError("rho must be finite and non-negative")
    total = rho.sum()
    if total <= 0:
        raise DegenerateWeightsError()
    return rho / total


def sample_indices_scan(rho, R: int, rng: np.random.Generator) -> np.ndarray:
    """``R`` independent categorical draws, one uniform per draw."""
    if R < 1:
        raise InvalidArgumentError("R must be at least 1")
    c = _cumulative(_as_probs(rho))
    return _project(c, rng.random(R))


def sample_indices_stratified(rho, R: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic draws: one offset ``u1 ~ U[0, 1/R)`` and a regular comb."""
    if R < 1:
        raise InvalidArgumentError("R must be at least 1")
    c = _cumulative(_as_probs(rho))
    u = (rng.random() + np.arange(R)) / R
    return _project(c, u)


SAMPLERS = {
    "multinomial": sample_indices_scan,
    "scan": sample_indices_scan,
    "systematic": sample_indices_stratified,
    "stratified": sample_indices_stratified,
}


def _resample_with(ps: ParticleSet, sampler, rng) -> tuple[ParticleSet, np.ndarray]:
    w = np.exp(normalize(ps.log_weights))
    idx = sampler(w, ps.n, rng)
    return ParticleSet(ps.states[idx], np.full(ps.n, -np.log(ps.n))), idx


def multinomial_resample(ps: ParticleSet, rng) -> ParticleSet:
    return _resample_with(ps, sample_indices_scan, rng)[0]


def systematic_resample(ps: ParticleSet, rng) -> ParticleSet:
    return _resample_with(ps, sample_indices_stratified, rng)[0]


def resample_indices(log_weights, scheme: str, rng) -> np.ndarray:
    """Ancestor indices for a full resample under the named scheme."""
    try:
        sampler = SAMPLERS[scheme]
    except KeyError:
        raise InvalidArgumentError(f"unknown resampling scheme {scheme!r}") from None
    w = np.exp(normalize(log_weights))
    return sampler(w, w.size, rng)


@dataclass(frozen=True)
class RougheningParams:
    tuning_k: float = 0.2
    dim_d: int | None = None
    # "variance": K*M*N^(-1/d) is the variance; "std": it is the std deviation
    scale: str = "variance"

    def __post_init__(self):
        if self.tuning_k < 0:
            raise InvalidArgumentError("roughening constant must be non-negative")
        if self.scale not in ("variance", "std"):
            raise InvalidArgumentError(f"unknown roughening scale {self.scale!r}")


def roughening_std(states: np.ndarray, p: RougheningParams) -> np.ndarray:
    """Per-component jitter standard deviation for a particle cloud."""
    n, d = states.shape
    if n < 2 or p.tuning_k == 0:
        return np.zeros(d)
    dim = p.dim_d or d
    spread = states.max(axis=0) - states.min(axis=0)
    level = p.tuning_k * spread * n ** (-1.0 / dim)
    return np.sqrt(level) if p.scale == "variance" else level


def roughen_states(states: np.ndarray, p: RougheningParams, rng) -> np.ndarray:
    sd = roughening_std(states, p)
    if not np.any(sd):
        return states
    return states + rng.standard_normal(states.shape) * sd


def roughen(ps: ParticleSet, p: RougheningParams, rng) -> ParticleSet:
    """Jitter every particle component; weights are left untouched."""
    return ParticleSet(roughen_states(ps.states, p, rng), ps.log_weights)


def weighted_resample(ps: ParticleSet, g_values, rng, sampler=sample_indices_scan) -> ParticleSet:
    """Resample by a secondary function ``g`` and compensate the weights.

    Drawing from ``rho = g / sum(g)`` and weighting the copies by
    ``w / rho`` leaves the represented distribution unchanged.
    """
    g = np.asarray(g_values, dtype=float).reshape(-1)
    if g.size != ps.n:
        raise InvalidArgumentError("g_values must have one entry per particle")
    if np.any(~(g > 0)):
        raise InvalidArgumentError("secondary weights must be strictly positive")
    log_rho = np.log(g) - logsumexp(np.log(g))
    idx = sampler(np.exp(log_rho), ps.n, rng)
    lw = normalize(ps.log_weights)[idx] - log_rho[idx]
    return ParticleSet(ps.states[idx], normalize(lw))


def weighted_mean_cov(ps: ParticleSet) -> tuple[np.ndarray, np.ndarray]:
    w = np.exp(normalize(ps.log_weights))
    return weighted_moments(ps.states, w)


def weighted_moments(states: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = w @ states
    diff = states - mean
    cov = (diff * w[:, None]).T @ diff
    return mean, 0.5 * (cov + cov.T)
