"""Single-target filters: SIS, generic and bootstrap particle filters, EKF.

Every step function takes the filter state as a value and returns a new
one. Particle-filter steps also return a :class:`Estimate` computed from the
weighted cloud before any resampling takes place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import DegenerateWeightsError, InvalidArgumentError, NumericError
from .models import LinearGaussianDynamics, ownship_input
from .particles import (
    ParticleSet,
    RougheningParams,
    normalize,
    resample_indices,
    roughen_states,
    weighted_moments,
)


class ProposalDensity(Protocol):
    """Importance density ``q(x | x', z)``."""

    is_prior: bool

    def propose(self, states: np.ndarray, z, rng: np.random.Generator) -> np.ndarray: ...

    def logpdf(self, x_new: np.ndarray, x_prev: np.ndarray, z) -> np.ndarray: ...


@dataclass(frozen=True)
class PriorProposal:
    """The transitional prior used as proposal."""
    dynamics: LinearGaussianDynamics
    is_prior: bool = True

    def propose(self, states, z, rng):
        return self.dynamics.sample(states, rng)

    def logpdf(self, x_new, x_prev, z):
        return self.dynamics.logpdf(x_new, x_prev)


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 500
    n_thr: float | None = None  # defaults to N/2
    roughening: RougheningParams = field(default_factory=RougheningParams)
    resample_scheme: str = "systematic"

    def __post_init__(self):
        if self.n_particles < 1:
            raise InvalidArgumentError("n_particles must be at least 1")
        if self.n_thr is not None and not (1 <= self.n_thr <= self.n_particles):
            raise InvalidArgumentError("n_thr must lie in [1, n_particles]")
        if self.resample_scheme not in ("multinomial", "systematic"):
            raise InvalidArgumentError(f"unknown resampling scheme {self.resample_scheme!r}")

    @property
    def threshold(self) -> float:
        return self.n_particles / 2.0 if self.n_thr is None else float(self.n_thr)


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))


@dataclass(frozen=True)
class Estimate:
    mean: np.ndarray
    cov: np.ndarray
    degenerate: bool = False  # weights collapsed and were reset this step


def sample_prior(belief: GaussianBelief, n: int, rng) -> ParticleSet:
    """Initial cloud drawn from a Gaussian prior, uniform weights."""
    from .models import gaussian_noise, noise_factor

    L = noise_factor(belief.cov)
    states = belief.mean + gaussian_noise(L, n, rng)
    return ParticleSet.uniform(states)


def sis_step(ps: ParticleSet, z, q: ProposalDensity, dynamics, meas_model, rng) -> ParticleSet:
    """Propagate through ``q`` and update the weights; no resampling.

    The increment is ``log p(z|x) + log p(x|x') - log q(x|x', z)``; with the
    prior as proposal the last two terms cancel and are not evaluated.
    """
    new, lw = _sis_propagate(ps, z, q, dynamics, meas_model, rng)
    return ParticleSet(new, normalize(lw))


def _sis_propagate(ps, z, q, dynamics, meas_model, rng):
    new = q.propose(ps.states, z, rng)
    inc = meas_model.loglik(z, new)
    if not getattr(q, "is_prior", False):
        inc = inc + dynamics.logpdf(new, ps.states) - q.logpdf(new, ps.states, z)
    return new, ps.log_weights + inc


def _weighted_update(ps, new_states, lw) -> tuple[ParticleSet, Estimate]:
    """Normalize, or fall back to uniform weights on total degeneracy."""
    try:
        lw = normalize(lw)
        degenerate = False
    except DegenerateWeightsError:
        lw = np.full(new_states.shape[0], -np.log(new_states.shape[0]))
        degenerate = True
    mean, cov = weighted_moments(new_states, np.exp(lw))
    return ParticleSet(new_states, lw), Estimate(mean, cov, degenerate)


def resample_and_roughen(ps: ParticleSet, cfg: FilterConfig, rng) -> ParticleSet:
    idx = resample_indices(ps.log_weights, cfg.resample_scheme, rng)
    states = roughen_states(ps.states[idx], cfg.roughening, rng)
    return ParticleSet.uniform(states)


def generic_pf_step(ps, z, q, dynamics, meas_model, cfg: FilterConfig, rng):
    """SIS followed by resample + roughen when ``Neff < n_thr``."""
    new, lw = _sis_propagate(ps, z, q, dynamics, meas_model, rng)
    out, est = _weighted_update(ps, new, lw)
    w = np.exp(out.log_weights)
    if 1.0 / np.dot(w, w) < cfg.threshold:
        out = resample_and_roughen(out, cfg, rng)
    return out, est


def bootstrap_step(ps, z, dynamics, meas_model, cfg: FilterConfig, rng):
    """Prior proposal, likelihood weights, resample and roughen every step."""
    new, lw = _sis_propagate(ps, z, PriorProposal(dynamics), dynamics, meas_model, rng)
    out, est = _weighted_update(ps, new, lw)
    return resample_and_roughen(out, cfg, rng), est


def ekf_step(belief: GaussianBelief, z, F, Q, meas_model, offset=None) -> GaussianBelief:
    """One EKF predict/update cycle with the Jacobian at the predicted mean."""
    F = np.asarray(F, dtype=float)
    m = F @ belief.mean
    if offset is not None:
        m = m - offset
    P = F @ belief.cov @ F.T + Q
    H = meas_model.jacobian(m)
    zhat = meas_model.predict(m[None, :])[0]
    nu = meas_model.residual(np.asarray(z, float).reshape(zhat.shape), zhat)
    S = H @ P @ H.T + meas_model.cov
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise NumericError("innovation covariance is singular") from exc
    m = m + K @ nu
    I_KH = np.eye(P.shape[0]) - K @ H
    # Joseph form keeps P symmetric positive semi-definite
    P = I_KH @ P @ I_KH.T + K @ meas_model.cov @ K.T
    return GaussianBelief(m, 0.5 * (P + P.T))


# ---------------------------------------------------------------------------
# several targets tracked jointly by one stacked particle filter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StackedMeasurementModel:
    """Independent per-target sensors acting on a stacked joint state."""
    models: Sequence
    dim_per_target: int = 4

    def loglik(self, zs, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        d = self.dim_per_target
        out = np.zeros(states.shape[0])
        for k, (m, z) in enumerate(zip(self.models, zs)):
            out = out + m.loglik(z, states[:, k * d:(k + 1) * d])
        return out


# ---------------------------------------------------------------------------
# bearings-only tracking from a moving ownship
# ---------------------------------------------------------------------------

def relative_dynamics(base: LinearGaussianDynamics, own_now, own_prev) -> LinearGaussianDynamics:
    """Relative-state dynamics with the ownship input subtracted."""
    u = ownship_input(own_now, own_prev)
    return base.shifted(u if np.any(u) else None)


def bearings_only_pf_step(ps, z, own_now, own_prev, base, meas_model, cfg, rng, bootstrap=True):
    """Particle-filter step on relative states.

    Returns the new set, the relative estimate and the absolute target
    estimate (relative plus ownship).
    """
    dyn = relative_dynamics(base, own_now, own_prev)
    if bootstrap:
        out, est = bootstrap_step(ps, z, dyn, meas_model, cfg, rng)
    else:
        out, est = generic_pf_step(ps, z, PriorProposal(dyn), dyn, meas_model, cfg, rng)
    return out, est, est.mean + np.asarray(own_now, float)


def bearings_only_ekf_step(belief, z, own_now, own_prev, base, meas_model):
    u = ownship_input(own_now, own_prev)
    out = ekf_step(belief, z, base.F, base.Q, meas_model, offset=u)
    return out, out.mean + np.asarray(own_now, float)
