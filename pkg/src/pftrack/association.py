"""Measurement-to-target association for the Monte Carlo JPDA filters.

Hypotheses use 1-based indices with 0 as the "none" marker:

* measurement-oriented ``r``: ``r[j] = k`` means measurement ``j+1`` came
  from target ``k``, ``0`` means clutter;
* target-oriented ``r_tilde``: ``r_tilde[k] = j`` means target ``k+1``
  produced measurement ``j``, ``0`` means it was not detected.

Probabilities are handled in the log domain throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateAssociationError,
    InvalidArgumentError,
    InvalidHypothesisError,
    NumericError,
)
from .models import wrap_angle

DEFAULT_CHI2 = 9.21  # 2 degrees of freedom, 1% significance


# ---------------------------------------------------------------------------
# hypotheses and conversions
# ---------------------------------------------------------------------------

def _check_distinct(values: Sequence[int]) -> None:
    nz = [v for v in values if v != 0]
    if len(nz) != len(set(nz)):
        raise InvalidHypothesisError(f"repeated non-zero assignment in {tuple(values)}")


@dataclass(frozen=True)
class M2THypothesis:
    r: tuple
    n_targets: int

    def __post_init__(self):
        r = tuple(int(v) for v in self.r)
        if any(v < 0 or v > self.n_targets for v in r):
            raise InvalidHypothesisError(f"target index out of range in {r}")
        _check_distinct(r)
        object.__setattr__(self, "r", r)

    @property
    def m_target(self) -> int:
        return sum(1 for v in self.r if v)

    @property
    def m_clutter(self) -> int:
        return len(self.r) - self.m_target


@dataclass(frozen=True)
class T2MHypothesis:
    r_tilde: tuple
    n_meas: int

    def __post_init__(self):
        rt = tuple(int(v) for v in self.r_tilde)
        if any(v < 0 or v > self.n_meas for v in rt):
            raise InvalidHypothesisError(f"measurement index out of range in {rt}")
        _check_distinct(rt)
        object.__setattr__(self, "r_tilde", rt)

    @property
    def m_target(self) -> int:
        return sum(1 for v in self.r_tilde if v)

    @property
    def m_clutter(self) -> int:
        return self.n_meas - self.m_target


def t2m_from_m2t(h: M2THypothesis, K: Optional[int] = None) -> T2MHypothesis:
    K = h.n_targets if K is None else K
    rt = [0] * K
    for j, k in enumerate(h.r, start=1):
        if k == 0:
            continue
        if k > K:
            raise InvalidHypothesisError(f"target {k} exceeds K={K}")
        if rt[k - 1]:
            raise InvalidHypothesisError(f"target {k} assigned twice")
        rt[k - 1] = j
    return T2MHypothesis(tuple(rt), len(h.r))


def m2t_from_t2m(h: T2MHypothesis, M: Optional[int] = None) -> M2THypothesis:
    M = h.n_meas if M is None else M
    r = [0] * M
    for k, j in enumerate(h.r_tilde, start=1):
        if j == 0:
            continue
        if j > M:
            raise InvalidHypothesisError(f"measurement {j} exceeds M={M}")
        if r[j - 1]:
            raise InvalidHypothesisError(f"measurement {j} assigned twice")
        r[j - 1] = k
    return M2THypothesis(tuple(r), len(h.r_tilde))


def hypothesis_count(K: int, M: int) -> int:
    """Number of valid joint hypotheses for ``K`` targets and ``M`` measurements."""
    if K < 0 or M < 0:
        raise InvalidArgumentError("K and M must be non-negative")
    return sum(math.comb(K, t) * math.perm(M, t) for t in range(min(K, M) + 1))


def enumerate_hypotheses(K: int, M: int, validated: Optional[Sequence[Iterable[int]]] = None
                         ) -> list[T2MHypothesis]:
    """Depth-first enumeration over targets with used-measurement masking.

    ``validated[k]`` holds the 1-based measurement indices that passed
    target ``k``'s gate; ``None`` means every measurement is allowed.
    Targets are visited in ascending order and candidates ascending, with
    "undetected" tried first.
    """
    if validated is None:
        cands = [list(range(1, M + 1))] * K
    else:
        if len(validated) != K:
            raise InvalidArgumentError("one validation set per target is required")
        cands = []
        for v in validated:
            v = sorted(set(int(j) for j in v))
            if any(j < 1 or j > M for j in v):
                raise InvalidArgumentError(f"validated index out of range: {v}")
            cands.append(v)

    out: list[T2MHypothesis] = []
    current = [0] * K
    used = [False] * (M + 1)

    def visit(k: int) -> None:
        if k == K:
            out.append(T2MHypothesis(tuple(current), M))
            return
        current[k] = 0
        visit(k + 1)
        for j in cands[k]:
            if not used[j]:
                used[j] = True
                current[k] = j
                visit(k + 1)
                used[j] = False
        current[k] = 0

    visit(0)
    return out


# ---------------------------------------------------------------------------
# prior
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssociationModel:
    p_detect: float
    clutter_rate: float
    volume: float

    def __post_init__(self):
        if not 0.0 <= self.p_detect <= 1.0:
            raise InvalidArgumentError("p_detect must lie in [0, 1]")
        if self.clutter_rate < 0:
            raise InvalidArgumentError("clutter_rate must be non-negative")
        if not self.volume > 0:
            raise InvalidArgumentError("volume must be positive")

    @classmethod
    def for_range(cls, p_detect: float, clutter_rate: float, r_max: float) -> "AssociationModel":
        """Measurement space of ranges ``[0, r_max]`` and all bearings."""
        return cls(p_detect, clutter_rate, 2.0 * np.pi * r_max)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def poisson_logpmf(n: int, lam: float) -> float:
    if lam == 0:
        return 0.0 if n == 0 else -math.inf
    return n * math.log(lam) - lam - math.lgamma(n + 1)


def association_prior(h: T2MHypothesis, model: AssociationModel) -> float:
    """Unnormalized log-prior in its sequential factorized form.

    Target ``k`` contributes ``1 - P_D`` when undetected and ``P_D / M_k``
    when detected, where ``M_k`` counts measurements not yet claimed by
    targets ``1..k-1``. A reused measurement contributes a zero factor.
    """
    M = h.n_meas
    lp = poisson_logpmf(h.m_clutter, model.clutter_rate)
    used: set[int] = set()
    for j in h.r_tilde:
        if j == 0:
            lp += _log(1.0 - model.p_detect)
        elif j in used:
            return -math.inf
        else:
            lp += _log(model.p_detect) - math.log(M - len(used))
            used.add(j)
    return lp


# ---------------------------------------------------------------------------
# predictive quantities
# ---------------------------------------------------------------------------

def predictive_weights(prev_log_weights, x_new=None, x_prev=None, dynamics=None, proposal=None) -> np.ndarray:
    """Normalized predictive weights ``alpha``.

    With the transitional prior as proposal (``proposal`` is ``None`` or has
    ``is_prior`` set) the density ratio cancels and ``alpha`` equals the
    previous normalized weights.
    """
    lw = np.asarray(prev_log_weights, dtype=float)
    if proposal is not None and not getattr(proposal, "is_prior", False):
        lw = lw + dynamics.logpdf(x_new, x_prev) - proposal.logpdf(x_new, x_prev, None)
    from .particles import normalize

    return np.exp(normalize(lw))


def loglik_matrix(measurements: np.ndarray, particles: np.ndarray, sensor) -> np.ndarray:
    """``(M, N)`` table of per-particle measurement log-likelihoods."""
    measurements = np.asarray(measurements, dtype=float).reshape(-1, 2)
    if measurements.shape[0] == 0:
        return np.zeros((0, particles.shape[0]))
    return np.stack([sensor.loglik(z, particles) for z in measurements])


def predictive_loglik(alpha: np.ndarray, loglik: np.ndarray) -> np.ndarray:
    """Log of ``sum_n alpha_n p_T(y_j | x_n)`` for each row of ``loglik``."""
    with np.errstate(divide="ignore"):
        la = np.log(alpha)
    return logsumexp(loglik + la, axis=-1)


def predictive_likelihood(particles, alpha, z, sensor) -> float:
    """Monte Carlo predictive likelihood of one measurement."""
    ll = sensor.loglik(np.asarray(z, float), np.atleast_2d(particles))
    return float(np.exp(predictive_loglik(np.asarray(alpha, float), ll)))


@dataclass(frozen=True)
class PredictiveGaussian:
    mean: np.ndarray  # (r, theta)
    cov: np.ndarray


def predictive_gaussian(particles, alpha, sensor) -> PredictiveGaussian:
    """Moment-matched Gaussian of the predicted measurement.

    Bearings are averaged as wrapped offsets from the heaviest particle's
    bearing, which is the plain weighted mean unless the cloud straddles the
    +-pi cut; residuals are wrapped before the outer products are taken.
    """
    alpha = np.asarray(alpha, dtype=float)
    g = sensor.predict(np.atleast_2d(particles))
    mr = alpha @ g[:, 0]
    ref = g[np.argmax(alpha), 1]
    mt = float(wrap_angle(ref + alpha @ wrap_angle(g[:, 1] - ref)))
    mean = np.array([mr, mt])
    res = g - mean
    res[:, 1] = wrap_angle(res[:, 1])
    spread = (res * alpha[:, None]).T @ res
    cov = sensor.cov + 0.5 * (spread + spread.T)
    return PredictiveGaussian(mean, cov)


def gate(pred: PredictiveGaussian, measurements, chi2: float = DEFAULT_CHI2):
    """Validate measurements with ``d^2 < chi2``.

    Returns the 1-based indices that pass and all squared distances.
    """
    if not chi2 > 0:
        raise InvalidArgumentError("gate threshold must be positive")
    y = np.asarray(measurements, dtype=float).reshape(-1, 2)
    if y.shape[0] == 0:
        return [], np.zeros(0)
    res = y - pred.mean
    res[:, 1] = wrap_angle(res[:, 1])
    try:
        sol = np.linalg.solve(pred.cov, res.T)
    except np.linalg.LinAlgError as exc:
        raise NumericError("predictive measurement covariance is singular") from exc
    d2 = np.einsum("ij,ji->i", res, sol)
    return [j + 1 for j in np.flatnonzero(d2 < chi2)], d2


# ---------------------------------------------------------------------------
# posteriors
# ---------------------------------------------------------------------------

def joint_log_scores(hyps: Sequence[T2MHypothesis], log_priors, log_pred, model: AssociationModel) -> np.ndarray:
    """Unnormalized log joint posterior of each hypothesis.

    ``log_pred[j-1, k-1]`` is the log predictive likelihood of measurement
    ``j`` under target ``k``; clutter is uniform with density ``1/V``.
    """
    log_pred = np.asarray(log_pred, dtype=float)
    log_v = math.log(model.volume)
    out = np.empty(len(hyps))
    for h_i, (h, lp) in enumerate(zip(hyps, log_priors)):
        s = lp - h.m_clutter * log_v
        for k, j in enumerate(h.r_tilde):
            if j:
                s += log_pred[j - 1, k]
        out[h_i] = s
    return out


def joint_posterior(hyps, log_priors, log_pred, model: AssociationModel) -> np.ndarray:
    """Normalized posterior hypothesis probabilities for one observer."""
    if len(hyps) == 0:
        raise DegenerateAssociationError("no hypotheses to weigh")
    scores = joint_log_scores(hyps, log_priors, log_pred, model)
    if not np.any(scores > -np.inf):
        raise DegenerateAssociationError()
    return np.exp(scores - logsumexp(scores))


def marginal_beta(hyps: Sequence[T2MHypothesis], posteriors, K: int, M: int) -> np.ndarray:
    """``(M+1, K)`` matrix; ``beta[j, k]`` is P(target k+1 produced measurement j)."""
    beta = np.zeros((M + 1, K))
    cols = np.arange(K)
    for h, p in zip(hyps, posteriors):
        beta[list(h.r_tilde), cols] += p
    return beta


def observer_beta(log_pred: np.ndarray, model: AssociationModel, validated=None) -> np.ndarray:
    """Enumerate, weigh and marginalize for one observer."""
    M, K = log_pred.shape
    hyps = enumerate_hypotheses(K, M, validated)
    priors = [association_prior(h, model) for h in hyps]
    post = joint_posterior(hyps, priors, log_pred, model)
    return marginal_beta(hyps, post, K, M)


def target_loglik(betas: Sequence[np.ndarray], logliks: Sequence[np.ndarray]) -> np.ndarray:
    """Log of the mixture likelihood for one target, multiplied over observers.

    ``betas[i]`` is the target's ``(M_i+1,)`` column at observer ``i`` and
    ``logliks[i]`` the ``(M_i, N)`` per-particle measurement log-likelihoods.
    """
    total = None
    for b, ll in zip(betas, logliks):
        b = np.asarray(b, dtype=float)
        with np.errstate(divide="ignore"):
            lb = np.log(b)
        n = ll.shape[1]
        terms = np.vstack([np.full((1, n), lb[0]), ll + lb[1:, None]])
        part = logsumexp(terms, axis=0)
        total = part if total is None else total + part
    return total


def target_likelihood(betas, logliks) -> np.ndarray:
    return np.exp(target_loglik(betas, logliks))
