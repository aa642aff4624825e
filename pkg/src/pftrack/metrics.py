"""Error statistics, divergence and track-swap detection, and the report type."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError


def _positions(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[..., [0, 2]]


def position_sq_errors(estimates, truth) -> np.ndarray:
    """Squared position errors, same leading shape as the inputs."""
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise InvalidArgumentError(f"estimate shape {e.shape} does not match truth shape {t.shape}")
    d = _positions(e) - _positions(t)
    return np.sum(d * d, axis=-1)


def compute_mse(estimates, truth) -> np.ndarray:
    """Per-step MSE averaged over runs.

    Inputs are ``(runs, steps, ..., 4)``; the result drops the run axis.
    """
    return position_sq_errors(estimates, truth).mean(axis=0)


def detect_divergence(final_est, final_truth, threshold: float = 50.0) -> np.ndarray:
    """Per-target flags: final position error above ``threshold``."""
    return np.sqrt(position_sq_errors(final_est, final_truth)) > threshold


def nearest_assignment(final_est, final_truth) -> list[int]:
    """Greedy global nearest-neighbour estimate-to-truth assignment.

    Repeatedly pairs the closest remaining (estimate, truth) couple.
    ``result[k]`` is the truth index matched to estimate ``k``.
    """
    e = _positions(final_est)
    t = _positions(final_truth)
    K = e.shape[0]
    d = np.linalg.norm(e[:, None, :] - t[None, :, :], axis=-1)
    out = [-1] * K
    free_e, free_t = set(range(K)), set(range(K))
    for _ in range(K):
        best = min(((d[i, j], i, j) for i in free_e for j in free_t))
        _, i, j = best
        out[i] = j
        free_e.discard(i)
        free_t.discard(j)
    return out


def detect_swaps(final_est, final_truth) -> Optional[tuple]:
    """The non-identity part of the nearest assignment, as 1-based pairs.

    Returns ``None`` when each estimate lies nearest its own target.
    """
    perm = nearest_assignment(final_est, final_truth)
    moved = tuple((k + 1, j + 1) for k, j in enumerate(perm) if j != k)
    return moved or None


@dataclass
class MetricsReport:
    scenario: str
    filter: str
    n_runs: int
    seed: int
    n_particles: int
    divergence_threshold: float
    mse: list  # [step][target]
    rmse_time_avg: list  # per target
    final_errors: list  # [run][target]
    diverged_runs: list
    swapped_runs: list
    divergence_count: int
    swap_count: int
    warnings: int
    mode_prob_mean: Optional[list] = None  # [step][target][model]
    maneuver_mode_prob: Optional[float] = None
    wall_clock_s: float = field(default=0.0, compare=False)

    @property
    def divergence_rate(self) -> float:
        return self.divergence_count / self.n_runs

    @property
    def rmse_series(self) -> np.ndarray:
        """Per-step position RMSE pooled over targets."""
        return np.sqrt(np.asarray(self.mse).mean(axis=1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("wall_clock_s")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})
