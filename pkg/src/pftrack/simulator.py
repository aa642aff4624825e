"""Ground-truth and measurement simulation.

Time runs over steps ``t = 0..horizon``. Step 0 holds the initial truth;
measurements exist for ``t = 1..horizon``. The transition from ``t-1`` to
``t`` uses the motion segment that covers step ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .models import (
    KNOT,
    MeasurementNoise,
    SensorPose,
    TransitionModel,
    bearing_north_clockwise,
    noise_factor,
    range_bearing,
    velocity_from_course,
    white_noise_q,
    wrap_angle,
)


@dataclass(frozen=True)
class MotionSegment:
    model: TransitionModel
    duration: int

    def __post_init__(self):
        if self.duration < 1:
            raise InvalidArgumentError("segment duration must be at least one step")


@dataclass(frozen=True)
class TargetSpec:
    x0: np.ndarray
    segments: tuple

    @property
    def steps(self) -> int:
        return sum(s.duration for s in self.segments)

    def schedule(self) -> list[TransitionModel]:
        """Transition model for steps ``1..steps`` (index 0 is step 1)."""
        out = []
        for seg in self.segments:
            out.extend([seg.model] * seg.duration)
        return out


@dataclass(frozen=True)
class SensorSpec:
    pose: SensorPose
    noise: MeasurementNoise
    r_max: float = math.inf


@dataclass(frozen=True)
class OwnshipLeg:
    course_deg: float  # clockwise from North
    speed_kn: float
    steps: int


@dataclass(frozen=True)
class Scenario:
    name: str
    targets: tuple
    sensors: tuple
    T: float = 1.0
    horizon: int = 100
    p_detect: float = 1.0
    clutter_rate: float = 0.0
    truth_sigma: tuple = (0.0, 0.0)
    known_association: bool = True
    range_limited: bool = False
    # bearings-only from a moving ownship
    ownship_legs: Optional[tuple] = None
    bearing_sigma: float = 0.0

    def __post_init__(self):
        if not self.targets:
            raise InvalidArgumentError("scenario needs at least one target")
        for t in self.targets:
            if t.steps != self.horizon:
                raise InvalidArgumentError(
                    f"target segments cover {t.steps} steps but horizon is {self.horizon}")
        if self.ownship_legs is not None and sum(l.steps for l in self.ownship_legs) != self.horizon:
            raise InvalidArgumentError("ownship legs must cover the horizon")
        if self.ownship_legs is None and not self.sensors:
            raise InvalidArgumentError("scenario needs at least one sensor")

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def bearings_only(self) -> bool:
        return self.ownship_legs is not None


@dataclass(frozen=True)
class TruthLog:
    states: np.ndarray  # (horizon+1, K, 4)
    models: list  # per target, TransitionModel for steps 1..horizon


@dataclass(frozen=True)
class MeasurementLog:
    """``frames[t-1][i]`` is observer ``i``'s ``(M, 2)`` array at step ``t``.

    ``labels`` mirrors ``frames`` with the true source of each measurement:
    the 1-based target index, or 0 for clutter.
    """
    frames: list
    labels: list


def simulate_truth(sc: Scenario, rng) -> TruthLog:
    K = sc.n_targets
    states = np.empty((sc.horizon + 1, K, 4))
    sx, sy = sc.truth_sigma
    L = noise_factor(white_noise_q(sx, sy, sc.T))
    noisy = bool(np.any(L))
    schedules = [t.schedule() for t in sc.targets]
    mats = {}
    for k, tgt in enumerate(sc.targets):
        states[0, k] = tgt.x0
    for t in range(1, sc.horizon + 1):
        for k in range(K):
            m = schedules[k][t - 1]
            key = (m.kind, m.omega, sc.T)
            F = mats.get(key)
            if F is None:
                F = mats[key] = TransitionModel(m.kind, sc.T, m.omega).matrix()
            x = F @ states[t - 1, k]
            if noisy:
                x = x + L @ rng.standard_normal(4)
            states[t, k] = x
    return TruthLog(states, schedules)


def _detection(x, sensor: SensorSpec, rng) -> np.ndarray:
    r, th = range_bearing(x, sensor.pose)
    e = rng.standard_normal(2)
    return np.array([r + sensor.noise.sigma_r * e[0], float(wrap_angle(th + sensor.noise.sigma_theta * e[1]))])


def simulate_observations(truth: TruthLog, sc: Scenario, rng) -> MeasurementLog:
    """Detections, clutter and shuffling per observer and step.

    With known association every target is detected and the frame lists
    targets in order, with no clutter.
    """
    K = sc.n_targets
    frames, labels = [], []
    for t in range(1, sc.horizon + 1):
        fr, lb = [], []
        for sensor in sc.sensors:
            ys, ls = [], []
            for k in range(K):
                x = truth.states[t, k]
                if not sc.known_association:
                    if sc.range_limited and range_bearing(x, sensor.pose)[0] > sensor.r_max:
                        continue
                    if rng.random() >= sc.p_detect:
                        continue
                ys.append(_detection(x, sensor, rng))
                ls.append(k + 1)
            if not sc.known_association:
                n_c = rng.poisson(sc.clutter_rate) if sc.clutter_rate > 0 else 0
                if n_c:
                    r = rng.uniform(0.0, sensor.r_max, n_c)
                    th = wrap_angle(rng.uniform(-math.pi, math.pi, n_c))
                    ys.extend(np.column_stack([r, th]))
                    ls.extend([0] * n_c)
                order = rng.permutation(len(ys))
                ys = [ys[i] for i in order]
                ls = [ls[i] for i in order]
            fr.append(np.array(ys, dtype=float).reshape(-1, 2))
            lb.append(np.array(ls, dtype=int))
        frames.append(fr)
        labels.append(lb)
    return MeasurementLog(frames, labels)


# ---------------------------------------------------------------------------
# bearings-only from a moving ownship
# ---------------------------------------------------------------------------

def ownship_track(legs: Sequence[OwnshipLeg], T: float, start=(0.0, 0.0)) -> np.ndarray:
    """``(steps+1, 4)`` ownship states starting at ``start``.

    The position at step ``t`` integrates the velocity held at ``t-1``; a
    new leg's velocity takes effect at the first step of that leg.
    """
    vels = []
    for leg in legs:
        vx, vy = velocity_from_course(leg.speed_kn * KNOT, math.radians(leg.course_deg))
        vels.extend([(vx, vy)] * leg.steps)
    n = len(vels)
    out = np.empty((n + 1, 4))
    out[0] = [start[0], vels[0][0], start[1], vels[0][1]]
    for t in range(1, n + 1):
        out[t, 0] = out[t - 1, 0] + T * out[t - 1, 1]
        out[t, 2] = out[t - 1, 2] + T * out[t - 1, 3]
        out[t, 1], out[t, 3] = vels[t - 1]
    return out


def simulate_bearings_only(target_states, ownship_states, sigma_theta: float, rng) -> np.ndarray:
    """Noisy North-clockwise bearings for steps ``1..`` of the schedules."""
    target_states = np.asarray(target_states, dtype=float)
    ownship_states = np.asarray(ownship_states, dtype=float)
    if target_states.shape != ownship_states.shape:
        raise InvalidArgumentError("target and ownship schedules must have the same length")
    rel = target_states[1:] - ownship_states[1:]
    th = np.atleast_1d(bearing_north_clockwise(rel))
    if sigma_theta > 0:
        th = th + sigma_theta * rng.standard_normal(th.size)
    return wrap_angle(th)


def field_replica_target(range_m: float = 4000.0, bearing_deg: float = 265.0,
                         course_deg: float = 121.0, speed_kn: float = 20.0) -> np.ndarray:
    """Initial target state placed by range and North-clockwise bearing."""
    b = math.radians(bearing_deg)
    vx, vy = velocity_from_course(speed_kn * KNOT, math.radians(course_deg))
    return np.array([range_m * math.sin(b), vx, range_m * math.cos(b), vy])
