"""Motion and measurement models for planar (x, vx, y, vy) targets.

State vectors are numpy arrays ordered ``[x, vx, y, vy]``. Functions that act
on particles accept either a single ``(4,)`` state or a ``(N, 4)`` stack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateGeometryError, InvalidArgumentError, NumericError

KNOT = 0.514444  # m/s
_LOG_2PI = np.log(2.0 * np.pi)
_CT_LIMIT = 1e-9


def state_vec(x, vx, y, vy) -> np.ndarray:
    s = np.array([x, vx, y, vy], dtype=float)
    if not np.all(np.isfinite(s)):
        raise InvalidArgumentError(f"state has non-finite components: {s}")
    return s


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


# ---------------------------------------------------------------------------
# transition matrices and process noise
# ---------------------------------------------------------------------------

def cv_matrix(T: float) -> np.ndarray:
    if not T > 0:
        raise InvalidArgumentError(f"sampling period must be positive, got {T}")
    return np.array([[1.0, T, 0.0, 0.0],
                     [0.0, 1.0, 0.0, 0.0],
                     [0.0, 0.0, 1.0, T],
                     [0.0, 0.0, 0.0, 1.0]])


def ct_matrix(omega: float, T: float) -> np.ndarray:
    """Coordinated-turn transition; positive ``omega`` turns anti-clockwise."""
    if not T > 0:
        raise InvalidArgumentError(f"sampling period must be positive, got {T}")
    if not np.isfinite(omega):
        raise InvalidArgumentError(f"turn rate must be finite, got {omega}")
    if abs(omega) < _CT_LIMIT:
        return cv_matrix(T)
    wt = omega * T
    s, c = np.sin(wt), np.cos(wt)
    a = s / omega
    b = (1.0 - c) / omega
    return np.array([[1.0, a, 0.0, -b],
                     [0.0, c, 0.0, -s],
                     [0.0, b, 1.0, a],
                     [0.0, s, 0.0, c]])


def white_noise_q(sigma_x: float, sigma_y: float, T: float) -> np.ndarray:
    """Discretized continuous white-noise acceleration covariance."""
    if sigma_x < 0 or sigma_y < 0:
        raise InvalidArgumentError("noise intensities must be non-negative")
    if not T > 0:
        raise InvalidArgumentError(f"sampling period must be positive, got {T}")
    q = np.zeros((4, 4))
    for i, s2 in ((0, sigma_x ** 2), (2, sigma_y ** 2)):
        q[i, i] = s2 * T ** 3 / 3.0
        q[i, i + 1] = q[i + 1, i] = s2 * T ** 2 / 2.0
        q[i + 1, i + 1] = s2 * T
    return q


@dataclass(frozen=True)
class TransitionModel:
    kind: str  # "cv" or "ct"
    T: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cv", "ct"):
            raise InvalidArgumentError(f"unknown transition model {self.kind!r}")
        if not self.T > 0:
            raise InvalidArgumentError("T must be positive")

    def matrix(self) -> np.ndarray:
        if self.kind == "cv":
            return cv_matrix(self.T)
        return ct_matrix(self.omega, self.T)


# ---------------------------------------------------------------------------
# Gaussian sampling and densities
# ---------------------------------------------------------------------------

def noise_factor(Q: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a PSD covariance.

    A singular-but-PSD matrix gets one retry with ``1e-12 * trace`` added to
    the diagonal. The zero matrix maps to a zero factor.
    """
    Q = np.asarray(Q, dtype=float)
    if not np.any(Q):
        return np.zeros_like(Q)
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * np.trace(Q)
    try:
        return np.linalg.cholesky(Q + jitter * np.eye(Q.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NumericError("covariance is not positive semi-definite") from exc


def gaussian_noise(L: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of N(0, L L^T) as an ``(n, d)`` array."""
    return rng.standard_normal((n, L.shape[0])) @ L.T


def propagate_sample(x, F, Q, rng):
    """Draw ``F x + w`` with ``w ~ N(0, Q)`` for one state or a stack."""
    x = np.asarray(x, dtype=float)
    L = noise_factor(Q)
    xs = np.atleast_2d(x)
    out = xs @ np.asarray(F).T + gaussian_noise(L, xs.shape[0], rng)
    return out[0] if x.ndim == 1 else out


def gaussian_logpdf(residual: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log N(residual; 0, cov) for a ``(d,)`` or ``(N, d)`` residual."""
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError("covariance is not positive definite") from exc
    r = np.atleast_2d(residual)
    sol = np.linalg.solve(L, r.T)
    maha = np.sum(sol ** 2, axis=0)
    d = cov.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    out = -0.5 * (maha + logdet + d * _LOG_2PI)
    return out[0] if np.ndim(residual) == 1 else out


def transition_logpdf(x_next, x_prev, F, Q):
    """log N(x_next; F x_prev, Q). ``Q`` must be strictly positive definite."""
    x_prev = np.asarray(x_prev, dtype=float)
    mean = x_prev @ np.asarray(F).T
    return gaussian_logpdf(np.asarray(x_next, dtype=float) - mean, np.asarray(Q, dtype=float))


@dataclass(frozen=True)
class LinearGaussianDynamics:
    """``x_k = F x_{k-1} + w - offset``, ``w ~ N(0, Q)``.

    ``offset`` carries the ownship input for relative-state tracking.
    """
    F: np.ndarray
    Q: np.ndarray
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "chol", noise_factor(self.Q))

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    def mean(self, states: np.ndarray) -> np.ndarray:
        m = states @ self.F.T
        if self.offset is not None:
            m = m - self.offset
        return m

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        states = np.atleast_2d(states)
        return self.mean(states) + gaussian_noise(self.chol, states.shape[0], rng)

    def logpdf(self, x_next: np.ndarray, x_prev: np.ndarray) -> np.ndarray:
        return gaussian_logpdf(x_next - self.mean(np.atleast_2d(x_prev)), self.Q)

    def shifted(self, offset) -> "LinearGaussianDynamics":
        return LinearGaussianDynamics(self.F, self.Q, None if offset is None else np.asarray(offset, float))


def block_dynamics(parts: Sequence[LinearGaussianDynamics]) -> LinearGaussianDynamics:
    """Stack independent per-target dynamics into one joint model."""
    from scipy.linalg import block_diag

    F = block_diag(*[p.F for p in parts])
    Q = block_diag(*[p.Q for p in parts])
    offsets = [p.offset if p.offset is not None else np.zeros(p.dim) for p in parts]
    off = np.concatenate(offsets)
    return LinearGaussianDynamics(F, Q, off if np.any(off) else None)


# ---------------------------------------------------------------------------
# measurement models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensorPose:
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.x0) and np.isfinite(self.y0)):
            raise InvalidArgumentError("sensor position must be finite")


@dataclass(frozen=True)
class MeasurementNoise:
    sigma_r: float
    sigma_theta: float

    def __post_init__(self):
        if not (self.sigma_r > 0 and self.sigma_theta > 0):
            raise InvalidArgumentError("measurement noise standard deviations must be positive")

    @property
    def cov(self) -> np.ndarray:
        return np.diag([self.sigma_r ** 2, self.sigma_theta ** 2])


def range_bearing(x, s: SensorPose):
    """Range and math-convention bearing ``atan2(dy, dx)`` from a sensor.

    Returns ``(r, theta)``; arrays when ``x`` is a stack.
    """
    x = np.asarray(x, dtype=float)
    dx = x[..., 0] - s.x0
    dy = x[..., 2] - s.y0
    r = np.hypot(dx, dy)
    if np.any(r == 0):
        raise DegenerateGeometryError("target coincides with the sensor")
    theta = np.arctan2(dy, dx)
    # atan2 gives [-pi, pi]; move -pi onto +pi
    theta = np.where(theta == -np.pi, np.pi, theta)
    if np.ndim(r) == 0:
        return float(r), float(theta)
    return r, theta


def measurement_logpdf(z, x, s: SensorPose, noise: MeasurementNoise):
    """Independent-Gaussian log-density of a (range, bearing) measurement.

    The bearing residual is wrapped into (-pi, pi] before squaring.
    """
    x = np.asarray(x, dtype=float)
    dx = x[..., 0] - s.x0
    dy = x[..., 2] - s.y0
    r = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    er = (z[0] - r) / noise.sigma_r
    et = wrap_angle(z[1] - theta) / noise.sigma_theta
    const = np.log(2.0 * np.pi * noise.sigma_r * noise.sigma_theta)
    return -0.5 * (er ** 2 + et ** 2) - const


@dataclass(frozen=True)
class RangeBearingModel:
    """Range/bearing sensor bundling pose and noise for the filters."""
    sensor: SensorPose
    noise: MeasurementNoise

    dim = 2

    @property
    def cov(self) -> np.ndarray:
        return self.noise.cov

    def predict(self, states: np.ndarray) -> np.ndarray:
        r, th = range_bearing(np.atleast_2d(states), self.sensor)
        return np.column_stack([r, th])

    def loglik(self, z, states: np.ndarray) -> np.ndarray:
        return measurement_logpdf(np.asarray(z, float), np.atleast_2d(states), self.sensor, self.noise)

    def residual(self, z, zhat):
        d = np.asarray(z, float) - np.asarray(zhat, float)
        d[..., 1] = wrap_angle(d[..., 1])
        return d

    def jacobian(self, x) -> np.ndarray:
        dx = x[0] - self.sensor.x0
        dy = x[2] - self.sensor.y0
        r2 = dx * dx + dy * dy
        if r2 == 0:
            raise DegenerateGeometryError("Jacobian undefined at the sensor position")
        r = np.sqrt(r2)
        return np.array([[dx / r, 0.0, dy / r, 0.0],
                         [-dy / r2, 0.0, dx / r2, 0.0]])


def bearing_north_clockwise(rel):
    """Bearing measured clockwise from North: ``atan2(x, y)`` in (-pi, pi]."""
    rel = np.asarray(rel, dtype=float)
    x, y = rel[..., 0], rel[..., 2]
    if np.any((x == 0) & (y == 0)):
        raise DegenerateGeometryError("bearing undefined at the origin")
    th = wrap_angle(np.arctan2(x, y))
    return float(th) if np.ndim(th) == 0 else th


@dataclass(frozen=True)
class NorthBearingModel:
    """Bearings-only sensor on relative (target minus ownship) states."""
    sigma_theta: float

    dim = 1

    def __post_init__(self):
        if not self.sigma_theta > 0:
            raise InvalidArgumentError("sigma_theta must be positive")

    @property
    def cov(self) -> np.ndarray:
        return np.array([[self.sigma_theta ** 2]])

    def predict(self, states: np.ndarray) -> np.ndarray:
        return np.atleast_1d(bearing_north_clockwise(np.atleast_2d(states)))[:, None]

    def loglik(self, z, states: np.ndarray) -> np.ndarray:
        th = np.atleast_1d(bearing_north_clockwise(np.atleast_2d(states)))
        e = wrap_angle(np.asarray(z, float).reshape(-1)[0] - th) / self.sigma_theta
        return -0.5 * e ** 2 - np.log(np.sqrt(2.0 * np.pi) * self.sigma_theta)

    def residual(self, z, zhat):
        return wrap_angle(np.asarray(z, float) - np.asarray(zhat, float))

    def jacobian(self, x) -> np.ndarray:
        r2 = x[0] ** 2 + x[2] ** 2
        if r2 == 0:
            raise DegenerateGeometryError("Jacobian undefined at the origin")
        return np.array([[x[2] / r2, 0.0, -x[0] / r2, 0.0]])


def velocity_from_course(speed: float, course_rad: float) -> tuple[float, float]:
    """(vx, vy) for a North-clockwise course."""
    return speed * np.sin(course_rad), speed * np.cos(course_rad)


def ownship_input(own_now, own_prev) -> np.ndarray:
    """Deterministic input subtracted from the relative-state prediction.

    Ownship positions integrate the previous-step velocity, so a change of
    ownship velocity shows up only in the relative velocity slots.
    """
    own_now = np.asarray(own_now, dtype=float)
    own_prev = np.asarray(own_prev, dtype=float)
    return np.array([0.0, own_now[1] - own_prev[1], 0.0, own_now[3] - own_prev[3]])
