"""Target dynamics and range/bearing sensor models.

State layout is ``[x, vx, y, vy]`` (metres, metres per second). Sensors
return scalar observations; :func:`linearize` turns a raw scalar into a
:class:`Measurement` that the linear windowed machinery can consume.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# index of x and y position inside the 4-state vector
POS_IDX = (0, 2)

# below this range the bearing Jacobian is treated as degenerate
MIN_RANGE = 1e-6


class SensorKind(str, enum.Enum):
    TOA = "toa"
    DOA = "doa"
    # direct (x, y) position observation; used by tests and oracles
    LINEAR = "linear"


class LinearizationError(ValueError):
    """Raised when the measurement Jacobian cannot be evaluated."""


@dataclass(frozen=True)
class ProcessModel:
    A: np.ndarray
    Q: np.ndarray
    delta: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def Q_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Q)


@dataclass(frozen=True)
class Sensor:
    id: int
    kind: SensorKind
    position: np.ndarray
    noise_std: float
    sensing_range: float = np.inf

    def __post_init__(self):
        if not self.noise_std > 0:
            raise ValueError(f"sensor {self.id}: noise_std must be positive")
        if not self.sensing_range > 0:
            raise ValueError(f"sensor {self.id}: sensing_range must be positive")
        object.__setattr__(self, "kind", SensorKind(self.kind))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    @property
    def dim(self) -> int:
        return 2 if self.kind is SensorKind.LINEAR else 1

    @property
    def R(self) -> np.ndarray:
        return self.noise_std**2 * np.eye(self.dim)


@dataclass(frozen=True)
class Measurement:
    sensor_id: int
    value: np.ndarray
    H: np.ndarray
    R: np.ndarray
    pseudo_obs: np.ndarray


def wrap_angle(a):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    # np.mod maps +pi to -pi; flip that edge back
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def cv_model(delta: float, q_scale: float = 1.0) -> ProcessModel:
    """Nearly-constant-velocity model for the 2D state ``[x, vx, y, vy]``.

    ``Q`` per axis is ``[[d^3/3, d^2/2], [d^2/2, d]]``, multiplied by
    ``q_scale`` (1 leaves the matrix untouched).
    """
    if not delta > 0:
        raise ValueError(f"sampling interval must be positive, got {delta}")
    if q_scale < 0:
        raise ValueError("q_scale must be non-negative")
    d = float(delta)
    a = np.array([[1.0, d], [0.0, 1.0]])
    q = np.array([[d**3 / 3.0, d**2 / 2.0], [d**2 / 2.0, d]])
    z = np.zeros((2, 2))
    A = np.block([[a, z], [z, a]])
    Q = q_scale * np.block([[q, z], [z, q]])
    return ProcessModel(A=A, Q=Q, delta=d)


def propagate_truth(model: ProcessModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``A x + w`` with ``w ~ N(0, Q)``.

    The noise is always drawn (even for ``Q = 0``) so the random stream
    advances identically regardless of the noise level.
    """
    w = rng.multivariate_normal(np.zeros(model.n), model.Q, method="eigh")
    if not np.any(model.Q):
        w = np.zeros(model.n)
    return model.A @ np.asarray(x, dtype=float) + w


def _offset(sensor: Sensor, x: np.ndarray) -> tuple[float, float]:
    return x[POS_IDX[0]] - sensor.position[0], x[POS_IDX[1]] - sensor.position[1]


def observe(sensor: Sensor, x: np.ndarray) -> np.ndarray:
    """Noise-free measurement map ``h(x)``."""
    dx, dy = _offset(sensor, x)
    if sensor.kind is SensorKind.TOA:
        return np.array([np.hypot(dx, dy)])
    if sensor.kind is SensorKind.DOA:
        # bearing measured from the y axis: tan(theta) = dx / dy
        return np.array([np.arctan2(dx, dy)])
    return np.array([x[POS_IDX[0]], x[POS_IDX[1]]])


def measure(sensor: Sensor, x_true: np.ndarray, rng: np.random.Generator) -> np.ndarray | None:
    """Noisy observation of ``x_true``, or ``None`` when out of range.

    Noise is drawn before the range check so that every sensor consumes the
    same amount of randomness at every step.
    """
    noise = rng.normal(0.0, sensor.noise_std, size=sensor.dim)
    x_true = np.asarray(x_true, dtype=float)
    dist = np.hypot(*_offset(sensor, x_true))
    if dist > sensor.sensing_range:
        return None
    if sensor.kind is SensorKind.DOA and dist < MIN_RANGE:
        return None
    z = observe(sensor, x_true) + noise
    if sensor.kind is SensorKind.DOA:
        z = np.atleast_1d(wrap_angle(z))
    return z


def jacobian(sensor: Sensor, x: np.ndarray) -> np.ndarray:
    n = len(x)
    H = np.zeros((sensor.dim, n))
    ix, iy = POS_IDX
    if sensor.kind is SensorKind.LINEAR:
        H[0, ix] = 1.0
        H[1, iy] = 1.0
        return H
    dx, dy = _offset(sensor, x)
    r2 = dx * dx + dy * dy
    if r2 < MIN_RANGE**2:
        raise LinearizationError(f"sensor {sensor.id}: linearization point on top of sensor")
    if sensor.kind is SensorKind.TOA:
        r = np.sqrt(r2)
        H[0, ix], H[0, iy] = dx / r, dy / r
    else:
        H[0, ix], H[0, iy] = dy / r2, -dx / r2
    return H


def linearize(sensor: Sensor, x_lin: np.ndarray, raw: np.ndarray) -> Measurement:
    """EKF linearization of ``raw`` about ``x_lin``.

    The returned ``pseudo_obs`` satisfies ``pseudo_obs ~= H x`` near
    ``x_lin``, so it can be used in a purely linear update.

    Raises
    ------
    LinearizationError
        If ``x_lin`` coincides with the sensor position.
    """
    x_lin = np.asarray(x_lin, dtype=float)
    raw = np.atleast_1d(np.asarray(raw, dtype=float))
    H = jacobian(sensor, x_lin)
    if sensor.kind is SensorKind.LINEAR:
        pseudo = raw.copy()
    else:
        resid = raw - observe(sensor, x_lin)
        if sensor.kind is SensorKind.DOA:
            resid = np.atleast_1d(wrap_angle(resid))
        pseudo = resid + H @ x_lin
    return Measurement(sensor_id=sensor.id, value=raw, H=H, R=sensor.R, pseudo_obs=pseudo)
