"""Ground-truth kinematics and synthetic IMU / UWB range measurements."""
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, DegenerateGeometryError
from .geometry3d import reorthonormalize, so3_exp

GRAVITY = np.array([0.0, 0.0, -9.81])
MIN_RANGE = 1e-6


class AnchorRole(str, Enum):
    FIXED = "fixed"
    MOBILE = "mobile"


@dataclass(frozen=True)
class Anchor:
    id: int
    position: np.ndarray
    role: AnchorRole = AnchorRole.FIXED

    @property
    def mobile(self) -> bool:
        return self.role == AnchorRole.MOBILE

    def moved_to(self, position) -> "Anchor":
        if not self.mobile:
            raise ConfigError(f"anchor {self.id} is fixed and cannot be moved")
        return replace(self, position=np.asarray(position, dtype=float))


def check_network(anchors) -> None:
    if len(anchors) == 0:
        raise ConfigError("anchor network is empty")
    ids = [a.id for a in anchors]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate anchor ids in {ids}")


@dataclass
class RigidBodyTruth:
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class ImuSample:
    t: float
    accel: np.ndarray
    gyro: np.ndarray


@dataclass(frozen=True)
class RangeSample:
    t: float
    anchor_id: int
    range: float


_UNIT_DRAWS = {
    "gaussian": lambda rng, size: rng.standard_normal(size),
    "uniform": lambda rng, size: rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size),
    "laplace": lambda rng, size: rng.laplace(0.0, math.sqrt(0.5), size),
}


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the zero-mean sensor noises.

    sigma_accel and sigma_gyro are per-sample standard deviations at the IMU
    rate; sigma_range is per range measurement.  These defaults are
    implementation choices, not hardware characterisations.  ``distribution``
    picks the noise shape (gaussian, uniform or laplace), always scaled to
    the given standard deviation.
    """
    sigma_accel: float = 0.5
    sigma_gyro: float = 0.01
    sigma_range: float = 0.05
    distribution: str = "gaussian"

    def __post_init__(self):
        for name in ("sigma_accel", "sigma_gyro", "sigma_range"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.distribution not in _UNIT_DRAWS:
            raise ConfigError(f"unknown noise distribution {self.distribution!r}")

    def draw(self, rng: np.random.Generator, size=None):
        """Zero-mean, unit-variance samples of the configured shape."""
        return _UNIT_DRAWS[self.distribution](rng, size)

    @property
    def range_variance(self) -> float:
        return self.sigma_range ** 2


def step_truth(state: RigidBodyTruth, accel, omega, dt: float) -> RigidBodyTruth:
    """Advance the kinematics by ``dt`` holding accel and omega constant."""
    a = np.asarray(accel, dtype=float)
    w = np.asarray(omega, dtype=float)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not math.isfinite(float(a.sum() + w.sum()) + dt):
        raise ValueError("non-finite kinematic input")
    return RigidBodyTruth(
        position=state.position + state.velocity * dt + 0.5 * a * dt * dt,
        velocity=state.velocity + a * dt,
        attitude=state.attitude @ so3_exp(w * dt),
        omega=w,
        accel=a,
    )


def repair_attitude(state: RigidBodyTruth) -> RigidBodyTruth:
    return replace(state, attitude=reorthonormalize(state.attitude))


def synth_imu(state: RigidBodyTruth, noise: NoiseSpec, rng: np.random.Generator,
              t: float = 0.0) -> ImuSample:
    """Accelerometer reads R^T (a - g), gyro reads the body rate, plus noise."""
    specific = state.attitude.T @ (state.accel - GRAVITY)
    n = noise.draw(rng, 6)
    return ImuSample(
        t=t,
        accel=specific + noise.sigma_accel * n[:3],
        gyro=state.omega + noise.sigma_gyro * n[3:],
    )


def synth_range(x_true, anchor: Anchor, noise: NoiseSpec, rng: np.random.Generator,
                t: float = 0.0) -> RangeSample:
    d = float(np.linalg.norm(np.asarray(x_true, dtype=float) - anchor.position))
    if d < MIN_RANGE:
        raise DegenerateGeometryError(
            f"agent is within {MIN_RANGE} m of anchor {anchor.id}")
    rho = d + noise.sigma_range * noise.draw(rng)
    return RangeSample(t=t, anchor_id=anchor.id, range=max(rho, 0.0))


class RoundRobin:
    """Polls every anchor in turn, one anchor per range measurement."""

    def __init__(self, anchor_ids, start: int = 0):
        self.ids = list(anchor_ids)
        if not self.ids:
            raise ConfigError("cannot schedule ranging on an empty network")
        self.index = start % len(self.ids)

    def next_anchor(self) -> int:
        aid = self.ids[self.index]
        self.index = (self.index + 1) % len(self.ids)
        return aid


def tick_count(t: float, rate: float) -> int:
    """Number of events of a ``rate`` Hz clock that have fired by time ``t``.

    The small epsilon keeps ticks that land exactly on an IMU sample from
    slipping a step due to float round-off.
    """
    return math.floor(t * rate + 1e-9)
