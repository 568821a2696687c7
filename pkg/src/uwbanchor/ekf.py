"""Nine-state error-state EKF fusing IMU and single-anchor UWB ranges.

The stochastic state is (position, velocity, attitude error) with the
attitude error delta expressed in the body frame of a separately stored
reference attitude: R_hat = R_ref (I + S(delta)).  Gyro readings are inputs
and are folded straight into R_ref on every prediction, so delta only becomes
non-zero inside a range update and is folded back out immediately afterwards.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg.lapack import dpotrf

from .errors import DegenerateGeometryError, NumericalFailure
from .geometry3d import reorthonormalize, skew, so3_exp
from .simworld import GRAVITY, MIN_RANGE, Anchor, ImuSample, NoiseSpec, RangeSample

POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 9)

_I3 = np.eye(3)
_I9 = np.eye(9)
_PSD_JITTER = 1e-12
_PSD_JITTER_I9 = _PSD_JITTER * _I9
_SYM_TOL = 1e-9
_DELTA_LIMIT = 0.5


@dataclass
class EstimatorState:
    position: np.ndarray
    velocity: np.ndarray
    delta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R_ref: np.ndarray = field(default_factory=lambda: np.eye(3))

    def copy(self) -> "EstimatorState":
        return EstimatorState(self.position.copy(), self.velocity.copy(),
                              self.delta.copy(), self.R_ref.copy())


@dataclass(frozen=True)
class FilterConfig:
    """Initial uncertainty, noise levels and gating for the filter.

    Process noise is white: sigma_accel / sigma_gyro are per-sample standard
    deviations at the IMU rate, entering as Q * dt with Q = sigma^2 * dt.
    ``gate`` is in innovation standard deviations; None disables gating.
    """
    init_pos_var: float = 1.0
    init_vel_var: float = 0.1
    init_att_var: float = 0.1
    sigma_accel: float = 0.5
    sigma_gyro: float = 0.01
    range_var: float = 0.05 ** 2
    gate: float | None = None
    check_psd: bool = True

    @classmethod
    def from_noise(cls, noise: NoiseSpec, **kw) -> "FilterConfig":
        return cls(sigma_accel=noise.sigma_accel, sigma_gyro=noise.sigma_gyro,
                   range_var=noise.range_variance, **kw)

    def initial_covariance(self) -> np.ndarray:
        return np.diag([self.init_pos_var] * 3 + [self.init_vel_var] * 3
                       + [self.init_att_var] * 3)


class UpdateResult(NamedTuple):
    state: EstimatorState
    cov: np.ndarray
    gated: bool
    innovation: float


def estimate_attitude(state: EstimatorState) -> np.ndarray:
    if not state.delta.any():
        return state.R_ref
    return reorthonormalize(state.R_ref @ (_I3 + skew(state.delta)))


def check_covariance(cov: np.ndarray) -> None:
    """Raise NumericalFailure unless cov is finite, symmetric and PSD (after jitter)."""
    if not math.isfinite(float(cov.sum())):
        raise NumericalFailure("covariance contains non-finite entries")
    if np.abs(cov - cov.T).max() > _SYM_TOL:
        raise NumericalFailure("covariance is not symmetric")
    _check_psd(cov)


def _check_psd(cov: np.ndarray) -> None:
    _, info = dpotrf(cov + _PSD_JITTER_I9, lower=1, clean=0)
    if info != 0:
        raise NumericalFailure("covariance is not positive semi-definite")


def transition_matrix(R_hat, accel, gyro, dt: float) -> np.ndarray:
    F = _I9.copy()
    F[POS, VEL] = _I3 * dt
    F[VEL, ATT] = -R_hat @ skew(accel) * dt
    # body-frame error is carried into the frame of the rotated reference
    F[ATT, ATT] = _I3 - skew(gyro) * dt
    return F


def process_noise(cfg: FilterConfig, dt: float) -> np.ndarray:
    """Continuous-time noise density Q; the prediction adds Q * dt."""
    Q = np.zeros((9, 9))
    Q[VEL, VEL] = _I3 * (cfg.sigma_accel ** 2 * dt)
    Q[ATT, ATT] = _I3 * (cfg.sigma_gyro ** 2 * dt)
    return Q


def predict(state: EstimatorState, cov: np.ndarray, imu: ImuSample, dt: float,
            cfg: FilterConfig, Qdt: np.ndarray | None = None):
    """Propagate mean and covariance over one IMU interval.

    ``Qdt`` may carry a precomputed ``process_noise(cfg, dt) * dt``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not math.isfinite(float(imu.accel.sum() + imu.gyro.sum())):
        raise NumericalFailure("non-finite IMU sample")
    R_hat = estimate_attitude(state)
    acc_world = R_hat @ imu.accel + GRAVITY
    new = EstimatorState(
        position=state.position + state.velocity * dt,
        velocity=state.velocity + acc_world * dt,
        delta=state.delta.copy(),
        R_ref=state.R_ref @ so3_exp(imu.gyro * dt),
    )
    F = transition_matrix(R_hat, imu.accel, imu.gyro, dt)
    if Qdt is None:
        Qdt = process_noise(cfg, dt) * dt
    P = F @ cov @ F.T + Qdt
    P = 0.5 * (P + P.T)
    if cfg.check_psd:
        if not math.isfinite(float(P.sum())):
            raise NumericalFailure("covariance contains non-finite entries")
        _check_psd(P)
    return new, P


def measurement_jacobian(state: EstimatorState, anchor_p) -> np.ndarray:
    d = state.position - np.asarray(anchor_p, dtype=float)
    r = np.linalg.norm(d)
    if r < MIN_RANGE:
        raise DegenerateGeometryError("agent estimate coincides with anchor")
    H = np.zeros(9)
    H[POS] = d / r
    return H


def reset_attitude(state: EstimatorState, cov: np.ndarray):
    """Fold delta into R_ref and zero it; the covariance is left as is.

    Returns (state, cov, large) where ``large`` flags a delta beyond the
    small-angle range (the reset is still performed).
    """
    if not state.delta.any():
        return state, cov, False
    large = bool(np.linalg.norm(state.delta) >= _DELTA_LIMIT)
    new = EstimatorState(
        position=state.position,
        velocity=state.velocity,
        delta=np.zeros(3),
        R_ref=reorthonormalize(state.R_ref @ so3_exp(state.delta)),
    )
    return new, cov, large


def update_range(state: EstimatorState, cov: np.ndarray, meas: RangeSample,
                 anchor: Anchor, q: float, gate: float | None = None,
                 check_psd: bool = True) -> UpdateResult:
    if meas.anchor_id != anchor.id:
        raise ValueError(f"range is for anchor {meas.anchor_id}, got anchor {anchor.id}")
    H = measurement_jacobian(state, anchor.position)
    y = meas.range - np.linalg.norm(state.position - anchor.position)
    PH = cov @ H
    S = H @ PH + q
    if not S > 0:
        raise NumericalFailure(f"innovation variance {S} is not positive")
    if gate is not None and abs(y) > gate * np.sqrt(S):
        return UpdateResult(state, cov, True, float(y))
    K = PH / S
    dx = K * y
    new = EstimatorState(
        position=state.position + dx[POS],
        velocity=state.velocity + dx[VEL],
        delta=state.delta + dx[ATT],
        R_ref=state.R_ref,
    )
    P = cov - np.outer(K, PH)
    P = 0.5 * (P + P.T)
    if check_psd:
        if not math.isfinite(float(P.sum())):
            raise NumericalFailure("covariance contains non-finite entries")
        _check_psd(P)
    new, P, _ = reset_attitude(new, P)
    return UpdateResult(new, P, False, float(y))


class ErrorStateEKF:
    """Stateful wrapper that owns one estimate/covariance pair."""

    def __init__(self, cfg: FilterConfig, position, velocity=(0.0, 0.0, 0.0),
                 attitude=None, cov=None):
        self.cfg = cfg
        self.state = EstimatorState(
            position=np.array(position, dtype=float),
            velocity=np.array(velocity, dtype=float),
            R_ref=np.eye(3) if attitude is None else reorthonormalize(attitude),
        )
        self.cov = cfg.initial_covariance() if cov is None else np.array(cov, dtype=float)
        self.n_gated = 0
        self._qdt = (None, None)

    def predict(self, imu: ImuSample, dt: float) -> None:
        if self._qdt[0] != dt:
            self._qdt = (dt, process_noise(self.cfg, dt) * dt)
        self.state, self.cov = predict(self.state, self.cov, imu, dt, self.cfg, self._qdt[1])

    def update(self, meas: RangeSample, anchor: Anchor) -> bool:
        res = update_range(self.state, self.cov, meas, anchor, self.cfg.range_var,
                           self.cfg.gate, self.cfg.check_psd)
        self.state, self.cov = res.state, res.cov
        self.n_gated += res.gated
        return not res.gated

    @property
    def attitude(self) -> np.ndarray:
        return estimate_attitude(self.state)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))
