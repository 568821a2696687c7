"""Scenario files: schema, validation and the built-in canonical layouts."""
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..anchorplanner import PlannerConfig
from ..ekf import FilterConfig
from ..errors import ConfigError
from ..simworld import Anchor, AnchorRole, NoiseSpec, RigidBodyTruth

Vec = Tuple[float, float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AnchorModel(_Strict):
    id: int
    position: Vec
    role: Literal["fixed", "mobile"] = "fixed"


class Segment(_Strict):
    duration: float = Field(gt=0)
    accel: Vec = (0.0, 0.0, 0.0)
    omega: Vec = (0.0, 0.0, 0.0)


class Oscillation(_Strict):
    axis: Vec = (0.0, 1.0, 0.0)
    amplitude: float = Field(default=0.0, ge=0)
    period: float = Field(default=10.0, gt=0)
    phase: float = 0.0

    @field_validator("axis")
    @classmethod
    def _axis(cls, v):
        if np.linalg.norm(v) == 0:
            raise ValueError("oscillation axis must be non-zero")
        return v


class MotionModel(_Strict):
    """Scripted truth motion.

    hover     -- ``position`` plus the sum of ``oscillations``, each
                 amplitude * sin(2 pi t / period + phase) along its axis.
                 An empty list is a perfectly still hover.
    segments  -- start at ``position`` with ``velocity`` and apply each
                 segment's inertial acceleration / body rate in turn.
    """
    type: Literal["hover", "segments"] = "hover"
    position: Vec = (0.0, 0.0, 1.0)
    velocity: Vec = (0.0, 0.0, 0.0)
    oscillations: List[Oscillation] = []
    segments: List[Segment] = []


class RatesModel(_Strict):
    imu: float = Field(default=500.0, gt=0)
    ranging: float = Field(default=80.0, gt=0)
    planner: float = Field(default=10.0, gt=0)


class NoiseModel(_Strict):
    sigma_accel: float = Field(default=0.5, ge=0)
    sigma_gyro: float = Field(default=0.01, ge=0)
    sigma_range: float = Field(default=0.05, ge=0)
    distribution: Literal["gaussian", "uniform", "laplace"] = "gaussian"


class FilterModel(_Strict):
    init_pos_var: float = Field(default=1.0, ge=0)
    init_vel_var: float = Field(default=0.1, ge=0)
    init_att_var: float = Field(default=0.1, ge=0)
    gate: Optional[float] = Field(default=None, gt=0)
    # noise levels the filter assumes; None means "same as the simulated sensors"
    sigma_accel: Optional[float] = Field(default=None, ge=0)
    sigma_gyro: Optional[float] = Field(default=None, ge=0)
    sigma_range: Optional[float] = Field(default=None, ge=0)
    # "sampled": initial estimate error drawn from the initial covariance
    init_error: Literal["sampled", "none"] = "sampled"


class PlannerModel(_Strict):
    gain: float = Field(default=5.0, gt=0)
    max_speed: float = Field(default=0.5, gt=0)
    fixed_altitude: bool = False
    standoff: float = Field(default=0.3, ge=0)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    seed: int = 0
    trials: int = Field(default=1, ge=1)
    duration: float = Field(default=30.0, gt=0)
    rates: RatesModel = RatesModel()
    anchors: List[AnchorModel]
    motion: MotionModel = MotionModel()
    noise: NoiseModel = NoiseModel()
    filter: FilterModel = FilterModel()
    planner: PlannerModel = PlannerModel()

    @field_validator("anchors")
    @classmethod
    def _anchors(cls, v):
        if not v:
            raise ValueError("at least one anchor is required")
        ids = [a.id for a in v]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate anchor ids {ids}")
        return v

    # runtime objects ------------------------------------------------------
    def anchor_list(self) -> List[Anchor]:
        return [Anchor(a.id, np.array(a.position, dtype=float), AnchorRole(a.role))
                for a in self.anchors]

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(**self.noise.model_dump())

    def filter_config(self) -> FilterConfig:
        f = self.filter
        assumed = self.noise.model_dump()
        for k in ("sigma_accel", "sigma_gyro", "sigma_range"):
            if getattr(f, k) is not None:
                assumed[k] = getattr(f, k)
        if assumed["sigma_range"] == 0:
            raise ConfigError("the filter needs a positive range noise; set filter.sigma_range "
                              "when simulating noiseless ranging")
        return FilterConfig.from_noise(
            NoiseSpec(**assumed), init_pos_var=f.init_pos_var, init_vel_var=f.init_vel_var,
            init_att_var=f.init_att_var, gate=f.gate)

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(interval=1.0 / self.rates.planner, **self.planner.model_dump())

    @property
    def has_mobile(self) -> bool:
        return any(a.role == "mobile" for a in self.anchors)

    def with_fixed_anchors(self) -> "ScenarioConfig":
        """Same scenario with every mobile anchor frozen at its start position."""
        anchors = [a.model_copy(update={"role": "fixed"}) for a in self.anchors]
        return self.model_copy(update={"anchors": anchors, "name": self.name + "-fixed"})

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return self.model_copy(update={"seed": seed})


class Motion:
    """Evaluates a MotionModel: initial truth and (accel, omega) at time t."""

    def __init__(self, m: MotionModel):
        self.m = m
        self._ends = np.cumsum([s.duration for s in m.segments]) if m.segments else np.array([])
        osc = m.oscillations if m.type == "hover" else []
        self._axes = np.array([np.array(o.axis) / np.linalg.norm(o.axis) for o in osc]).reshape(-1, 3)
        self._amp = np.array([o.amplitude for o in osc])
        self._w = np.array([2 * np.pi / o.period for o in osc])
        self._phase = np.array([o.phase for o in osc])
        self._zero = np.zeros(3)

    def initial_truth(self) -> RigidBodyTruth:
        m = self.m
        pos = np.array(m.position, dtype=float)
        if m.type == "segments":
            vel = np.array(m.velocity, dtype=float)
        else:
            pos = pos + (self._amp * np.sin(self._phase)) @ self._axes
            vel = (self._amp * self._w * np.cos(self._phase)) @ self._axes
        return RigidBodyTruth(position=pos, velocity=vel)

    def inputs(self, t: float):
        m = self.m
        if m.type == "hover":
            if not len(self._amp):
                return self._zero, self._zero
            acc = (-self._amp * self._w ** 2 * np.sin(self._w * t + self._phase)) @ self._axes
            return acc, self._zero
        i = int(np.searchsorted(self._ends, t, side="right"))
        if i < len(m.segments):
            s = m.segments[i]
            return np.array(s.accel, dtype=float), np.array(s.omega, dtype=float)
        return self._zero, self._zero


def parse_scenario(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"scenario {path} must be a mapping at the top level")
    return parse_scenario(data)


def dump_scenario(cfg: ScenarioConfig) -> str:
    data = cfg.model_dump(mode="json")
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


# canonical desk-scale layout --------------------------------------------------
# Four ground anchors spread along y and hugging the y axis (little x
# information), plus a fifth anchor off to the side at the agent's altitude
# that either stays put or is the mobile one.
HOVER_POINT = (0.0, 0.0, 1.0)
FIXED_ANCHORS = [(0.4, 3.0, 0.0), (-0.4, 3.0, 0.0), (0.4, -3.0, 0.0), (-0.4, -3.0, 0.0)]
MOBILE_START = (1.0, 2.0, 1.0)

# station-keeping sway of a hovering vehicle; without horizontal acceleration
# yaw is unobservable from ranging and dominates the attitude error
HOVER_WOBBLE = [
    Oscillation(axis=(1.0, 0.0, 0.0), amplitude=0.15, period=2.0),
    Oscillation(axis=(0.0, 1.0, 0.0), amplitude=0.15, period=3.0, phase=1.0),
]
TRACK = [Oscillation(axis=(0.0, 1.0, 0.0), amplitude=1.0, period=15.0)]


def canonical_scenario(mobile: bool = True, motion: str = "hover") -> ScenarioConfig:
    anchors = [AnchorModel(id=i, position=p) for i, p in enumerate(FIXED_ANCHORS)]
    anchors.append(AnchorModel(id=len(anchors), position=MOBILE_START,
                               role="mobile" if mobile else "fixed"))
    if motion == "hover":
        osc = HOVER_WOBBLE
    elif motion == "still":
        osc = []
    elif motion == "track":
        osc = TRACK
    else:
        raise ConfigError(f"unknown canonical motion {motion!r}")
    return ScenarioConfig(
        name=f"canonical-{motion}-{'mobile' if mobile else 'fixed'}",
        seed=0,
        trials=50,
        duration=30.0,
        anchors=anchors,
        motion=MotionModel(type="hover", position=HOVER_POINT, oscillations=osc),
        filter=FilterModel(init_pos_var=0.25, init_vel_var=0.1, init_att_var=0.01),
        planner=PlannerModel(fixed_altitude=True),
    )
