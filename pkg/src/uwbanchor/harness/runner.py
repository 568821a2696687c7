"""Closed-loop simulation: truth -> sensors -> EKF -> planner -> anchor motion."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..anchorplanner import PlannerRecord, det_info, info_from_positions, plan_step
from ..ekf import ErrorStateEKF
from ..errors import ConfigError, DegenerateGeometryError, NumericalFailure, UwbAnchorError
from ..geometry3d import rotation_angle, so3_exp
from ..simworld import RoundRobin, repair_attitude, step_truth, synth_imu, synth_range, tick_count
from .scenario import Motion, ScenarioConfig

log = logging.getLogger(__name__)

_REPAIR_EVERY = 1000


@dataclass
class TrialResult:
    t: np.ndarray
    est_pos: np.ndarray
    est_vel: np.ndarray
    est_att: np.ndarray
    true_pos: np.ndarray
    true_vel: np.ndarray
    true_att: np.ndarray
    std: np.ndarray
    det: np.ndarray
    anchor_track: np.ndarray
    planner_trace: List[PlannerRecord]
    nees_pos: np.ndarray
    rmse_pos: float
    rmse_vel: float
    rmse_att: float
    n_updates: int = 0
    n_gated: int = 0
    n_skipped: int = 0
    psd_checked: int = 0

    @property
    def rmse(self):
        return self.rmse_pos, self.rmse_vel, self.rmse_att


def compute_rmse(est_pos, true_pos, est_vel, true_vel, est_att, true_att):
    """Position/velocity RMSE of Euclidean error norms, attitude RMSE of the
    geodesic angle between estimate and truth, in degrees."""
    est_pos, true_pos = np.asarray(est_pos), np.asarray(true_pos)
    est_vel, true_vel = np.asarray(est_vel), np.asarray(true_vel)
    est_att, true_att = np.asarray(est_att), np.asarray(true_att)
    n = len(est_pos)
    if not (len(true_pos) == len(est_vel) == len(true_vel) == len(est_att) == len(true_att) == n):
        raise ValueError("estimate and truth series have different lengths")
    if n == 0:
        raise ValueError("empty series")
    pos = np.sqrt(np.mean(np.sum((est_pos - true_pos) ** 2, axis=1)))
    vel = np.sqrt(np.mean(np.sum((est_vel - true_vel) ** 2, axis=1)))
    angles = np.array([rotation_angle(Re.T @ Rt) for Re, Rt in zip(est_att, true_att)])
    att = np.degrees(np.sqrt(np.mean(angles ** 2)))
    return float(pos), float(vel), float(att)


def _quad_inv3(P, e) -> float:
    """e^T P[:3,:3]^-1 e via the adjugate; hot path, avoids a LAPACK call."""
    a, b, c = P[0, 0], P[0, 1], P[0, 2]
    d, f, i = P[1, 1], P[1, 2], P[2, 2]
    A = d * i - f * f
    B = c * f - b * i
    C = b * f - c * d
    det = a * A + b * B + c * C
    x, y, z = e
    adj = (A * x * x + (a * i - c * c) * y * y + (a * d - b * b) * z * z
           + 2 * (B * x * y + C * x * z + (b * c - a * f) * y * z))
    return float(adj / det)


def _rngs(seed: int):
    init, imu, rng_range = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(imu),
            np.random.default_rng(rng_range))


def run_scenario(cfg: ScenarioConfig) -> TrialResult:
    """Run one trial.  Deterministic for a given config (seed included)."""
    if cfg.rates.ranging > cfg.rates.imu or cfg.rates.planner > cfg.rates.imu:
        raise ConfigError("ranging and planner rates may not exceed the IMU rate")
    n = int(round(cfg.duration * cfg.rates.imu))
    dt = 1.0 / cfg.rates.imu
    anchors = cfg.anchor_list()
    by_id = {a.id: i for i, a in enumerate(anchors)}
    tracked = next((i for i, a in enumerate(anchors) if a.mobile), None)
    noise = cfg.noise_spec()
    fcfg = cfg.filter_config()
    pcfg = cfg.planner_config()
    motion = Motion(cfg.motion)
    rng_init, rng_imu, rng_range = _rngs(cfg.seed)

    truth = motion.initial_truth()
    if cfg.filter.init_error == "sampled":
        sd = np.sqrt([fcfg.init_pos_var, fcfg.init_vel_var, fcfg.init_att_var])
        e = rng_init.standard_normal(9)
        x0 = truth.position + sd[0] * e[:3]
        v0 = truth.velocity + sd[1] * e[3:6]
        # truth = R_hat exp(err), so the estimate starts at truth * exp(-err)
        R0 = truth.attitude @ so3_exp(-sd[2] * e[6:9])
    else:
        x0, v0, R0 = truth.position, truth.velocity, truth.attitude
    ekf = ErrorStateEKF(fcfg, x0, v0, R0)
    schedule = RoundRobin([a.id for a in anchors])

    t = np.arange(n + 1) * dt
    est_pos = np.empty((n + 1, 3))
    est_vel = np.empty((n + 1, 3))
    est_att = np.empty((n + 1, 3, 3))
    true_pos = np.empty((n + 1, 3))
    true_vel = np.empty((n + 1, 3))
    true_att = np.empty((n + 1, 3, 3))
    var = np.empty((n + 1, 9))
    det = np.empty(n + 1)
    track = np.full((n + 1, 3), np.nan)
    nees = np.empty(n + 1)
    trace: List[PlannerRecord] = []
    n_updates = n_skipped = 0

    def record(k):
        s = ekf.state
        est_pos[k] = s.position
        est_vel[k] = s.velocity
        est_att[k] = ekf.attitude
        true_pos[k] = truth.position
        true_vel[k] = truth.velocity
        true_att[k] = truth.attitude
        var[k] = ekf.cov.diagonal()
        e = s.position - truth.position
        nees[k] = _quad_inv3(ekf.cov, e)
        if tracked is not None:
            track[k] = anchors[tracked].position

    anchor_pos = np.array([a.position for a in anchors])

    def current_det():
        M, _ = info_from_positions(ekf.state.position, anchor_pos, pcfg.standoff)
        return det_info((M[0, 0], M[0, 1], M[0, 2], M[1, 1], M[1, 2], M[2, 2]))

    def planner_tick(k):
        nonlocal anchors, anchor_pos
        moved, d, recs = plan_step(ekf.state.position, anchors, pcfg, t=t[k])
        anchors = moved
        anchor_pos = np.array([a.position for a in anchors])
        trace.extend(recs)
        return d

    det[0] = current_det()
    record(0)
    planned = cfg.has_mobile
    k = 0
    try:
        for k in range(1, n + 1):
            accel, omega = motion.inputs(t[k - 1])
            truth.accel, truth.omega = accel, omega
            imu = synth_imu(truth, noise, rng_imu, t[k - 1])
            truth = step_truth(truth, accel, omega, dt)
            if k % _REPAIR_EVERY == 0:
                truth = repair_attitude(truth)
            ekf.predict(imu, dt)
            for _ in range(tick_count(t[k], cfg.rates.ranging) - tick_count(t[k - 1], cfg.rates.ranging)):
                anchor = anchors[by_id[schedule.next_anchor()]]
                try:
                    meas = synth_range(truth.position, anchor, noise, rng_range, t[k])
                    ekf.update(meas, anchor)
                    n_updates += 1
                except DegenerateGeometryError:
                    n_skipped += 1
            ticks = tick_count(t[k], cfg.rates.planner) - tick_count(t[k - 1], cfg.rates.planner)
            if planned and ticks:
                # det is logged before the anchors move so it matches the planner trace
                det[k] = planner_tick(k)
                for _ in range(ticks - 1):
                    planner_tick(k)
            else:
                det[k] = current_det()
            record(k)
    except NumericalFailure as exc:
        raise NumericalFailure(f"{cfg.name} seed {cfg.seed} at t={k * dt:.4f} s: {exc}") from exc

    rmse = compute_rmse(est_pos, true_pos, est_vel, true_vel, est_att, true_att)
    return TrialResult(
        t=t, est_pos=est_pos, est_vel=est_vel, est_att=est_att,
        true_pos=true_pos, true_vel=true_vel, true_att=true_att,
        std=np.sqrt(np.clip(var, 0.0, None)), det=det, anchor_track=track, planner_trace=trace, nees_pos=nees,
        rmse_pos=rmse[0], rmse_vel=rmse[1], rmse_att=rmse[2],
        n_updates=n_updates, n_gated=ekf.n_gated, n_skipped=n_skipped,
        psd_checked=n + n_updates if fcfg.check_psd else 0,
    )


# Monte Carlo ----------------------------------------------------------------

_METRICS = ("rmse_pos", "rmse_vel", "rmse_att", "nees_pos")


@dataclass
class McSummary:
    name: str
    trials: int
    completed: int
    failures: List[str] = field(default_factory=list)
    mean: Dict[str, float] = field(default_factory=dict)
    std: Dict[str, float] = field(default_factory=dict)
    per_trial: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def _trial_metrics(res: TrialResult) -> Dict[str, float]:
    return {"rmse_pos": res.rmse_pos, "rmse_vel": res.rmse_vel, "rmse_att": res.rmse_att,
            "nees_pos": float(np.mean(res.nees_pos))}


def _summarize(name, trials, rows, failures) -> McSummary:
    s = McSummary(name=name, trials=trials, completed=len(rows), failures=failures)
    for m in _METRICS:
        vals = [r[m] for r in rows]
        s.per_trial[m] = vals
        if vals:
            s.mean[m] = float(np.mean(vals))
            s.std[m] = float(np.std(vals))
    return s


def _run_one(cfg: ScenarioConfig, seed: int):
    try:
        return _trial_metrics(run_scenario(cfg.with_seed(seed))), None
    except (NumericalFailure, UwbAnchorError) as exc:
        log.warning("trial with seed %d failed: %s", seed, exc)
        return None, f"seed {seed}: {exc}"


def monte_carlo(cfg: ScenarioConfig, trials: Optional[int] = None) -> McSummary:
    """Independent trials with seeds cfg.seed, cfg.seed + 1, ..."""
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rows, failures = [], []
    for i in range(trials):
        row, err = _run_one(cfg, cfg.seed + i)
        if err is None:
            rows.append(row)
        else:
            failures.append(err)
    return _summarize(cfg.name, trials, rows, failures)


@dataclass
class Comparison:
    a: McSummary
    b: McSummary
    # percentage difference of a relative to b, per metric
    diff_pct: Dict[str, float]


def compare(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig, trials: Optional[int] = None) -> Comparison:
    """Monte-Carlo comparison of two scenarios on common random numbers.

    Trial i of both scenarios uses seed cfg_a.seed + i, so the two runs see
    the same sensor-noise realizations as long as they share rates and the
    number of anchors.  Trials that fail in either scenario are dropped from
    both summaries.
    """
    trials = cfg_a.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rows_a, rows_b, fail_a, fail_b = [], [], [], []
    for i in range(trials):
        seed = cfg_a.seed + i
        ra, ea = _run_one(cfg_a, seed)
        rb, eb = _run_one(cfg_b, seed)
        if ea:
            fail_a.append(ea)
        if eb:
            fail_b.append(eb)
        if ra is not None and rb is not None:
            rows_a.append(ra)
            rows_b.append(rb)
    sa = _summarize(cfg_a.name, trials, rows_a, fail_a)
    sb = _summarize(cfg_b.name, trials, rows_b, fail_b)
    diff = {m: 100.0 * (sa.mean[m] - sb.mean[m]) / sb.mean[m]
            for m in ("rmse_pos", "rmse_vel", "rmse_att") if m in sa.mean and sb.mean.get(m)}
    return Comparison(sa, sb, diff)
