"""CSV / text output for single trials and Monte-Carlo summaries."""
from pathlib import Path

import numpy as np

from ..geometry3d import euler_zyx
from .runner import Comparison, McSummary, TrialResult

CSV_COLUMNS = [
    "t", "x", "y", "z", "vx", "vy", "vz", "yaw", "pitch", "roll",
    "sx", "sy", "sz", "svx", "svy", "svz", "syaw", "spitch", "sroll",
    "det", "anchor_x", "anchor_y", "anchor_z",
]
PLANNER_COLUMNS = ["t", "anchor_id", "px", "py", "pz", "det", "grad_norm"]
_FMT = "%.17g"


def trajectory_table(res: TrialResult) -> np.ndarray:
    """One row per IMU step; angles and their standard deviations in degrees.

    The attitude-error standard deviations are reported against the Euler
    angle they approximate near level flight (z -> yaw, y -> pitch, x -> roll).
    """
    ypr = np.degrees([euler_zyx(R) for R in res.est_att])
    s_att = np.degrees(res.std[:, [8, 7, 6]])
    return np.column_stack([
        res.t, res.est_pos, res.est_vel, ypr,
        res.std[:, 0:6], s_att, res.det, res.anchor_track,
    ])


def _write(path: Path, header, table) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            np.savetxt(fh, table, fmt=_FMT, delimiter=",")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def rmse_table(res: TrialResult) -> str:
    return (
        "RMSE\n"
        f"  position [m]     {res.rmse_pos:.6f}\n"
        f"  velocity [m/s]   {res.rmse_vel:.6f}\n"
        f"  attitude [deg]   {res.rmse_att:.6f}\n"
    )


def export_results(res: TrialResult, out_dir, stem: str = "trial") -> dict:
    """Write ``<stem>.csv``, ``<stem>_planner.csv`` and ``<stem>_summary.txt``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {
        "trajectory": out / f"{stem}.csv",
        "planner": out / f"{stem}_planner.csv",
        "summary": out / f"{stem}_summary.txt",
    }
    _write(paths["trajectory"], CSV_COLUMNS, trajectory_table(res))
    planner = np.array([[r.t, r.anchor_id, *r.position, r.det, r.grad_norm]
                        for r in res.planner_trace]).reshape(-1, len(PLANNER_COLUMNS))
    _write(paths["planner"], PLANNER_COLUMNS, planner)
    text = rmse_table(res) + (
        f"steps {len(res.t) - 1}, range updates {res.n_updates}, gated {res.n_gated}\n"
        f"final position std [m]  {res.std[-1, 0]:.6f} {res.std[-1, 1]:.6f} {res.std[-1, 2]:.6f}\n"
        f"det(A^T A)  start {res.det[0]:.6f}  end {res.det[-1]:.6f}\n"
        f"mean position NEES {float(np.mean(res.nees_pos)):.4f}\n"
    )
    try:
        paths["summary"].write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {paths['summary']}: {exc}") from exc
    return paths


def read_csv(path) -> dict:
    """Parse an exported CSV back into {column: array}."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


_ROWS = [("position [m]", "rmse_pos"), ("velocity [m/s]", "rmse_vel"),
         ("attitude [deg]", "rmse_att")]


def format_summary(s: McSummary) -> str:
    lines = [f"{s.name}: {s.completed}/{s.trials} trials completed, {s.n_failed} failed"]
    for label, key in _ROWS + [("position NEES", "nees_pos")]:
        if key in s.mean:
            lines.append(f"  {label:<16} mean {s.mean[key]:.6f}  std {s.std[key]:.6f}")
    for f in s.failures:
        lines.append(f"  failure: {f}")
    return "\n".join(lines)


def format_comparison(c: Comparison) -> str:
    lines = [
        f"average RMSE over {c.a.completed} common-random-number trials",
        f"  {'':<16} {c.a.name:>24} {c.b.name:>24} {'difference':>11}",
    ]
    for label, key in _ROWS:
        if key in c.diff_pct:
            lines.append(f"  {label:<16} {c.a.mean[key]:>24.6f} {c.b.mean[key]:>24.6f}"
                         f" {c.diff_pct[key]:>+10.1f}%")
    for s in (c.a, c.b):
        for f in s.failures:
            lines.append(f"  {s.name} failure: {f}")
    return "\n".join(lines)
