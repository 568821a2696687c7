"""Mobile-anchor planning by gradient ascent on det(A^T A).

A^T A is the 3x3 information matrix of the linearized range model at the
agent's *estimated* position: one rank-one term e e^T per anchor, with e the
unit vector between agent and anchor.  Its six distinct entries are kept in
the compact symmetric layout

    | m1 m2 m3 |
    | m2 m4 m5 |
    | m3 m5 m6 |

Gradient derivation (single mobile anchor at p, d = x_hat - p, r2 = d.d)
-------------------------------------------------------------------------
Expanding the determinant,

    det = m1 m4 m6 - m1 m5^2 - m2^2 m6 + 2 m2 m3 m5 - m3^2 m4

so the partials with respect to the entries are

    D1 = m4 m6 - m5^2        D4 = m1 m6 - m3^2
    D2 = 2 (m3 m5 - m2 m6)   D5 = 2 (m2 m3 - m1 m5)
    D3 = 2 (m2 m5 - m3 m4)   D6 = m1 m4 - m2^2

Only the mobile anchor's term depends on p.  Its entries are d_a d_b / r2 and,
since dd/dp = -I,

    d(d_a d_b / r2)/dp_j = (2 d_a d_b d_j / r2 - delta_aj d_b - delta_bj d_a) / r2

Summing D_k * dm_k/dp_j over the six entries gives the three components of
the gradient in closed form (``grad_det``).  Finite differences are only used
by the tests and the ``grad-check`` command.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateGeometryError


class InfoMatrix(NamedTuple):
    m1: float
    m2: float
    m3: float
    m4: float
    m5: float
    m6: float
    n_used: int = 0
    skipped: tuple = ()

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.m1, self.m2, self.m3],
            [self.m2, self.m4, self.m5],
            [self.m3, self.m5, self.m6],
        ])

    @property
    def trace(self) -> float:
        return self.m1 + self.m4 + self.m6


@dataclass(frozen=True)
class PlannerConfig:
    """Gain, interval and safety limits for the mobile-anchor ascent.

    ``fixed_altitude`` freezes the z coordinate of the mobile anchors (plan in
    the horizontal plane).  ``standoff`` is the closest the planner lets a
    mobile anchor approach the agent estimate.
    """
    gain: float = 5.0
    interval: float = 0.1
    max_speed: float = 0.5
    fixed_altitude: bool = False
    standoff: float = 0.3

    def __post_init__(self):
        if not self.gain > 0:
            raise ConfigError("planner gain must be > 0")
        if not self.interval > 0:
            raise ConfigError("planner interval must be > 0")
        if not self.max_speed > 0:
            raise ConfigError("planner max_speed must be > 0")
        if not self.standoff >= 0:
            raise ConfigError("planner standoff must be >= 0")


def build_info_matrix(x_hat, anchors, standoff: float = 0.0) -> InfoMatrix:
    """Sum of unit-vector outer products from the agent estimate to each anchor.

    Anchors closer than ``standoff`` (or than 1e-9 m) contribute nothing and
    are reported in ``skipped``.
    """
    if len(anchors) == 0:
        raise ConfigError("need at least one anchor")
    M, keep = info_from_positions(x_hat, np.array([a.position for a in anchors]), standoff)
    skipped = tuple(a.id for a, k in zip(anchors, keep) if not k)
    return InfoMatrix(M[0, 0], M[0, 1], M[0, 2], M[1, 1], M[1, 2], M[2, 2],
                      n_used=int(keep.sum()), skipped=skipped)


def info_from_positions(x_hat, positions: np.ndarray, standoff: float = 0.0):
    """A^T A as a dense 3x3 array from an (N, 3) array of anchor positions.

    Returns (matrix, mask of anchors that contributed).
    """
    D = np.asarray(x_hat, dtype=float) - positions
    r = np.sqrt(np.einsum("ij,ij->i", D, D))
    keep = r >= max(standoff, 1e-9)
    U = D[keep] / r[keep, None]
    return U.T @ U, keep


def det_info(M: InfoMatrix) -> float:
    m1, m2, m3, m4, m5, m6 = M[:6]
    return m1 * (m4 * m6 - m5 * m5) - m2 * (m2 * m6 - m5 * m3) + m3 * (m2 * m5 - m4 * m3)


def _det_partials(M: InfoMatrix):
    m1, m2, m3, m4, m5, m6 = M[:6]
    return (
        m4 * m6 - m5 * m5,
        2.0 * (m3 * m5 - m2 * m6),
        2.0 * (m2 * m5 - m3 * m4),
        m1 * m6 - m3 * m3,
        2.0 * (m2 * m3 - m1 * m5),
        m1 * m4 - m2 * m2,
    )


def _grad_from_partials(D, d: np.ndarray) -> np.ndarray:
    D1, D2, D3, D4, D5, D6 = D
    dx, dy, dz = d
    r2 = d @ d
    # weighted quadratic form q = sum_k D_k m_k(d) * r2, written out
    q = (D1 * dx * dx + D2 * dx * dy + D3 * dx * dz
         + D4 * dy * dy + D5 * dy * dz + D6 * dz * dz)
    # dq/dd without the 1/r2 factor
    gx = 2.0 * D1 * dx + D2 * dy + D3 * dz
    gy = D2 * dx + 2.0 * D4 * dy + D5 * dz
    gz = D3 * dx + D5 * dy + 2.0 * D6 * dz
    # d/dp_j [q/r2] = (2 q d_j / r2 - g_j) / r2
    return np.array([
        (2.0 * q * dx / r2 - gx) / r2,
        (2.0 * q * dy / r2 - gy) / r2,
        (2.0 * q * dz / r2 - gz) / r2,
    ])


def grad_det(x_hat, anchors, mobile_id: int, standoff: float = 0.0) -> np.ndarray:
    """Closed-form gradient of det(A^T A) with respect to one mobile anchor's position."""
    x_hat = np.asarray(x_hat, dtype=float)
    mobile = [a for a in anchors if a.id == mobile_id]
    if not mobile:
        raise ConfigError(f"anchor {mobile_id} not in network")
    d = x_hat - mobile[0].position
    if np.sqrt(d @ d) < max(standoff, 1e-6):
        raise DegenerateGeometryError(
            f"mobile anchor {mobile_id} is within {max(standoff, 1e-6)} m of the agent")
    M = build_info_matrix(x_hat, anchors, standoff)
    return _grad_from_partials(_det_partials(M), d)


def grad_det_all(x_hat, anchors, standoff: float = 0.0) -> dict:
    """Gradient for every mobile anchor, each taken with the others held fixed."""
    return {a.id: grad_det(x_hat, anchors, a.id, standoff) for a in anchors if a.mobile}


def velocity_command(grad, cfg: PlannerConfig) -> np.ndarray:
    v = cfg.gain * np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite gradient")
    if cfg.fixed_altitude:
        v[2] = 0.0
    speed = np.linalg.norm(v)
    if speed > cfg.max_speed:
        v *= cfg.max_speed / speed
    return v


def step_anchor(p, v_cmd, cfg: PlannerConfig, x_hat=None) -> np.ndarray:
    """Move an anchor by ``interval * v_cmd``.

    When ``x_hat`` is given and the anchor is inside the standoff radius
    (or would end up inside it), the component of the command pointing
    towards the agent is dropped.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v_cmd, dtype=float)
    p_new = p + cfg.interval * v
    if x_hat is None or cfg.standoff <= 0:
        return p_new
    radial = p - np.asarray(x_hat, dtype=float)
    dist = np.linalg.norm(radial)
    if dist > 0 and np.linalg.norm(p_new - x_hat) < cfg.standoff:
        u = radial / dist
        inward = v @ u
        if inward < 0:
            v = v - inward * u
        p_new = p + cfg.interval * v
    return p_new


class PlannerRecord(NamedTuple):
    t: float
    anchor_id: int
    position: np.ndarray
    det: float
    grad_norm: float


def plan_step(x_hat, anchors, cfg: PlannerConfig, t: float = 0.0):
    """One planner tick: returns (moved anchors, det before the move, records).

    A mobile anchor whose gradient is undefined (inside the standoff radius
    of the agent estimate) holds its position for this tick.
    """
    det = det_info(build_info_matrix(x_hat, anchors, cfg.standoff))
    records = []
    moved = list(anchors)
    for i, a in enumerate(anchors):
        if not a.mobile:
            continue
        try:
            g = grad_det(x_hat, anchors, a.id, cfg.standoff)
        except DegenerateGeometryError:
            g = np.zeros(3)
        v = velocity_command(g, cfg)
        moved[i] = a.moved_to(step_anchor(a.position, v, cfg, x_hat))
        records.append(PlannerRecord(t, a.id, a.position.copy(), det, float(np.linalg.norm(g))))
    return moved, det, records


def ascend(x_hat, anchors, cfg: PlannerConfig, steps: int, tol: float = 0.0):
    """Run ``steps`` planner ticks against a stationary agent estimate.

    Stops early once every mobile gradient norm falls below ``tol``.
    Returns the final anchors and the list of planner records.
    """
    records = []
    for k in range(steps):
        anchors, _, recs = plan_step(x_hat, anchors, cfg, t=k * cfg.interval)
        records.extend(recs)
        if recs and max(r.grad_norm for r in recs) < tol:
            break
    return anchors, records
