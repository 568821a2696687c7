"""Finite-difference audit of the closed-form det(A^T A) gradient."""
from dataclasses import dataclass

import numpy as np

from ..anchorplanner import build_info_matrix, det_info, grad_det
from ..simworld import Anchor, AnchorRole


@dataclass
class GradCheckReport:
    configs: int
    max_rel_error: float
    max_trace_error: float
    worst_index: int


def random_network(rng: np.random.Generator, n_anchors: int = 5, box: float = 10.0,
                   standoff: float = 0.3):
    """Agent and anchors uniform in a cube; anchors inside the standoff are redrawn."""
    x = rng.uniform(0.0, box, 3)
    anchors = []
    while len(anchors) < n_anchors:
        p = rng.uniform(0.0, box, 3)
        if np.linalg.norm(p - x) < standoff:
            continue
        role = AnchorRole.MOBILE if not anchors else AnchorRole.FIXED
        anchors.append(Anchor(len(anchors), p, role))
    return x, anchors


def fd_gradient(x_hat, anchors, mobile_id: int, h: float = 1e-6) -> np.ndarray:
    i = next(k for k, a in enumerate(anchors) if a.id == mobile_id)
    g = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        plus, minus = list(anchors), list(anchors)
        plus[i] = anchors[i].moved_to(anchors[i].position + e)
        minus[i] = anchors[i].moved_to(anchors[i].position - e)
        g[j] = (det_info(build_info_matrix(x_hat, plus))
                - det_info(build_info_matrix(x_hat, minus))) / (2 * h)
    return g


def grad_check(configs: int = 1000, seed: int = 0, n_anchors: int = 5, box: float = 10.0,
               standoff: float = 0.3, h: float = 1e-6) -> GradCheckReport:
    """Relative error is ||analytic - fd|| / ||fd|| per configuration."""
    rng = np.random.default_rng(seed)
    worst, worst_i, trace_err = 0.0, -1, 0.0
    for i in range(configs):
        x, anchors = random_network(rng, n_anchors, box, standoff)
        g = grad_det(x, anchors, 0)
        fd = fd_gradient(x, anchors, 0, h)
        rel = np.linalg.norm(g - fd) / np.linalg.norm(fd)
        if rel > worst:
            worst, worst_i = rel, i
        trace_err = max(trace_err, abs(build_info_matrix(x, anchors).trace - n_anchors))
    return GradCheckReport(configs, float(worst), float(trace_err), worst_i)
