"""Small 3D helpers: skew matrices, the SO(3) exponential and rotation repair.

Vectors are length-3 float arrays, matrices are 3x3 float arrays.  Rotations
are stored as full matrices; multiplying by R maps body-frame vectors into
the inertial frame.
"""
import math

import numpy as np

from .errors import DegenerateGeometryError

_SMALL_ANGLE = 1e-8
_MAX_REPAIR_DISTANCE = 0.1


def vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def skew(w) -> np.ndarray:
    """Cross-product matrix: skew(w) @ y == np.cross(w, y)."""
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def so3_exp(phi) -> np.ndarray:
    """Rotation matrix for the rotation vector ``phi`` (Rodrigues)."""
    x, y, z = float(phi[0]), float(phi[1]), float(phi[2])
    theta2 = x * x + y * y + z * z
    theta = math.sqrt(theta2)
    if theta < _SMALL_ANGLE:
        a, b = 1.0, 0.5
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    # I + a S + b S^2, with S^2 = phi phi^T - theta^2 I
    return np.array([
        [1.0 + b * (x * x - theta2), b * x * y - a * z, b * x * z + a * y],
        [b * x * y + a * z, 1.0 + b * (y * y - theta2), b * y * z - a * x],
        [b * x * z - a * y, b * y * z + a * x, 1.0 + b * (z * z - theta2)],
    ])


def rotation_angle(R) -> float:
    """Geodesic angle of R from the identity, in [0, pi]."""
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    s = 0.5 * np.sqrt(
        (R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2
    )
    return float(np.arctan2(s, c))


def reorthonormalize(R) -> np.ndarray:
    """Project a nearly-orthonormal matrix onto its polar factor in SO(3).

    Newton-Schulz iteration X <- X (3I - X^T X) / 2, which converges
    quadratically to the nearest orthonormal matrix when X^T X is close to I.
    Inputs further than 0.1 (Frobenius) from SO(3) are rejected.
    """
    R = np.asarray(R, dtype=float)
    if not np.all(np.isfinite(R)):
        raise DegenerateGeometryError("non-finite rotation matrix")
    if np.linalg.norm(R.T @ R - np.eye(3)) > 3 * _MAX_REPAIR_DISTANCE or np.linalg.det(R) <= 0:
        raise DegenerateGeometryError("matrix is too far from SO(3) to repair")
    X = R
    for _ in range(30):
        G = X.T @ X
        err = np.abs(G - np.eye(3)).max()
        if err < 1e-15:
            break
        X = X @ (1.5 * np.eye(3) - 0.5 * G)
    if np.linalg.norm(X - R) > _MAX_REPAIR_DISTANCE:
        raise DegenerateGeometryError("matrix is too far from SO(3) to repair")
    return X


def is_rotation(R, tol: float = 1e-9) -> bool:
    return bool(
        np.linalg.norm(R.T @ R - np.eye(3)) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
    )


def euler_zyx(R):
    """(yaw, pitch, roll) in radians for R = Rz(yaw) Ry(pitch) Rx(roll)."""
    yaw = np.arctan2(R[1, 0], R[0, 0])
    pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    return float(yaw), float(pitch), float(roll)
