"""Small rotation helpers (numpy, float64)."""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

EPS = 1e-12


def normalize(v, eps: float = EPS) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, eps)


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotvec_to_matrix(rv) -> np.ndarray:
    """Rodrigues formula; accepts (3,) or (N, 3)."""
    rv = np.asarray(rv, dtype=np.float64)
    single = rv.ndim == 1
    rv = rv.reshape(-1, 3)
    theta = np.linalg.norm(rv, axis=1)
    small = theta < 1e-12
    safe = np.where(small, 1.0, theta)
    k = rv / safe[:, None]
    kx, ky, kz = k[:, 0], k[:, 1], k[:, 2]
    zero = np.zeros_like(kx)
    K = np.stack([zero, -kz, ky, kz, zero, -kx, -ky, kx, zero], axis=1).reshape(-1, 3, 3)
    s = np.where(small, 0.0, np.sin(theta))[:, None, None]
    c = np.where(small, 0.0, 1.0 - np.cos(theta))[:, None, None]
    out = np.eye(3) + s * K + c * (K @ K)
    if small.any():
        # first-order expansion for tiny angles
        x, y, z = rv[small, 0], rv[small, 1], rv[small, 2]
        z0 = np.zeros_like(x)
        out[small] = np.eye(3) + np.stack([z0, -z, y, z, z0, -x, -y, x, z0], axis=1).reshape(-1, 3, 3)
    return out[0] if single else out


def matrix_to_rotvec(m) -> np.ndarray:
    return Rotation.from_matrix(np.asarray(m, dtype=np.float64)).as_rotvec()


def axis_rotation(axis, angle: float) -> np.ndarray:
    return rotvec_to_matrix(normalize(axis) * angle)


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def swing(u, v) -> np.ndarray:
    """Minimal rotation taking unit vector u onto unit vector v.

    For antiparallel inputs the axis is the one orthogonal to u that is
    closest to world z x u (falling back to x), which keeps the choice
    reflection-equivariant for vertical mirror planes.
    """
    u = normalize(u)
    v = normalize(v)
    c = float(np.clip(u @ v, -1.0, 1.0))
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        ref = np.cross([0.0, 0.0, 1.0], u)
        if np.linalg.norm(ref) < 1e-9:
            ref = np.cross([1.0, 0.0, 0.0], u)
        return axis_rotation(ref, np.pi)
    return axis_rotation(axis / s, np.arctan2(s, c))


def angle_between(a, b) -> float:
    """Unsigned angle via atan2 (stable near 0 and pi)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b))
