"""Quaternion math, (w, x, y, z) scalar-first convention.

Functions accept a single quaternion of shape (4,) or a batch of shape
(N, 4). Inputs need not be normalized: every conversion to a rotation
matrix normalizes first, so q and 2*q describe the same rotation. The
zero quaternion is rejected.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

_EPS_NORM = 1e-12


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit norm; rejects near-zero quaternions."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm <= _EPS_NORM):
        raise InvalidInputError("quaternion norm is zero (or near zero)")
    return q / norm


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Convert quaternion(s) to rotation matrix/matrices.

    Returns (3, 3) for a single quaternion, (N, 3, 3) for a batch.
    The result is orthonormal with determinant +1 and is invariant to
    the input's norm.
    """
    q = quat_normalize(q)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    R[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[:, 0, 1] = 2.0 * (x * y - w * z)
    R[:, 0, 2] = 2.0 * (x * z + w * y)
    R[:, 1, 0] = 2.0 * (x * y + w * z)
    R[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[:, 1, 2] = 2.0 * (y * z - w * x)
    R[:, 2, 0] = 2.0 * (x * z - w * y)
    R[:, 2, 1] = 2.0 * (y * z + w * x)
    R[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R[0] if single else R


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b; broadcasts over leading batch dimensions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_from_axis_angle(axis_angle: np.ndarray) -> np.ndarray:
    """Quaternion from axis-angle vector(s); the vector norm is the angle."""
    v = np.asarray(axis_angle, dtype=np.float64)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    angle = np.linalg.norm(v, axis=-1)
    half = 0.5 * angle
    # sin(half)/angle is 0.5 at angle -> 0
    scale = np.where(angle > 1e-12, np.sin(half) / np.where(angle > 1e-12, angle, 1.0), 0.5)
    q = np.concatenate([np.cos(half)[:, None], v * scale[:, None]], axis=-1)
    return q[0] if single else q


def rotation_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix/matrices to unit quaternion(s), (w, x, y, z).

    Uses the numerically stable largest-pivot branch per matrix.
    """
    R = np.asarray(R, dtype=np.float64)
    single = R.ndim == 2
    R = R.reshape((-1, 3, 3))
    n = R.shape[0]
    q = np.empty((n, 4), dtype=np.float64)
    m00, m01, m02 = R[:, 0, 0], R[:, 0, 1], R[:, 0, 2]
    m10, m11, m12 = R[:, 1, 0], R[:, 1, 1], R[:, 1, 2]
    m20, m21, m22 = R[:, 2, 0], R[:, 2, 1], R[:, 2, 2]
    trace = m00 + m11 + m22

    # branch on the largest of (trace, m00, m11, m22)
    cand = np.stack([trace, m00, m11, m22], axis=-1)
    branch = np.argmax(cand, axis=-1)

    s = np.sqrt(np.maximum(trace + 1.0, 0.0)) * 2.0
    mask = branch == 0
    q[mask, 0] = 0.25 * s[mask]
    q[mask, 1] = ((m21 - m12) / s)[mask]
    q[mask, 2] = ((m02 - m20) / s)[mask]
    q[mask, 3] = ((m10 - m01) / s)[mask]

    s = np.sqrt(np.maximum(1.0 + m00 - m11 - m22, 0.0)) * 2.0
    mask = branch == 1
    q[mask, 0] = ((m21 - m12) / s)[mask]
    q[mask, 1] = 0.25 * s[mask]
    q[mask, 2] = ((m01 + m10) / s)[mask]
    q[mask, 3] = ((m02 + m20) / s)[mask]

    s = np.sqrt(np.maximum(1.0 - m00 + m11 - m22, 0.0)) * 2.0
    mask = branch == 2
    q[mask, 0] = ((m02 - m20) / s)[mask]
    q[mask, 1] = ((m01 + m10) / s)[mask]
    q[mask, 2] = 0.25 * s[mask]
    q[mask, 3] = ((m12 + m21) / s)[mask]

    s = np.sqrt(np.maximum(1.0 - m00 - m11 + m22, 0.0)) * 2.0
    mask = branch == 3
    q[mask, 0] = ((m10 - m01) / s)[mask]
    q[mask, 1] = ((m02 + m20) / s)[mask]
    q[mask, 2] = ((m12 + m21) / s)[mask]
    q[mask, 3] = 0.25 * s[mask]

    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return q[0] if single else q


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion(s) q."""
    R = quat_to_rotation(q)
    v = np.asarray(v, dtype=np.float64)
    if R.ndim == 2:
        return v @ R.T
    return np.einsum("nij,nj->ni", R, v)
