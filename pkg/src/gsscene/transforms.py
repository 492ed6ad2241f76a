"""Quaternion algebra and the local<->global object transform.

Quaternions are scalar-first ``(w, x, y, z)`` throughout, following the
Hamilton convention. All functions are vectorized over a leading batch
dimension: a quaternion argument may be shape ``(4,)`` or ``(N, 4)``.

An object is carried from its local frame into the scene frame by

    p' = R (p - mu) * stretch + xyz
    s' = s * stretch
    q' = quad x q          (per Gaussian)

where ``mu`` is the cloud centroid, ``R`` the object rotation and
``stretch`` the per-axis scale factor supplied by the schedule. Color and
opacity are carried over unchanged. Positions scale about the centroid so
that stretching never translates the object.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyCloud, NonUnitQuaternion
from .gaussians import GaussianCloud
from .guide import ObjectTransform

UNIT_TOL = 1e-6

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def _check_unit(q: np.ndarray, tol: float = UNIT_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norms = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise NonUnitQuaternion(f"quaternion norm deviates from 1 by {worst:.3e}")
    return q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a x b, renormalized. Broadcasts over batches."""
    a = _check_unit(a)
    b = _check_unit(b)
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    out = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion; shape (..., 3, 3)."""
    q = _check_unit(q)
    w, x, y, z = (q[..., i] for i in range(4))
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Unit quaternion rotating by ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_exp_map(rotvec: np.ndarray) -> np.ndarray:
    """Exponential map: rotation vector (axis * angle) -> unit quaternion."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        return IDENTITY_QUAT.copy()
    return quat_from_axis_angle(rotvec / angle, angle)


def quat_from_matrix(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion of a proper rotation matrix (Shepperd's method)."""
    rot = np.asarray(rot, dtype=float)
    m00, m11, m22 = rot[0, 0], rot[1, 1], rot[2, 2]
    trace = m00 + m11 + m22
    if trace > 0:
        s = 0.5 / np.sqrt(trace + 1.0)
        q = np.array(
            [0.25 / s, (rot[2, 1] - rot[1, 2]) * s,
             (rot[0, 2] - rot[2, 0]) * s, (rot[1, 0] - rot[0, 1]) * s]
        )
    elif m00 > m11 and m00 > m22:
        s = 2.0 * np.sqrt(1.0 + m00 - m11 - m22)
        q = np.array(
            [(rot[2, 1] - rot[1, 2]) / s, 0.25 * s,
             (rot[0, 1] + rot[1, 0]) / s, (rot[0, 2] + rot[2, 0]) / s]
        )
    elif m11 > m22:
        s = 2.0 * np.sqrt(1.0 + m11 - m00 - m22)
        q = np.array(
            [(rot[0, 2] - rot[2, 0]) / s, (rot[0, 1] + rot[1, 0]) / s,
             0.25 * s, (rot[1, 2] + rot[2, 1]) / s]
        )
    else:
        s = 2.0 * np.sqrt(1.0 + m22 - m00 - m11)
        q = np.array(
            [(rot[1, 0] - rot[0, 1]) / s, (rot[0, 2] + rot[2, 0]) / s,
             (rot[1, 2] + rot[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


def compose_to_global(
    cloud: GaussianCloud, t: ObjectTransform, stretch: np.ndarray
) -> GaussianCloud:
    """Carry a local-frame cloud into the scene frame (see module docstring).

    ``stretch`` is the per-axis factor from the scale schedule, applied
    about the cloud centroid before the rigid motion.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot compose an empty cloud")
    stretch = np.asarray(stretch, dtype=float)
    mu = cloud.p.mean(axis=0)
    rot = quat_to_matrix(np.asarray(t.quad, dtype=float))
    p = ((cloud.p - mu) * stretch) @ rot.T + np.asarray(t.xyz, dtype=float)
    s = cloud.s * stretch
    q = quat_mul(np.asarray(t.quad, dtype=float), cloud.q)
    return GaussianCloud(p=p, s=s, q=q, c=cloud.c.copy(), alpha=cloud.alpha.copy())


def restore_to_local(
    cloud: GaussianCloud, t: ObjectTransform, stretch: np.ndarray, mu: np.ndarray
) -> GaussianCloud:
    """Exact inverse of :func:`compose_to_global` given the original centroid."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot restore an empty cloud")
    stretch = np.asarray(stretch, dtype=float)
    mu = np.asarray(mu, dtype=float)
    rot = quat_to_matrix(np.asarray(t.quad, dtype=float))
    p = ((cloud.p - np.asarray(t.xyz, dtype=float)) @ rot) / stretch + mu
    s = cloud.s / stretch
    q = quat_mul(quat_conjugate(np.asarray(t.quad, dtype=float)), cloud.q)
    return GaussianCloud(p=p, s=s, q=q, c=cloud.c.copy(), alpha=cloud.alpha.copy())
