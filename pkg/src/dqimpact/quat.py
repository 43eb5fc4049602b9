"""Quaternion algebra on scalar-first ``[w, x, y, z]`` numpy arrays.

Scalar-first component order is used everywhere in this package, including
file formats. Sign canonicalization (w >= 0) is applied only inside
:func:`log` and at error extraction, never during integration, so that
trajectories stay continuous.
"""
from __future__ import annotations

import math

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# rotate() refuses quaternions that drifted this far from unit norm; it means
# the caller forgot to renormalize.
UNIT_TOL = 1e-6


def pure(v: np.ndarray) -> np.ndarray:
    """Embed a 3-vector as a pure quaternion (w = 0)."""
    return np.array([0.0, v[0], v[1], v[2]])


def vector_part(q: np.ndarray) -> np.ndarray:
    return np.asarray(q[1:4])


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b."""
    aw, ax, ay, az = a.tolist()
    bw, bx, by, bz = b.tolist()
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    qw, qx, qy, qz = q.tolist()
    return np.array([qw, -qx, -qy, -qz])


def norm(q: np.ndarray) -> float:
    qw, qx, qy, qz = q.tolist()
    return math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)


def normalize(q: np.ndarray) -> np.ndarray:
    n = norm(q)
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    return q / n


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate 3-vector v by unit quaternion q (the sandwich q ⊗ v ⊗ q*).

    Raises ValueError when q has drifted more than UNIT_TOL from unit norm.
    """
    if abs(norm(q) - 1.0) > UNIT_TOL:
        raise ValueError(f"rotate() requires a unit quaternion, got |q| = {norm(q)!r}")
    qw, qx, qy, qz = q.tolist()
    vx, vy, vz = v.tolist()
    # v' = v + 2 w (qv x v) + 2 qv x (qv x v), expanded through t = 2 qv x v
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    return np.array(
        [
            vx + qw * tx + qy * tz - qz * ty,
            vy + qw * ty + qz * tx - qx * tz,
            vz + qw * tz + qx * ty - qy * tx,
        ]
    )


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix R with R v = rotate(q, v)."""
    qw, qx, qy, qz = q.tolist()
    return np.array(
        [
            [
                1.0 - 2.0 * (qy * qy + qz * qz),
                2.0 * (qx * qy - qw * qz),
                2.0 * (qx * qz + qw * qy),
            ],
            [
                2.0 * (qx * qy + qw * qz),
                1.0 - 2.0 * (qx * qx + qz * qz),
                2.0 * (qy * qz - qw * qx),
            ],
            [
                2.0 * (qx * qz - qw * qy),
                2.0 * (qy * qz + qw * qx),
                1.0 - 2.0 * (qx * qx + qy * qy),
            ],
        ]
    )


def exp(v: np.ndarray) -> np.ndarray:
    """Rotation-vector exponential: unit quaternion rotating by angle ||v|| about v.

    exp(0) is the identity; exp((0, 0, pi/2)) is the 90-degree rotation
    about z. Inverse of :func:`log` on the principal domain ||v|| < pi.
    """
    vx, vy, vz = v.tolist()
    theta = math.sqrt(vx * vx + vy * vy + vz * vz)
    if theta < 1e-8:
        # sin(t/2)/t expanded; keeps exp smooth through zero
        k = 0.5 - theta * theta / 48.0
    else:
        k = math.sin(0.5 * theta) / theta
    return np.array([math.cos(0.5 * theta), k * vx, k * vy, k * vz])


def log(q: np.ndarray) -> np.ndarray:
    """Rotation vector of a unit quaternion (principal branch, angle <= pi).

    The sign is canonicalized to w >= 0 first, so q and -q map to the same
    rotation vector. Near the antipode (angle within ~1e-9 of pi) the axis is
    taken from the vector part as stored; this is the documented branch
    choice.
    """
    if abs(norm(q) - 1.0) > UNIT_TOL:
        raise ValueError("log() requires a unit quaternion")
    qw, qx, qy, qz = q.tolist()
    if qw < 0.0:
        qw, qx, qy, qz = -qw, -qx, -qy, -qz
    s = math.sqrt(qx * qx + qy * qy + qz * qz)
    if s < 1e-12:
        # angle/sin(angle/2) -> 2 as s -> 0
        return np.array([2.0 * qx, 2.0 * qy, 2.0 * qz])
    angle = 2.0 * math.atan2(s, qw)
    k = angle / s
    return np.array([k * qx, k * qy, k * qz])
