"""Dual quaternion and screw algebra.

Three value types cover everything downstream code needs:

* :class:`DualVector` -- a pure dual quaternion stored as two 3-vectors.
  It holds body twists (angular + linear velocity), Pluecker screws
  (moment + direction), wrenches (torque + force) and dual momenta.
* :class:`DualMatrix` -- a block-decoupled operator ``A + eps B`` applied
  with :func:`dual_matrix_apply`; used for admittance and damping gains.
* :class:`DualQuaternion` -- a unit dual quaternion representing a rigid
  pose ``q + eps (1/2) p ⊗ q``.

Pure dual vectors are kept structurally pure (two 3-vectors, never eight
components), so nilpotency of the dual unit can never be violated by
construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quat

# Unit-pose constraint tolerance used by the validating constructors.
POSE_TOL = 1e-9


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3-vector cross product (hand-rolled: np.cross is slow for singles)."""
    ax, ay, az = a.tolist()
    bx, by, bz = b.tolist()
    return np.array([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx])


@dataclass(frozen=True, eq=False)
class DualVector:
    """Pure dual quaternion real + eps dual, each part a 3-vector."""

    real: np.ndarray
    dual: np.ndarray

    @staticmethod
    def zero() -> "DualVector":
        return DualVector(np.zeros(3), np.zeros(3))

    def __add__(self, other: "DualVector") -> "DualVector":
        return DualVector(self.real + other.real, self.dual + other.dual)

    def __sub__(self, other: "DualVector") -> "DualVector":
        return DualVector(self.real - other.real, self.dual - other.dual)

    def __neg__(self) -> "DualVector":
        return DualVector(-self.real, -self.dual)

    def scaled(self, k: float) -> "DualVector":
        return DualVector(k * self.real, k * self.dual)

    def as_array(self) -> np.ndarray:
        out = np.empty(6)
        out[:3] = self.real
        out[3:] = self.dual
        return out

    @staticmethod
    def from_array(a: np.ndarray) -> "DualVector":
        return DualVector(np.asarray(a[:3], dtype=float), np.asarray(a[3:6], dtype=float))


def dual_dot(a: DualVector, b: DualVector) -> float:
    """Dual dot product: a.real . b.real + a.dual . b.dual (a scalar)."""
    ar, br = a.real.tolist(), b.real.tolist()
    ad, bd = a.dual.tolist(), b.dual.tolist()
    return (
        ar[0] * br[0]
        + ar[1] * br[1]
        + ar[2] * br[2]
        + ad[0] * bd[0]
        + ad[1] * bd[1]
        + ad[2] * bd[2]
    )


def dual_cross(a: DualVector, b: DualVector) -> DualVector:
    """Kinematic dual cross: (ar x br) + eps (ar x bd + ad x br)."""
    return DualVector(
        cross(a.real, b.real),
        cross(a.real, b.dual) + cross(a.dual, b.real),
    )


def dual_cross_adjoint(a: DualVector, b: DualVector) -> DualVector:
    """Kinetic (adjoint) dual cross: (ar x br + ad x bd) + eps (ar x bd).

    This is the pairing that makes the gyroscopic term orthogonal to the
    twist in the kinetic-energy balance.
    """
    return DualVector(
        cross(a.real, b.real) + cross(a.dual, b.dual),
        cross(a.real, b.dual),
    )


@dataclass(frozen=True, eq=False)
class DualMatrix:
    """Block-decoupled dual operator: real 3x3 acts on the real part, dual on the dual."""

    real: np.ndarray
    dual: np.ndarray

    @staticmethod
    def zero() -> "DualMatrix":
        return DualMatrix(np.zeros((3, 3)), np.zeros((3, 3)))

    @staticmethod
    def diagonal(real_gain: float, dual_gain: float) -> "DualMatrix":
        return DualMatrix(real_gain * np.eye(3), dual_gain * np.eye(3))


def dual_matrix_apply(gain: DualMatrix, a: DualVector) -> DualVector:
    """Decoupled matrix action: A a_real + eps B a_dual."""
    return DualVector(gain.real @ a.real, gain.dual @ a.dual)


@dataclass(frozen=True, eq=False)
class DualQuaternion:
    """Unit dual quaternion pose, real rotation quaternion + eps translation part.

    The constructor does not validate; use :func:`dq_from_pose`,
    :func:`dq_mul` chains followed by :func:`dq_normalized`, or
    :func:`dq_exp`. :func:`unit_violation` reports constraint drift.
    """

    real: np.ndarray
    dual: np.ndarray


def dq_identity() -> DualQuaternion:
    return DualQuaternion(quat.IDENTITY.copy(), np.zeros(4))


def dq_from_pose(q: np.ndarray, p: np.ndarray) -> DualQuaternion:
    """Build the pose q + eps (1/2) p ⊗ q from a unit rotation q and translation p."""
    if abs(quat.norm(q) - 1.0) > quat.UNIT_TOL:
        raise ValueError("dq_from_pose requires a unit rotation quaternion")
    return DualQuaternion(np.asarray(q, dtype=float), 0.5 * quat.mul(quat.pure(p), q))


def dq_to_pose(dq: DualQuaternion) -> tuple[np.ndarray, np.ndarray]:
    """Recover (q, p): rotation quaternion and translation vector."""
    p_quat = 2.0 * quat.mul(dq.dual, quat.conjugate(dq.real))
    return dq.real, p_quat[1:4]


def dq_mul(a: DualQuaternion, b: DualQuaternion) -> DualQuaternion:
    """Pose composition a ⊗ b (apply b first, then a)."""
    return DualQuaternion(
        quat.mul(a.real, b.real),
        quat.mul(a.real, b.dual) + quat.mul(a.dual, b.real),
    )


def dq_conjugate(a: DualQuaternion) -> DualQuaternion:
    """Quaternion conjugate of both parts; the inverse of a unit pose."""
    return DualQuaternion(quat.conjugate(a.real), quat.conjugate(a.dual))


def dq_normalized(a: DualQuaternion) -> DualQuaternion:
    """Renormalize: unit real part, dual part re-orthogonalized against it.

    Used after product chains and integrator steps; it bounds constraint
    drift without hiding algebra bugs (drift is monitored separately by the
    simulator).
    """
    n = quat.norm(a.real)
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("cannot normalize a dual quaternion with zero real part")
    real = a.real / n
    dual = a.dual / n
    dual = dual - float(np.dot(real, dual)) * real
    return DualQuaternion(real, dual)


def unit_violation(a: DualQuaternion) -> float:
    """Max of |  ||real|| - 1 | and |<real, dual>|, the two unit-pose constraints."""
    return max(abs(quat.norm(a.real) - 1.0), abs(float(np.dot(a.real, a.dual))))


def transform_point(dq: DualQuaternion, r: np.ndarray) -> np.ndarray:
    """Map a body-frame point to the world frame through the pose."""
    q, p = dq_to_pose(dq)
    return quat.rotate(q, r) + p


def _left_jacobian(w: np.ndarray) -> np.ndarray:
    """SO(3) left Jacobian V(w): integral of exp(s[w]x) over s in [0,1].

    Gives the translation of a constant-twist screw motion: a body twist
    (w, v) displaces the origin by V(w) v.
    """
    wx, wy, wz = w.tolist()
    theta2 = wx * wx + wy * wy + wz * wz
    theta = math.sqrt(theta2)
    if theta < 1e-4:
        c1 = 0.5 - theta2 / 24.0
        c2 = 1.0 / 6.0 - theta2 / 120.0
    else:
        c1 = (1.0 - math.cos(theta)) / theta2
        c2 = (theta - math.sin(theta)) / (theta2 * theta)
    hat = np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])
    return np.eye(3) + c1 * hat + c2 * (hat @ hat)


def dq_exp(delta: DualVector) -> DualQuaternion:
    """Screw exponential of a displacement: the pose reached by flowing the
    constant body twist ``delta`` for unit time.

    Callers pass the full displacement; the half-angle of the underlying
    quaternion exponential is applied internally, so the real part of the
    result has scalar component cos(||delta.real|| / 2).
    """
    angle = float(np.linalg.norm(delta.real))
    if angle >= 2.0 * math.pi:
        raise ValueError("rotational displacement must be below 2*pi")
    q = quat.exp(delta.real)
    p = _left_jacobian(delta.real) @ delta.dual
    return dq_from_pose(q, p)


def dq_log(dq: DualQuaternion) -> DualVector:
    """Inverse of :func:`dq_exp` on the principal domain (rotation angle <= pi)."""
    q, p = dq_to_pose(dq)
    w = quat.log(q)
    v = np.linalg.solve(_left_jacobian(w), p)
    return DualVector(w, v)


def screw_from_contact(r_c: np.ndarray, u_B: np.ndarray) -> DualVector:
    """Unit screw through body-frame point r_c along unit direction u_B,
    in Pluecker line coordinates: moment (r_c x u_B) + eps direction u_B."""
    n = float(np.linalg.norm(u_B))
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"screw direction must be unit length, got {n!r}")
    return DualVector(cross(r_c, u_B), np.asarray(u_B, dtype=float))
