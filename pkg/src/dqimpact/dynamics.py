"""Rigid-body parameters and continuous-time flight dynamics.

Two equivalent state representations are implemented side by side:

* the classical form: world position/velocity, body attitude quaternion
  and body angular rate, with scalar thrust along the body vertical axis;
* the dual form: a unit dual quaternion pose and a body twist, driven by
  dual wrenches.

Frame and sign conventions (used verbatim everywhere):

* the world vertical unit vector ``E_Z = (0, 0, 1)`` points *down*, gravity
  accelerates along +E_Z with magnitude ``gravity``;
* scalar thrust f >= 0 produces the body-frame force vector ``-f * E_Z``,
  i.e. it opposes gravity at level hover. The dual form takes the full
  body-frame thrust vector, of which the scalar case is the restriction
  ``force = -f * E_Z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .dualquat import (
    DualQuaternion,
    DualVector,
    cross,
    dq_from_pose,
    dq_to_pose,
    dual_cross_adjoint,
    dual_dot,
)

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass
class BodyParams:
    """Mass, inertia and gravity of the vehicle.

    The inertia must be symmetric positive definite; this is checked at
    construction through its symmetric eigenvalues.
    """

    mass: float
    inertia: np.ndarray
    gravity: float = 9.81
    inertia_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.inertia.shape != (3, 3):
            raise ValueError("inertia must be a 3x3 matrix")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError("inertia must be symmetric")
        if float(np.linalg.eigvalsh(self.inertia).min()) <= 0.0:
            raise ValueError("inertia must be positive definite")
        self.inertia_inv = np.linalg.inv(self.inertia)


@dataclass
class DualInertia:
    """Dual inertia operator: inertia on the real block, mass on the dual block."""

    inertia: np.ndarray
    mass: float
    inertia_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.inertia_inv = np.linalg.inv(self.inertia)

    @staticmethod
    def from_body(bp: BodyParams) -> "DualInertia":
        return DualInertia(bp.inertia, bp.mass)

    def apply(self, twist: DualVector) -> DualVector:
        """Dual momentum of a twist: J w + eps (m v)."""
        return DualVector(self.inertia @ twist.real, self.mass * twist.dual)

    def apply_inverse(self, h: DualVector) -> DualVector:
        return DualVector(self.inertia_inv @ h.real, h.dual / self.mass)


@dataclass
class ClassicState:
    """World position/velocity, body attitude quaternion, body angular rate."""

    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    angular_rate: np.ndarray

    def __post_init__(self):
        if abs(quat.norm(self.attitude) - 1.0) > 1e-9:
            raise ValueError("attitude quaternion must be unit to 1e-9")


@dataclass
class DualState:
    """Unit dual quaternion pose plus body twist (angular + eps linear)."""

    pose: DualQuaternion
    twist: DualVector


def classic_to_dual(s: ClassicState) -> DualState:
    v_body = quat.rotate(quat.conjugate(s.attitude), s.velocity)
    return DualState(
        dq_from_pose(s.attitude, s.position),
        DualVector(np.asarray(s.angular_rate, dtype=float), v_body),
    )


def dual_to_classic(s: DualState) -> ClassicState:
    q, p = dq_to_pose(s.pose)
    return ClassicState(p, quat.rotate(q, s.twist.dual), q, s.twist.real)


def classic_derivative(
    s: ClassicState, thrust: float, torque: np.ndarray, bp: BodyParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Time derivative of the classical state under scalar thrust and body torque.

    Returns (dp, dq, dv, dw):
        dp = v
        dq = (1/2) q ⊗ w
        dv = g E_Z - (f/m) q ⊙ E_Z
        dw = J^-1 (tau - w x (J w))
    """
    dp = np.asarray(s.velocity, dtype=float)
    dq = 0.5 * quat.mul(s.attitude, quat.pure(s.angular_rate))
    dv = bp.gravity * E_Z - (thrust / bp.mass) * quat.rotate(s.attitude, E_Z)
    jw = bp.inertia @ s.angular_rate
    dw = bp.inertia_inv @ (np.asarray(torque, dtype=float) - cross(s.angular_rate, jw))
    return dp, dq, dv, dw


def gravity_wrench(pose: DualQuaternion, bp: BodyParams) -> DualVector:
    """Gravitational dual wrench: zero torque + eps body-frame gravity force."""
    g_world = (bp.mass * bp.gravity) * E_Z
    return DualVector(np.zeros(3), quat.rotate(quat.conjugate(pose.real), g_world))


def actuation_wrench(torque: np.ndarray, force_body: np.ndarray) -> DualVector:
    """Pack a body torque and body-frame thrust force into a dual wrench."""
    return DualVector(np.asarray(torque, dtype=float), np.asarray(force_body, dtype=float))


def dual_derivative(
    s: DualState, wrench_act: DualVector, bp: BodyParams, inertia: DualInertia
) -> tuple[np.ndarray, DualVector]:
    """Time derivative of the dual state under an actuation wrench.

    Returns the raw 8-component pose tangent (1/2) q_hat ⊗ xi_hat and the
    twist derivative M^-1(F_total - xi x* M(xi)), where F_total adds the
    gravitational wrench to the actuation wrench.
    """
    w_quat = quat.pure(s.twist.real)
    v_quat = quat.pure(s.twist.dual)
    pose_dot = np.empty(8)
    pose_dot[:4] = 0.5 * quat.mul(s.pose.real, w_quat)
    pose_dot[4:] = 0.5 * (quat.mul(s.pose.real, v_quat) + quat.mul(s.pose.dual, w_quat))

    total = wrench_act + gravity_wrench(s.pose, bp)
    momentum = inertia.apply(s.twist)
    twist_dot = inertia.apply_inverse(total - dual_cross_adjoint(s.twist, momentum))
    return pose_dot, twist_dot


def kinetic_energy(twist: DualVector, inertia: DualInertia) -> float:
    """(1/2) <xi, M(xi)>: rotational plus translational kinetic energy."""
    return 0.5 * dual_dot(twist, inertia.apply(twist))
