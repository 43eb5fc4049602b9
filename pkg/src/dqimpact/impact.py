"""Impulse-based rigid-body impact resolution.

Both reset-map formulations live here:

* :func:`impulse_matrix` / :func:`reset_matrix` -- the classical world-frame
  impulse-momentum solution built from the effective-mass scalar;
* :func:`impulse_dq` / :func:`reset_dq` -- the screw/dual-quaternion
  formulation that projects the body twist onto contact screws and updates
  the twist in closed form.

The two are algebraically equivalent; the randomized equivalence suite and
the `equivalence` CLI subcommand exercise the identity at runtime.

:func:`impulse_coupled` additionally *keeps* the friction cross-coupling
term that both standard formulations drop from the impulse denominator. It
serves as the disturbance-realistic contact model for Monte Carlo studies.

Friction is one-shot Coulomb: the tangential impulse has magnitude mu times
the normal impulse and acts against the sliding direction (so it always
dissipates); there is no stick/slip complementarity. When the post-impact
tangential velocity reverses sign, a warning is logged (the one-shot model
does not clamp slip reversal).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import quat
from .dualquat import DualVector, cross, dual_dot, screw_from_contact
from .dynamics import BodyParams, ClassicState, DualInertia

logger = logging.getLogger(__name__)

# No-slip threshold on the tangential contact speed (m/s): below it friction
# is skipped for the impact. Resting threshold on the normal closing speed
# (m/s): below it no impulse fires and the simulator clamps instead. Both
# exist to prevent numerical chatter around zero.
SLIP_THRESHOLD = 1e-8
RESTING_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ContactSpec:
    """Contact geometry and material: body-frame point, world-frame unit
    normal (pointing from the surface into free space), restitution in
    [0, 1], friction coefficient >= 0."""

    point: np.ndarray
    normal_world: np.ndarray
    restitution: float
    friction: float
    slip_threshold: float = SLIP_THRESHOLD
    resting_threshold: float = RESTING_THRESHOLD

    def __post_init__(self):
        if abs(float(np.linalg.norm(self.normal_world)) - 1.0) > 1e-9:
            raise ValueError("contact normal must be unit length to 1e-9")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if self.friction < 0.0:
            raise ValueError("friction coefficient must be non-negative")


@dataclass(frozen=True, eq=False)
class ImpulseResult:
    """Resolved impulse: scalar magnitude, dual wrench, effective inverse
    mass, and the total impulse in body and world frames."""

    magnitude: float
    wrench: DualVector
    effective_inverse_mass: float
    impulse_body: np.ndarray
    impulse_world: np.ndarray
    normal_screw: DualVector
    tangent_screw: DualVector | None
    normal_speed: float
    restitution: float
    friction: float


def tangent_direction(
    twist: DualVector, r_c: np.ndarray, n_B: np.ndarray, slip_threshold: float = SLIP_THRESHOLD
) -> np.ndarray | None:
    """Unit body-frame sliding direction at the contact point, or None.

    The contact-point velocity is v_B + w x r_c; its component along the
    normal is removed and the remainder normalized. Below the slip
    threshold there is no defined sliding direction and friction is skipped
    (None is returned).
    """
    v_cp = twist.dual + cross(twist.real, r_c)
    tangential = v_cp - float(np.dot(v_cp, n_B)) * np.asarray(n_B, dtype=float)
    speed = float(np.linalg.norm(tangential))
    if speed < slip_threshold:
        return None
    return tangential / speed


def _check_approaching(normal_speed: float, resting_threshold: float) -> None:
    if normal_speed >= 0.0:
        raise ValueError(
            f"separating contact (normal speed {normal_speed:.3e} >= 0): "
            "guard logic upstream should not have fired"
        )
    if normal_speed >= -resting_threshold:
        raise ValueError(
            f"resting contact (|normal speed| {abs(normal_speed):.3e} below threshold): "
            "caller should clamp instead of resolving an impulse"
        )


def _warn_on_slip_reversal(twist_plus: DualVector, tangent_screw: DualVector) -> None:
    # the tangent screw points against the pre-impact slide, so a positive
    # projection of the post-impact twist on it means the slip reversed
    if dual_dot(twist_plus, tangent_screw) > 0.0:
        logger.warning(
            "one-shot Coulomb impulse reversed the tangential contact velocity; "
            "the friction model does not clamp slip reversal"
        )


def impulse_dq(
    twist: DualVector,
    contact: ContactSpec,
    attitude: np.ndarray,
    inertia: DualInertia,
) -> ImpulseResult:
    """Resolve the impact impulse on contact screws in the dual algebra.

    The world normal is rotated into the body frame, normal and tangential
    unit screws are built in Pluecker coordinates, and the impulse magnitude
    follows from Newton restitution projected on the normal screw:

        magnitude = -(1 + e) <twist, s_n> / <M^-1(s_n), s_n>

    The friction cross-coupling term is dropped from the denominator
    (decoupled assumption), exactly as in the classical solution. The
    tangent screw is built on the direction opposing the slide, so the
    friction line of action dissipates.
    """
    n_B = quat.rotate(quat.conjugate(attitude), contact.normal_world)
    s_n = screw_from_contact(contact.point, n_B)
    v_n = dual_dot(twist, s_n)
    _check_approaching(v_n, contact.resting_threshold)

    rho = dual_dot(inertia.apply_inverse(s_n), s_n)
    magnitude = -(1.0 + contact.restitution) * v_n / rho

    slide = tangent_direction(twist, contact.point, n_B, contact.slip_threshold)
    mu = contact.friction if slide is not None else 0.0
    s_t = screw_from_contact(contact.point, -slide) if slide is not None else None

    wrench = s_n.scaled(magnitude)
    impulse_body = magnitude * n_B
    if s_t is not None:
        wrench = wrench + s_t.scaled(mu * magnitude)
        impulse_body = impulse_body + mu * magnitude * s_t.dual
    return ImpulseResult(
        magnitude=magnitude,
        wrench=wrench,
        effective_inverse_mass=rho,
        impulse_body=impulse_body,
        impulse_world=quat.rotate(attitude, impulse_body),
        normal_screw=s_n,
        tangent_screw=s_t,
        normal_speed=v_n,
        restitution=contact.restitution,
        friction=mu,
    )


def impulse_matrix(state: ClassicState, contact: ContactSpec, bp: BodyParams) -> ImpulseResult:
    """Classical impulse-momentum solution in the world frame.

    Effective inverse mass:
        rho = 1/m + n^T R [ J^-1 (r_c x (R^T n)) x r_c ]
    Impulse vector:
        lambda = -(1 + e) (v_c . n) / rho * (n + mu t)
    with the contact-point velocity v_c = v + R (w x r_c) and t the unit
    tangential direction opposing the slide.
    """
    n = np.asarray(contact.normal_world, dtype=float)
    rot = quat.rotation_matrix(state.attitude)
    r_c = np.asarray(contact.point, dtype=float)

    n_B = rot.T @ n
    v_c = state.velocity + rot @ cross(state.angular_rate, r_c)
    v_n = float(np.dot(v_c, n))
    _check_approaching(v_n, contact.resting_threshold)

    rho = 1.0 / bp.mass + float(
        np.dot(n, rot @ cross(bp.inertia_inv @ cross(r_c, n_B), r_c))
    )

    tangential = v_c - v_n * n
    slip_speed = float(np.linalg.norm(tangential))
    if slip_speed < contact.slip_threshold:
        t = None
        mu = 0.0
    else:
        t = -tangential / slip_speed
        mu = contact.friction

    magnitude = -(1.0 + contact.restitution) * v_n / rho
    direction = n + mu * t if t is not None else n
    impulse_world = magnitude * direction
    impulse_body = rot.T @ impulse_world
    n_B_screw = screw_from_contact(r_c, n_B)
    t_B_screw = screw_from_contact(r_c, rot.T @ t) if t is not None else None
    return ImpulseResult(
        magnitude=magnitude,
        wrench=DualVector(cross(r_c, impulse_body), impulse_body),
        effective_inverse_mass=rho,
        impulse_body=impulse_body,
        impulse_world=impulse_world,
        normal_screw=n_B_screw,
        tangent_screw=t_B_screw,
        normal_speed=v_n,
        restitution=contact.restitution,
        friction=mu,
    )


def impulse_coupled(
    twist: DualVector,
    contact: ContactSpec,
    attitude: np.ndarray,
    inertia: DualInertia,
) -> ImpulseResult:
    """Impulse magnitude *with* the friction cross-coupling term retained:

        magnitude = -(1 + e) <twist, s_n> / <M^-1(s_n + mu_eff s_t), s_n>

    where mu_eff = min(mu, sticking limit). The sticking cap keeps the
    one-shot friction impulse from reversing the slide, which is where the
    closed form leaves its validity domain; with the cap in place the jump
    provably never increases kinetic energy (the restitution constraint and
    the no-reversal constraint bound the energy change by
    -(1/2) magnitude |v_n| (1 - e) <= 0). A friction channel the cap cannot
    make consistent degenerates to mu_eff = 0.

    Equals :func:`impulse_dq` when friction or the coupling vanishes (and
    the cap is inactive). Used as the disturbance-realistic contact model
    in Monte Carlo studies.

    Raises ValueError when the coupled denominator is not positive
    (pathological friction/geometry); callers fall back to the decoupled
    model.
    """
    n_B = quat.rotate(quat.conjugate(attitude), contact.normal_world)
    s_n = screw_from_contact(contact.point, n_B)
    v_n = dual_dot(twist, s_n)
    _check_approaching(v_n, contact.resting_threshold)

    rho_n = dual_dot(inertia.apply_inverse(s_n), s_n)
    slide = tangent_direction(twist, contact.point, n_B, contact.slip_threshold)
    if slide is None:
        mu_eff = 0.0
        s_t = None
        denom = rho_n
    else:
        s_slide = screw_from_contact(contact.point, slide)
        s_t = -s_slide
        slip = dual_dot(twist, s_slide)
        c = dual_dot(inertia.apply_inverse(s_t), s_n)
        rho_s = dual_dot(inertia.apply_inverse(s_slide), s_slide)
        # sticking friction level: the mu at which the post-impact slide is
        # exactly arrested, accounting for the coupled magnitude
        push = -(1.0 + contact.restitution) * v_n  # > 0 for approaching contacts
        stick_num = slip * rho_n - push * c
        stick_den = push * rho_s - slip * c
        if stick_num <= 0.0:
            # the normal impulse alone already arrests the slide; any
            # friction would reverse it, so the channel degenerates
            mu_eff = 0.0
            s_t = None
        elif stick_den <= 0.0:
            mu_eff = contact.friction  # no friction level can reverse the slide
        else:
            mu_eff = min(contact.friction, stick_num / stick_den)
        denom = rho_n + mu_eff * c if s_t is not None else rho_n
    if denom <= 0.0:
        raise ValueError(
            f"coupled impulse denominator {denom:.3e} is not positive; "
            "fall back to the decoupled model"
        )
    magnitude = -(1.0 + contact.restitution) * v_n / denom

    direction = s_n if s_t is None else s_n + s_t.scaled(mu_eff)
    wrench = direction.scaled(magnitude)
    impulse_body = magnitude * (n_B if s_t is None else n_B + mu_eff * s_t.dual)
    return ImpulseResult(
        magnitude=magnitude,
        wrench=wrench,
        effective_inverse_mass=denom,
        impulse_body=impulse_body,
        impulse_world=quat.rotate(attitude, impulse_body),
        normal_screw=s_n,
        tangent_screw=s_t,
        normal_speed=v_n,
        restitution=contact.restitution,
        friction=mu_eff,
    )


def reset_dq(twist: DualVector, imp: ImpulseResult, inertia: DualInertia) -> DualVector:
    """Post-impact twist: twist + M^-1(wrench). The pose is untouched
    (the configuration is continuous across a rigid impact)."""
    twist_plus = twist + inertia.apply_inverse(imp.wrench)
    if imp.tangent_screw is not None and imp.friction > 0.0:
        _warn_on_slip_reversal(twist_plus, imp.tangent_screw)
    return twist_plus


def reset_matrix(
    state: ClassicState, imp: ImpulseResult, bp: BodyParams
) -> tuple[np.ndarray, np.ndarray]:
    """Classical post-impact velocities:

        v+ = v + lambda / m
        w+ = w + J^-1 (r_c x (R^T lambda))

    The parenthesized moment is exactly the real part of the impulse
    wrench, which both impulse formulations populate.
    """
    v_plus = state.velocity + imp.impulse_world / bp.mass
    w_plus = state.angular_rate + bp.inertia_inv @ imp.wrench.real
    return v_plus, w_plus


def kinetic_energy_change(
    twist: DualVector, imp: ImpulseResult, inertia: DualInertia
) -> float:
    """Exact kinetic-energy jump produced by applying the impulse wrench:

        <twist, W> + (1/2) <W, M^-1(W)>
    """
    return dual_dot(twist, imp.wrench) + 0.5 * dual_dot(
        imp.wrench, inertia.apply_inverse(imp.wrench)
    )
