"""Hybrid-system executor: flow integration, guard detection on the signed
distance to the contact surface, event localization, jump application, Zeno
protection and resting contact.

The executor alternates fixed-step RK4 flow with instantaneous twist resets.
The control wrench is evaluated at every integration stage (the closed loop
is integrated, not a zero-order-hold approximation); alongside the state,
the dissipated energy integral of the damping term is co-integrated with
the same stages so energy certificates can be checked to integrator
precision.

Impacts fire only for approaching contacts whose normal closing speed
exceeds the resting threshold; slower touchdowns transition to a resting
mode where the normal velocity is clamped and a unilateral projection holds
the body outside the surface. This approach-speed refinement (and the
resting mode itself) exist so episodes can terminate at rest instead of
chattering.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .controller import JumpCertificate
from .dualquat import (
    DualQuaternion,
    DualVector,
    dq_normalized,
    dq_to_pose,
    dual_dot,
    dual_matrix_apply,
    screw_from_contact,
    unit_violation,
)
from .dynamics import (
    BodyParams,
    DualInertia,
    DualState,
    dual_derivative,
    dual_to_classic,
)
from . import quat
from .impact import (
    ContactSpec,
    ImpulseResult,
    impulse_coupled,
    impulse_dq,
    impulse_matrix,
    reset_dq,
    reset_matrix,
)

logger = logging.getLogger(__name__)

IMPULSE_MODELS = ("decoupled", "matrix", "coupled")


@dataclass
class WorldGeometry:
    """A contact plane plus the body-frame contact hull.

    The plane normal points into free space; the signed distance of a pose
    is the minimum over hull points of n . (p + q ⊙ r_i) - offset.
    """

    normal: np.ndarray
    offset: float
    points: list[np.ndarray]

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        if abs(float(np.linalg.norm(self.normal)) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        self.points = [np.asarray(p, dtype=float) for p in self.points]
        if not self.points:
            raise ValueError("geometry needs at least one contact point")

    def signed_distance(self, pose: DualQuaternion) -> tuple[float, int]:
        q, p = dq_to_pose(pose)
        best = np.inf
        best_idx = 0
        for i, r in enumerate(self.points):
            phi = float(np.dot(self.normal, p + quat.rotate(q, r))) - self.offset
            if phi < best:
                best = phi
                best_idx = i
        return best, best_idx


def quad_hull(arm_length: float, arm_drop: float, leg_drop: float) -> list[np.ndarray]:
    """Quadrotor contact hull: four arm tips plus a point under the CoM.

    The body vertical axis points down, so drops are positive z offsets.
    """
    L = arm_length
    return [
        np.array([L, L, arm_drop]),
        np.array([-L, L, arm_drop]),
        np.array([-L, -L, arm_drop]),
        np.array([L, -L, arm_drop]),
        np.array([0.0, 0.0, leg_drop]),
    ]


@dataclass
class HybridState:
    """Hybrid-time state: the flowing dual state, continuous time t, jump
    count, resting-mode flag, and the co-integrated dissipation integral."""

    state: DualState
    t: float = 0.0
    jumps: int = 0
    resting: bool = False
    dissipated: float = 0.0


@dataclass(frozen=True, eq=False)
class JumpRecord:
    time: float
    jump_index: int
    point_index: int
    model: str
    impulse: ImpulseResult
    certificate: JumpCertificate | None


@dataclass
class EpisodeSetup:
    """Everything one episode needs besides the controller."""

    body: BodyParams
    geometry: WorldGeometry
    restitution: float
    friction: float
    initial: DualState
    dt: float = 1e-3
    t_end: float = 8.0
    slip_threshold: float = 1e-8
    resting_threshold: float = 1e-6
    event_tolerance: float = 1e-9
    max_bisect: int = 60
    max_jumps_per_window: int = 20
    jump_window: float = 0.1
    blowup_speed: float = 1e3
    impulse_model: str = "decoupled"
    random_contact_point: bool = False

    def __post_init__(self):
        if self.impulse_model not in IMPULSE_MODELS:
            raise ValueError(f"impulse model must be one of {IMPULSE_MODELS}")
        if not 0.0 <= self.restitution < 1.0:
            raise ValueError("episode restitution must lie in [0, 1)")

    def contact_at(self, point: np.ndarray) -> ContactSpec:
        return ContactSpec(
            point=point,
            normal_world=self.geometry.normal,
            restitution=self.restitution,
            friction=self.friction,
            slip_threshold=self.slip_threshold,
            resting_threshold=self.resting_threshold,
        )


@dataclass
class EpisodeLog:
    """Per-step time series plus jump records. Strictly increasing t within
    each jump count; the `event` column marks impacts, setpoint hand-backs,
    resting transitions and failures."""

    time: list[float] = field(default_factory=list)
    jump_count: list[int] = field(default_factory=list)
    position: list[np.ndarray] = field(default_factory=list)
    attitude: list[np.ndarray] = field(default_factory=list)
    angular_rate: list[np.ndarray] = field(default_factory=list)
    linear_velocity_body: list[np.ndarray] = field(default_factory=list)
    lyapunov: list[float] = field(default_factory=list)
    lyapunov_potential: list[float] = field(default_factory=list)
    lyapunov_kinetic: list[float] = field(default_factory=list)
    kinetic_energy: list[float] = field(default_factory=list)
    dissipated: list[float] = field(default_factory=list)
    signed_distance: list[float] = field(default_factory=list)
    pose_drift: list[float] = field(default_factory=list)
    wrench: list[DualVector] = field(default_factory=list)
    event: list[str] = field(default_factory=list)
    jumps: list[JumpRecord] = field(default_factory=list)
    failed: bool = False
    fail_reason: str = ""

    def append(self, x: HybridState, sample, wrench: DualVector, phi: float, drift: float, event: str):
        q, p = dq_to_pose(x.state.pose)
        self.time.append(x.t)
        self.jump_count.append(x.jumps)
        self.position.append(p)
        self.attitude.append(q)
        self.angular_rate.append(x.state.twist.real)
        self.linear_velocity_body.append(x.state.twist.dual)
        self.lyapunov.append(sample.total)
        self.lyapunov_potential.append(sample.potential)
        self.lyapunov_kinetic.append(sample.kinetic)
        self.kinetic_energy.append(sample.kinetic)
        self.dissipated.append(x.dissipated)
        self.signed_distance.append(phi)
        self.pose_drift.append(drift)
        self.wrench.append(wrench)
        self.event.append(event)

    def __len__(self) -> int:
        return len(self.time)


def _pack(x: HybridState) -> np.ndarray:
    y = np.empty(15)
    y[0:4] = x.state.pose.real
    y[4:8] = x.state.pose.dual
    y[8:11] = x.state.twist.real
    y[11:14] = x.state.twist.dual
    y[14] = x.dissipated
    return y


def _flow_state(y: np.ndarray) -> DualState:
    pose = dq_normalized(DualQuaternion(y[0:4], y[4:8]))
    return DualState(pose, DualVector(y[8:11], y[11:14]))


def _derivative(y: np.ndarray, t: float, controller, bp: BodyParams, inertia: DualInertia) -> np.ndarray:
    state = _flow_state(y)
    wrench = controller.wrench(state, t)
    pose_dot, twist_dot = dual_derivative(state, wrench, bp, inertia)
    out = np.empty(15)
    out[0:8] = pose_dot
    out[8:11] = twist_dot.real
    out[11:14] = twist_dot.dual
    out[14] = dual_dot(state.twist, dual_matrix_apply(controller.damping, state.twist))
    return out


def _rk4(y: np.ndarray, t: float, dt: float, controller, bp, inertia) -> np.ndarray:
    k1 = _derivative(y, t, controller, bp, inertia)
    k2 = _derivative(y + 0.5 * dt * k1, t + 0.5 * dt, controller, bp, inertia)
    k3 = _derivative(y + 0.5 * dt * k2, t + 0.5 * dt, controller, bp, inertia)
    k4 = _derivative(y + dt * k3, t + dt, controller, bp, inertia)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_flow(
    x: HybridState,
    controller,
    bp: BodyParams,
    inertia: DualInertia,
    dt: float,
) -> tuple[HybridState, float]:
    """One closed-loop RK4 step. Returns the new state and the unit-pose
    drift measured before post-step renormalization."""
    y = _rk4(_pack(x), x.t, dt, controller, bp, inertia)
    raw = DualQuaternion(y[0:4], y[4:8])
    drift = unit_violation(raw)
    state = DualState(dq_normalized(raw), DualVector(y[8:11], y[11:14]))
    return (
        HybridState(state, x.t + dt, x.jumps, x.resting, float(y[14])),
        drift,
    )


def locate_event(
    x_before: HybridState,
    controller,
    bp: BodyParams,
    inertia: DualInertia,
    geom: WorldGeometry,
    dt: float,
    tol: float = 1e-9,
    max_iter: int = 60,
) -> tuple[float, HybridState]:
    """Bisect the guard crossing inside one flow step.

    The sub-step flow is re-integrated from x_before for each probe, so the
    located state lies on the same trajectory the executor follows. Raises
    when the step does not bracket a crossing. A start already on or past
    the guard is returned unchanged.
    """
    phi0, _ = geom.signed_distance(x_before.state.pose)
    if phi0 <= 0.0:
        return x_before.t, x_before

    x_hi, _ = step_flow(x_before, controller, bp, inertia, dt)
    phi_hi, _ = geom.signed_distance(x_hi.state.pose)
    if phi_hi > 0.0:
        raise ValueError("locate_event needs a sign change of the signed distance across the step")

    lo, hi = 0.0, dt
    x_star = x_hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        x_mid, _ = step_flow(x_before, controller, bp, inertia, mid)
        phi_mid, _ = geom.signed_distance(x_mid.state.pose)
        if abs(phi_mid) < tol:
            return x_mid.t, x_mid
        if phi_mid > 0.0:
            lo = mid
        else:
            hi = mid
            x_star = x_mid
    return x_star.t, x_star


def _normal_speed(twist: DualVector, point: np.ndarray, geom: WorldGeometry, attitude: np.ndarray) -> float:
    n_B = quat.rotate(quat.conjugate(attitude), geom.normal)
    return dual_dot(twist, screw_from_contact(point, n_B))


def _resolve_impulse(
    x: HybridState,
    point: np.ndarray,
    setup: EpisodeSetup,
) -> tuple[ImpulseResult, DualVector, str]:
    """Resolve one impulse at the given hull point with the selected model,
    returning the impulse, the post-impact twist and the model actually used."""
    contact = setup.contact_at(point)
    q, _ = dq_to_pose(x.state.pose)
    inertia = DualInertia.from_body(setup.body)
    model = setup.impulse_model
    if model == "matrix":
        classic = dual_to_classic(x.state)
        imp = impulse_matrix(classic, contact, setup.body)
        v_plus, w_plus = reset_matrix(classic, imp, setup.body)
        twist_plus = DualVector(w_plus, quat.rotate(quat.conjugate(q), v_plus))
        return imp, twist_plus, model
    if model == "coupled":
        try:
            imp = impulse_coupled(x.state.twist, contact, q, inertia)
        except ValueError as err:
            logger.warning("coupled impulse failed (%s); falling back to decoupled", err)
            imp = impulse_dq(x.state.twist, contact, q, inertia)
            model = "decoupled"
        return imp, reset_dq(x.state.twist, imp, inertia), model
    imp = impulse_dq(x.state.twist, contact, q, inertia)
    return imp, reset_dq(x.state.twist, imp, inertia), model


def apply_jump(
    x_star: HybridState,
    setup: EpisodeSetup,
    controller,
    rng: np.random.Generator | None = None,
) -> tuple[HybridState, list[JumpRecord], bool]:
    """Resolve all impacting hull points at the located event state.

    The closest point resolves first; with random contact-point selection
    enabled, the first impulse instead resolves at an rng-drawn hull point
    (when that point is approaching), which injects cross-coupled impact
    torques as an unmodeled disturbance. Remaining points at the surface
    still approaching resolve sequentially in closest-first order with a
    logged warning. Returns the post-jump state, the jump records, and
    whether the contact came to rest (normal speed below the resting
    threshold)."""
    geom = setup.geometry
    q, _ = dq_to_pose(x_star.state.pose)
    x = x_star
    records: list[JumpRecord] = []

    phis = []
    for i, r in enumerate(geom.points):
        phi_i = float(
            np.dot(geom.normal, dq_to_pose(x.state.pose)[1] + quat.rotate(q, r))
        ) - geom.offset
        phis.append((phi_i, i))
    phis.sort()
    candidates = [i for phi_i, i in phis if phi_i <= max(10 * setup.event_tolerance, 1e-8)]
    if not candidates:
        candidates = [phis[0][1]]

    order = list(candidates)
    if setup.random_contact_point and rng is not None:
        pick = int(rng.integers(0, len(geom.points)))
        v_pick = _normal_speed(x.state.twist, geom.points[pick], geom, q)
        if v_pick < -setup.resting_threshold:
            order = [pick] + [i for i in order if i != pick]

    resolved = 0
    for idx in order:
        point = geom.points[idx]
        v_n = _normal_speed(x.state.twist, point, geom, q)
        if v_n >= -setup.resting_threshold:
            continue
        imp, twist_plus, model = _resolve_impulse(x, point, setup)
        state_plus = DualState(x.state.pose, twist_plus)
        cert = controller.on_impact(x.t, x.state, x.state.twist, twist_plus, imp)
        x = HybridState(state_plus, x.t, x.jumps + 1, False, x.dissipated)
        records.append(
            JumpRecord(x.t, x.jumps, idx, model, imp, cert)
        )
        resolved += 1
    if resolved > 1:
        logger.warning(
            "%d simultaneous contact points resolved sequentially at t=%.6f", resolved, x.t
        )

    argmin_idx = phis[0][1]
    v_n_post = _normal_speed(x.state.twist, geom.points[argmin_idx], geom, q)
    resting = v_n_post < setup.resting_threshold
    return x, records, resting


def _clamp_normal_velocity(x: HybridState, geom: WorldGeometry, point_idx: int) -> HybridState:
    q, _ = dq_to_pose(x.state.pose)
    n_B = quat.rotate(quat.conjugate(q), geom.normal)
    point = geom.points[point_idx]
    v_n = dual_dot(x.state.twist, screw_from_contact(point, n_B))
    twist = DualVector(x.state.twist.real, x.state.twist.dual - v_n * n_B)
    return HybridState(DualState(x.state.pose, twist), x.t, x.jumps, True, x.dissipated)


def _project_to_surface(x: HybridState, geom: WorldGeometry) -> HybridState:
    phi, idx = geom.signed_distance(x.state.pose)
    if phi >= 0.0:
        return x
    q, p = dq_to_pose(x.state.pose)
    from .dualquat import dq_from_pose

    pose = dq_from_pose(q, p - phi * geom.normal)
    x_proj = HybridState(DualState(pose, x.state.twist), x.t, x.jumps, True, x.dissipated)
    v_n = _normal_speed(x_proj.state.twist, geom.points[idx], geom, q)
    if v_n < 0.0:
        x_proj = _clamp_normal_velocity(x_proj, geom, idx)
    return x_proj


def run_episode(
    setup: EpisodeSetup,
    controller,
    rng: np.random.Generator | None = None,
) -> EpisodeLog:
    """Execute one hybrid episode to t_end.

    Flow steps alternate with guard detection; crossings are localized by
    bisection and resolved through the reset map; sub-resolution hops and
    jump bursts (Zeno protection) transition to resting contact. Integrator
    blow-up marks the episode failed instead of raising."""
    bp = setup.body
    inertia = DualInertia.from_body(bp)
    geom = setup.geometry
    log = EpisodeLog()
    x = HybridState(setup.initial, 0.0, 0, False, 0.0)
    recent_jumps: list[float] = []
    pending_event = ""

    def record(xs: HybridState, event: str, drift: float = 0.0):
        phi, _ = geom.signed_distance(xs.state.pose)
        sample = controller.sample(xs.state, xs.t)
        wrench = controller.wrench(xs.state, xs.t)
        log.append(xs, sample, wrench, phi, drift, event)

    record(x, "")
    while x.t < setup.t_end - 1e-12:
        dt = min(setup.dt, setup.t_end - x.t)
        if controller.advance(x.t):
            pending_event = "handback"

        if float(np.sqrt(dual_dot(x.state.twist, x.state.twist))) > setup.blowup_speed:
            log.failed = True
            log.fail_reason = "twist magnitude exceeded blow-up bound"
            record(x, "fail")
            break

        if x.resting:
            x_next, drift = step_flow(x, controller, bp, inertia, dt)
            phi_next, idx_next = geom.signed_distance(x_next.state.pose)
            if phi_next > setup.event_tolerance:
                v_n = _normal_speed(
                    x_next.state.twist, geom.points[idx_next], geom, x_next.state.pose.real
                )
                if v_n > setup.resting_threshold:
                    # lifting off: leave resting mode
                    x = HybridState(x_next.state, x_next.t, x_next.jumps, False, x_next.dissipated)
                    record(x, pending_event)
                    pending_event = ""
                    continue
            x = _project_to_surface(
                HybridState(x_next.state, x_next.t, x_next.jumps, True, x_next.dissipated), geom
            )
            record(x, pending_event, drift)
            pending_event = ""
            continue

        phi_now, idx_now = geom.signed_distance(x.state.pose)
        x_next, drift = step_flow(x, controller, bp, inertia, dt)
        phi_next, _ = geom.signed_distance(x_next.state.pose)

        if phi_next <= 0.0:
            if phi_now <= setup.event_tolerance:
                # already on the guard: approaching -> jump now, otherwise
                # the hop is below step resolution -> resting transition
                v_n = _normal_speed(x.state.twist, geom.points[idx_now], geom, x.state.pose.real)
                if v_n < -setup.resting_threshold:
                    t_star, x_star = x.t, x
                else:
                    # sub-resolution hop or stalled contact: clamp and mark
                    # the next logged sample (same hybrid time, no new row)
                    x = _clamp_normal_velocity(x, geom, idx_now)
                    pending_event = "resting"
                    continue
            else:
                t_star, x_star = locate_event(
                    x, controller, bp, inertia, geom, dt,
                    setup.event_tolerance, setup.max_bisect,
                )
            record(x_star, "", 0.0)
            x_plus, records, resting = apply_jump(x_star, setup, controller, rng)
            log.jumps.extend(records)
            recent_jumps = [tj for tj in recent_jumps if tj > x_plus.t - setup.jump_window]
            recent_jumps.extend([x_plus.t] * len(records))
            if len(recent_jumps) > setup.max_jumps_per_window:
                logger.warning("Zeno guard tripped at t=%.6f; entering resting contact", x_plus.t)
                resting = True
            if resting:
                phi_plus, idx_plus = geom.signed_distance(x_plus.state.pose)
                x_plus = _clamp_normal_velocity(x_plus, geom, idx_plus)
            record(x_plus, "impact")
            x = x_plus
            continue

        x = x_next
        record(x, pending_event, drift)
        pending_event = ""

    return log
