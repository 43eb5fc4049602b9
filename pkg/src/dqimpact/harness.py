"""Experiment orchestration: the idealized-impact validation scenario, the
Monte Carlo recovery-consistency study, metric computation, the randomized
matrix/dual equivalence suite, and CSV/SVG emission.

Episodes place the vehicle just above the contact plane, descending at the
configured impact speed with a tilted initial attitude, tracking a level
hover reference at the initial horizontal position. Trial-to-trial
variability in the Monte Carlo study comes from the random initial tilt and
the random contact-point draw (the disturbance model); the lateral position
jitter exercises translation invariance of the whole pipeline.

All output files are written atomically (temp file + rename) and floats are
emitted with 17 significant digits, so a fixed seed reproduces output files
byte for byte.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .controller import (
    BaselineController,
    ControllerGains,
    DqRecoveryController,
    NullController,
)
from .dualquat import DualQuaternion, DualVector, dq_from_pose, dq_to_pose
from .dynamics import (
    BodyParams,
    ClassicState,
    DualInertia,
    DualState,
    classic_to_dual,
)
from .hybridsim import EpisodeLog, EpisodeSetup, WorldGeometry, run_episode
from .impact import ContactSpec, impulse_dq, impulse_matrix, reset_dq, reset_matrix

CONTROLLERS = ("dq", "baseline", "none")

METRIC_LABELS = (
    ("peak_error", "Peak L2 error (m)"),
    ("rmse_error", "L2 RMSE (m)"),
    ("peak_kinetic_energy", "Peak Ek (J)"),
    ("settling_time", "Settling time (s)"),
)


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description (see config module for the
    file format that produces it)."""

    body: BodyParams
    geometry: WorldGeometry
    gains: ControllerGains
    restitution: float = 0.7
    friction: float = 0.3
    slip_threshold: float = 1e-8
    resting_threshold: float = 1e-6
    controller_type: str = "dq"
    impulse_model: str = "decoupled"
    dt: float = 1e-3
    t_end: float = 8.0
    event_tolerance: float = 1e-9
    max_bisect: int = 60
    max_jumps_per_window: int = 20
    jump_window: float = 0.1
    blowup_speed: float = 1e3
    scenario: str = "idealized-impact"
    trials: int = 20
    seed: int = 7
    jitter_xy: float = 0.2
    tilt_deg: float = 5.0
    tilt_max_deg: float = 12.0
    impact_speed: float = 2.0
    clearance: float = 0.03
    settle_threshold: float = 0.05
    settle_dwell: float = 1.0
    random_contact_point: bool = False


@dataclass
class Metrics:
    """Post-impact recovery metrics over the window from the first impact
    to the end of the episode."""

    peak_error: float
    rmse_error: float
    peak_kinetic_energy: float
    settling_time: float
    failed: bool


@dataclass
class TrialRow:
    trial: int
    controller: str
    metrics: Metrics
    trace_time: np.ndarray = field(default_factory=lambda: np.empty(0))
    trace_error: np.ndarray = field(default_factory=lambda: np.empty(0))
    trace_kinetic: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass
class MonteCarloResult:
    rows: list[TrialRow]
    aggregates: dict  # controller -> metric -> (mean, std)
    improvements: dict  # metric -> percent, (baseline - candidate) / baseline * 100
    controllers: tuple[str, str]
    trials: int
    seed: int


def _tilt_quaternion(axis_xy: np.ndarray, angle_rad: float) -> np.ndarray:
    n = float(np.linalg.norm(axis_xy))
    if n < 1e-12 or angle_rad == 0.0:
        return quat.IDENTITY.copy()
    return quat.exp(angle_rad * axis_xy / n)


def initial_conditions(
    cfg: ExperimentConfig, rng: np.random.Generator | None = None
) -> tuple[DualState, DualQuaternion]:
    """Initial state and nominal hover reference for one episode.

    Without an rng the deterministic validation scenario is produced: tilt
    of tilt_deg about the diagonal horizontal axis, no jitter. With an rng,
    the tilt axis and magnitude and the lateral position are drawn from the
    Monte Carlo distribution. The vehicle starts `clearance` above the
    plane (measured at its lowest hull point) descending at impact_speed;
    the hover reference is the level pose at the same horizontal position
    with the same clearance.
    """
    geom = cfg.geometry
    if rng is None:
        axis = np.array([1.0, 1.0, 0.0])
        angle = math.radians(cfg.tilt_deg)
        jitter = np.zeros(2)
    else:
        heading = rng.uniform(0.0, 2.0 * math.pi)
        axis = np.array([math.cos(heading), math.sin(heading), 0.0])
        angle = math.radians(rng.uniform(0.0, cfg.tilt_max_deg))
        jitter = rng.uniform(-cfg.jitter_xy, cfg.jitter_xy, 2)

    q0 = _tilt_quaternion(axis, angle)

    def place(attitude: np.ndarray) -> np.ndarray:
        # solve for the vertical offset giving the requested clearance
        probe = dq_from_pose(attitude, np.zeros(3))
        phi0, _ = geom.signed_distance(probe)
        shift = cfg.clearance - phi0
        return np.array([jitter[0], jitter[1], 0.0]) + shift * geom.normal

    p0 = place(q0)
    p_ref = place(quat.IDENTITY)
    reference = dq_from_pose(quat.IDENTITY.copy(), p_ref)

    descent = -cfg.impact_speed * geom.normal  # toward the plane
    state = classic_to_dual(
        ClassicState(position=p0, velocity=descent, attitude=q0, angular_rate=np.zeros(3))
    )
    return state, reference


def make_controller(cfg: ExperimentConfig, controller_type: str, reference: DualQuaternion):
    if controller_type == "dq":
        return DqRecoveryController(cfg.gains, cfg.body, reference)
    if controller_type == "baseline":
        return BaselineController(cfg.gains, cfg.body, reference)
    if controller_type == "none":
        return NullController(cfg.body, reference)
    raise ValueError(f"unknown controller type {controller_type!r}")


def build_setup(cfg: ExperimentConfig, initial: DualState) -> EpisodeSetup:
    return EpisodeSetup(
        body=cfg.body,
        geometry=cfg.geometry,
        restitution=cfg.restitution,
        friction=cfg.friction,
        initial=initial,
        dt=cfg.dt,
        t_end=cfg.t_end,
        slip_threshold=cfg.slip_threshold,
        resting_threshold=cfg.resting_threshold,
        event_tolerance=cfg.event_tolerance,
        max_bisect=cfg.max_bisect,
        max_jumps_per_window=cfg.max_jumps_per_window,
        jump_window=cfg.jump_window,
        blowup_speed=cfg.blowup_speed,
        impulse_model=cfg.impulse_model,
        random_contact_point=cfg.random_contact_point,
    )


def run_single(
    cfg: ExperimentConfig,
    controller_type: str | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[EpisodeLog, Metrics, DualQuaternion]:
    """Run one episode and compute its metrics against the hover reference."""
    ctype = controller_type or cfg.controller_type
    initial, reference = initial_conditions(cfg, rng)
    controller = make_controller(cfg, ctype, reference)
    log = run_episode(build_setup(cfg, initial), controller, rng)
    _, p_ref = dq_to_pose(reference)
    metrics = compute_metrics(log, p_ref, cfg.settle_threshold, cfg.settle_dwell)
    return log, metrics, reference


def compute_metrics(
    log: EpisodeLog,
    reference_position: np.ndarray,
    settle_threshold: float = 0.05,
    settle_dwell: float = 1.0,
    window_start: float | None = None,
) -> Metrics:
    """Metrics over the post-impact window.

    The window runs from the first impact (or `window_start`) to the end of
    the log. Settling time is the first instant after which the position
    error stays below the threshold for at least the dwell time; episodes
    that never settle report the full window length.
    """
    if len(log) == 0:
        raise ValueError("cannot compute metrics on an empty log")
    t = np.asarray(log.time)
    if window_start is None:
        window_start = log.jumps[0].time if log.jumps else t[0]
    mask = t >= window_start
    if not np.any(mask):
        raise ValueError("metrics window contains no samples")

    pos = np.asarray(log.position)[mask]
    err = np.linalg.norm(pos - reference_position[None, :], axis=1)
    ek = np.asarray(log.kinetic_energy)[mask]
    tw = t[mask]

    peak = float(err.max())
    rmse = float(np.sqrt(np.mean(err**2)))
    peak_ek = float(ek.max())

    window_len = float(tw[-1] - tw[0])
    settling = window_len
    below = err < settle_threshold
    i = 0
    n = len(tw)
    while i < n:
        if below[i]:
            j = i
            while j + 1 < n and below[j + 1]:
                j += 1
            if (tw[j] - tw[i] >= settle_dwell - 1e-9) or (j == n - 1):
                # dwell satisfied, or below-threshold through the end of log
                if tw[j] - tw[i] >= settle_dwell - 1e-9:
                    settling = float(tw[i] - tw[0])
                    break
            i = j + 1
        else:
            i += 1

    return Metrics(
        peak_error=peak,
        rmse_error=rmse,
        peak_kinetic_energy=peak_ek,
        settling_time=settling,
        failed=log.failed,
    )


def run_monte_carlo(
    cfg: ExperimentConfig,
    controllers: tuple[str, str] = ("baseline", "dq"),
    keep_traces: bool = True,
) -> MonteCarloResult:
    """Seeded Monte Carlo over initial conditions; each trial runs every
    controller from an identical rng stream and impulse model.

    Aggregates report mean and standard deviation per controller, and the
    pairwise improvement of the second controller over the first as
    (first - second) / first * 100 per metric.
    """
    rows: list[TrialRow] = []
    for trial in range(cfg.trials):
        for ctype in controllers:
            rng = np.random.default_rng([cfg.seed, trial])
            log, metrics, reference = run_single(cfg, ctype, rng)
            row = TrialRow(trial, ctype, metrics)
            if keep_traces and log.jumps:
                t = np.asarray(log.time)
                t_c = log.jumps[0].time
                mask = t >= t_c
                _, p_ref = dq_to_pose(reference)
                err = np.linalg.norm(
                    np.asarray(log.position)[mask] - p_ref[None, :], axis=1
                )
                sl = slice(None, None, 10)  # downsampled for plotting
                row.trace_time = (t[mask] - t_c)[sl]
                row.trace_error = err[sl]
                row.trace_kinetic = np.asarray(log.kinetic_energy)[mask][sl]
            rows.append(row)

    aggregates: dict = {}
    for ctype in controllers:
        ok = [r.metrics for r in rows if r.controller == ctype and not r.metrics.failed]
        agg = {}
        for key, _label in METRIC_LABELS:
            vals = np.array([getattr(m, key) for m in ok]) if ok else np.array([np.nan])
            agg[key] = (float(vals.mean()), float(vals.std()))
        agg["failed"] = sum(
            1 for r in rows if r.controller == ctype and r.metrics.failed
        )
        aggregates[ctype] = agg

    first, second = controllers
    improvements = {}
    for key, _label in METRIC_LABELS:
        base = aggregates[first][key][0]
        cand = aggregates[second][key][0]
        improvements[key] = 100.0 * (base - cand) / base if base != 0.0 else 0.0

    return MonteCarloResult(
        rows=rows,
        aggregates=aggregates,
        improvements=improvements,
        controllers=controllers,
        trials=cfg.trials,
        seed=cfg.seed,
    )


def summary_table(result: MonteCarloResult) -> str:
    """Human-readable aggregate table in the recovery-metrics format.

    The improvement column is direction-only evidence: absolute magnitudes
    depend on the contact disturbance model and are not comparable across
    simulators.
    """
    first, second = result.controllers
    lines = [
        f"Monte Carlo recovery metrics ({result.trials} trials, seed {result.seed})",
        f"{'Metric':<22}{first + ' mean+-std':>26}{second + ' mean+-std':>26}{'Improv.':>10}",
    ]
    for key, label in METRIC_LABELS:
        b_mean, b_std = result.aggregates[first][key]
        d_mean, d_std = result.aggregates[second][key]
        imp = result.improvements[key]
        lines.append(
            f"{label:<22}{b_mean:>16.4f} +- {b_std:<7.4f}"
            f"{d_mean:>16.4f} +- {d_std:<7.4f}{imp:>9.1f}%"
        )
    fails = {c: result.aggregates[c]["failed"] for c in result.controllers}
    lines.append(f"failed episodes: {fails}")
    lines.append(
        "note: improvement percentages are direction-only evidence under the "
        "configured contact disturbance model; absolute magnitudes are not "
        "comparable across contact solvers."
    )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# randomized matrix <-> dual-quaternion equivalence suite


def run_equivalence(
    samples: int = 10_000, seed: int = 0, inject_fault: bool = False
) -> dict:
    """Randomized runtime check that the dual and matrix reset maps agree.

    Draws random states, inertias and contacts (restitution in [0, 1),
    friction in [0, 1]) and reports the maximum relative deviations of the
    effective inverse mass, the impulse magnitude, and the world-frame
    velocity jumps. `inject_fault` scales the inertia seen by the matrix
    path by (1 + 1e-6), which a healthy gate must detect.
    """
    if samples <= 0:
        raise ValueError("sample count must be positive")
    rng = np.random.default_rng(seed)
    out = {"rho": 0.0, "magnitude": 0.0, "delta_v": 0.0, "delta_w": 0.0, "samples": samples}

    def rel(a: float, b: float) -> float:
        return abs(a - b) / max(abs(b), 1e-9)

    def rel_vec(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm(a - b)) / max(float(np.linalg.norm(b)), 1e-9)

    # the random draws intentionally include slip-heavy impacts; silence the
    # per-impact slip-reversal warning for the duration of the stress loop
    impact_logger = logging.getLogger("dqimpact.impact")
    previous_level = impact_logger.level
    impact_logger.setLevel(logging.ERROR)
    try:
        _equivalence_loop(samples, rng, out, rel, rel_vec, inject_fault)
    finally:
        impact_logger.setLevel(previous_level)
    return out


def _equivalence_loop(samples, rng, out, rel, rel_vec, inject_fault):
    n_done = 0
    while n_done < samples:
        mass = rng.uniform(0.3, 3.0)
        a = rng.normal(size=(3, 3))
        inertia = a @ a.T * 0.02 + np.eye(3) * rng.uniform(0.005, 0.05)
        q = quat.normalize(rng.normal(size=4))
        twist = DualVector(rng.normal(0, 2.0, 3), rng.normal(0, 2.0, 3))
        r_c = rng.uniform(-0.3, 0.3, 3)
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        e = rng.uniform(0.0, 1.0 - 1e-9)
        mu = rng.uniform(0.0, 1.0)
        contact = ContactSpec(r_c, normal, e, mu)

        inertia_dq = DualInertia(inertia, mass)
        try:
            imp_dq = impulse_dq(twist, contact, q, inertia_dq)
        except ValueError:
            continue  # separating or resting draw
        n_done += 1

        bp = BodyParams(mass, inertia * (1.0 + 1e-6) if inject_fault else inertia)
        v_world = quat.rotate(q, twist.dual)
        classic = ClassicState(np.zeros(3), v_world, q, twist.real.copy())
        imp_m = impulse_matrix(classic, contact, bp)

        twist_plus = reset_dq(twist, imp_dq, inertia_dq)
        v_plus, w_plus = reset_matrix(classic, imp_m, bp)

        dv_dq = quat.rotate(q, twist_plus.dual) - v_world
        dw_dq = twist_plus.real - twist.real
        dv_m = v_plus - v_world
        dw_m = w_plus - twist.real

        out["rho"] = max(out["rho"], rel(imp_dq.effective_inverse_mass, imp_m.effective_inverse_mass))
        out["magnitude"] = max(out["magnitude"], rel(imp_dq.magnitude, imp_m.magnitude))
        out["delta_v"] = max(out["delta_v"], rel_vec(dv_dq, dv_m))
        out["delta_w"] = max(out["delta_w"], rel_vec(dw_dq, dw_m))


# ---------------------------------------------------------------------------
# file emission

EPISODE_HEADER = (
    "t,j,px,py,pz,qw,qx,qy,qz,wx,wy,wz,vbx,vby,vbz,V,Vpos,Vkin,Ek,event"
)
METRICS_HEADER = "trial,controller,peak_l2_m,rmse_l2_m,peak_ek_J,settling_s,failed"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename, so interrupted runs never leave a
    truncated file behind."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def episode_csv(log: EpisodeLog) -> str:
    lines = [EPISODE_HEADER]
    for i in range(len(log)):
        p = log.position[i]
        q = log.attitude[i]
        w = log.angular_rate[i]
        vb = log.linear_velocity_body[i]
        vals = [
            log.time[i],
            log.jump_count[i],
            p[0], p[1], p[2],
            q[0], q[1], q[2], q[3],
            w[0], w[1], w[2],
            vb[0], vb[1], vb[2],
            log.lyapunov[i],
            log.lyapunov_potential[i],
            log.lyapunov_kinetic[i],
            log.kinetic_energy[i],
        ]
        cells = [_fmt(v) if not isinstance(v, int) else str(v) for v in vals]
        cells.append(log.event[i])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit_episode_csv(log: EpisodeLog, path: str) -> None:
    atomic_write_text(path, episode_csv(log))


def metrics_csv(rows: list[TrialRow]) -> str:
    lines = [METRICS_HEADER]
    for r in sorted(rows, key=lambda r: (r.trial, r.controller)):
        m = r.metrics
        lines.append(
            ",".join(
                [
                    str(r.trial),
                    r.controller,
                    _fmt(m.peak_error),
                    _fmt(m.rmse_error),
                    _fmt(m.peak_kinetic_energy),
                    _fmt(m.settling_time),
                    "1" if m.failed else "0",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def emit_metrics_csv(rows: list[TrialRow], path: str) -> None:
    atomic_write_text(path, metrics_csv(rows))


def emit_episode_plot(log: EpisodeLog, path: str) -> None:
    """Four-panel SVG: position, attitude, energy components, kinetic energy."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = np.asarray(log.time)
    pos = np.asarray(log.position)
    att = np.asarray(log.attitude)
    fig, axes = plt.subplots(4, 1, figsize=(8, 11), sharex=True)
    for k, lbl in enumerate("xyz"):
        axes[0].plot(t, pos[:, k], label=f"p{lbl}")
    axes[0].set_ylabel("position [m]")
    axes[0].legend(loc="upper right", fontsize=8)
    for k, lbl in enumerate("wxyz"):
        axes[1].plot(t, att[:, k], label=f"q{lbl}")
    axes[1].set_ylabel("attitude quaternion")
    axes[1].legend(loc="upper right", fontsize=8)
    axes[2].plot(t, log.lyapunov, label="V")
    axes[2].plot(t, log.lyapunov_potential, label="Vpos")
    axes[2].plot(t, log.lyapunov_kinetic, label="Vkin")
    axes[2].set_ylabel("energy [J]")
    axes[2].legend(loc="upper right", fontsize=8)
    axes[3].plot(t, log.kinetic_energy, label="Ek")
    axes[3].set_ylabel("kinetic energy [J]")
    axes[3].set_xlabel("t [s]")
    for rec in log.jumps:
        for ax in axes:
            ax.axvline(rec.time, color="k", alpha=0.25, linewidth=0.8)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    fig.savefig(tmp, format="svg")
    plt.close(fig)
    os.replace(tmp, path)


def emit_mc_plot(result: MonteCarloResult, path_error: str, path_kinetic: str) -> None:
    """Monte Carlo overlays of post-impact position error and kinetic energy."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    colors = {result.controllers[0]: "tab:green", result.controllers[1]: "tab:blue"}
    for path, attr, ylabel in (
        (path_error, "trace_error", "L2 position error [m]"),
        (path_kinetic, "trace_kinetic", "kinetic energy [J]"),
    ):
        fig, ax = plt.subplots(figsize=(8, 5))
        seen = set()
        for row in result.rows:
            if row.trace_time.size == 0:
                continue
            label = row.controller if row.controller not in seen else None
            seen.add(row.controller)
            ax.plot(
                row.trace_time,
                getattr(row, attr),
                color=colors.get(row.controller, "gray"),
                alpha=0.35,
                linewidth=0.9,
                label=label,
            )
        ax.set_xlabel("time since impact [s]")
        ax.set_ylabel(ylabel)
        ax.legend(loc="upper right")
        fig.tight_layout()
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        tmp = path + ".tmp"
        fig.savefig(tmp, format="svg")
        plt.close(fig)
        os.replace(tmp, path)
