"""Keyed plain-text configuration: sections, keys, strict validation.

The file format is INI-style (`[section]` headers, `key = value` lines,
`#` comments). Parsing is strict: unknown sections or keys are rejected
with the offending line number, so a typo can never silently
misconfigure an experiment. Every key has a default; an absent file or
section simply keeps the defaults, which reproduce the idealized-impact
validation scenario.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

import numpy as np

from .controller import ControllerGains
from .dualquat import DualMatrix
from .dynamics import BodyParams
from .harness import CONTROLLERS, ExperimentConfig
from .hybridsim import IMPULSE_MODELS, WorldGeometry, quad_hull


@dataclass(frozen=True)
class Key:
    kind: str  # float | int | bool | str | vec3
    default: str
    help: str


SCHEMA: dict[str, dict[str, Key]] = {
    "body": {
        "mass": Key("float", "1.0", "vehicle mass [kg]"),
        "inertia_xx": Key("float", "0.02", "inertia tensor xx [kg m^2]"),
        "inertia_yy": Key("float", "0.02", "inertia tensor yy [kg m^2]"),
        "inertia_zz": Key("float", "0.036", "inertia tensor zz [kg m^2]"),
        "inertia_xy": Key("float", "0.0", "inertia tensor xy [kg m^2]"),
        "inertia_xz": Key("float", "0.0", "inertia tensor xz [kg m^2]"),
        "inertia_yz": Key("float", "0.0", "inertia tensor yz [kg m^2]"),
        "gravity": Key("float", "9.81", "gravity magnitude [m/s^2]; acts along +z (down-positive world axis)"),
    },
    "contact": {
        "restitution": Key("float", "0.7", "restitution coefficient, in [0, 1) for simulation"),
        "friction": Key("float", "0.3", "Coulomb friction coefficient, >= 0"),
        "slip_threshold": Key("float", "1e-8", "tangential speed below which friction is skipped [m/s]"),
        "resting_threshold": Key("float", "1e-6", "normal speed below which contact is resting [m/s]"),
    },
    "geometry": {
        "mode": Key("str", "quad", "contact hull: 'quad' (four arm tips + leg) or 'point' (single CoM point)"),
        "arm_length": Key("float", "0.17", "arm tip offset in x and y [m]"),
        "arm_drop": Key("float", "0.04", "arm tip drop below the CoM [m]"),
        "leg_drop": Key("float", "0.07", "center leg drop below the CoM [m]"),
        "plane_normal": Key("vec3", "0,0,-1", "contact plane normal, pointing into free space"),
        "plane_offset": Key("float", "0.0", "contact plane offset along its normal [m]"),
    },
    "controller": {
        "type": Key("str", "dq", "controller: 'dq', 'baseline' or 'none'"),
        "attitude_stiffness": Key("float", "1.0", "attitude potential gain"),
        "position_stiffness": Key("float", "8.0", "position potential gain [N/m]"),
        "damping_angular": Key("float", "0.15", "angular damping gain (diagonal)"),
        "damping_linear": Key("float", "4.0", "linear damping gain (diagonal) [N s/m]"),
        "admittance_angular": Key("float", "0.10", "angular admittance gain (diagonal) [s]"),
        "admittance_linear": Key("float", "0.15", "linear admittance gain (diagonal) [s]"),
        "energy_split": Key("float", "0.5", "energy budget split between rotation and translation, in (0, 1)"),
        "admittance_cap": Key("float", "10.0", "sentinel admittance bound when a post-impact rate vanishes"),
        "admittance_safety": Key("float", "0.99", "fraction of the admittance bound used when clamping"),
        "hold_time": Key("float", "3.0", "recovery setpoint hold before handing back to hover [s]"),
        "torque_limit": Key("float", "0.0", "box saturation on torque components [N m], 0 disables"),
        "force_limit": Key("float", "0.0", "box saturation on force components [N], 0 disables"),
    },
    "sim": {
        "dt": Key("float", "0.001", "fixed integrator step [s]"),
        "t_end": Key("float", "8.0", "episode duration [s]"),
        "event_tolerance": Key("float", "1e-9", "guard-crossing localization tolerance [m]"),
        "max_bisect": Key("int", "60", "bisection iteration cap for event localization"),
        "max_jumps_per_window": Key("int", "20", "jump count per window that triggers the Zeno guard"),
        "jump_window": Key("float", "0.1", "window for the Zeno jump counter [s]"),
        "blowup_speed": Key("float", "1000.0", "twist magnitude that marks the episode failed"),
    },
    "experiment": {
        "scenario": Key("str", "idealized-impact", "scenario label echoed into outputs"),
        "trials": Key("int", "20", "Monte Carlo trial count"),
        "seed": Key("int", "7", "root seed for all randomness"),
        "jitter_xy": Key("float", "0.2", "lateral initial-position jitter bound [m]"),
        "tilt_deg": Key("float", "5.0", "fixed initial tilt for the deterministic scenario [deg]"),
        "tilt_max_deg": Key("float", "12.0", "random initial tilt bound for Monte Carlo trials [deg]"),
        "impact_speed": Key("float", "2.0", "initial descent speed toward the plane [m/s]"),
        "clearance": Key("float", "0.03", "initial height of the lowest hull point above the plane [m]"),
        "impulse_model": Key("str", "decoupled", "impulse model: 'decoupled', 'matrix' or 'coupled'"),
        "settle_threshold": Key("float", "0.05", "position error defining settled [m]"),
        "settle_dwell": Key("float", "1.0", "time the error must stay below threshold [s]"),
        "random_contact_point": Key("bool", "false", "draw the impulse contact point randomly among hull points"),
    },
}


class ConfigError(ValueError):
    pass


def _find_line(path: str, needle: str) -> int | None:
    try:
        with open(path) as f:
            for i, line in enumerate(f, start=1):
                stripped = line.strip()
                if stripped.startswith(needle):
                    return i
    except OSError:
        return None
    return None


def _convert(kind: str, raw: str, where: str):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "vec3":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 3:
                raise ValueError("expected three comma-separated numbers")
            return np.array(parts)
        return raw.strip()
    except ValueError as err:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}: {err}") from err


def load_values(path: str | None) -> dict[str, dict]:
    """Parse and validate a config file into typed values (defaults applied)."""
    values = {
        section: {key: _convert(k.kind, k.default, f"default {section}.{key}") for key, k in keys.items()}
        for section, keys in SCHEMA.items()
    }
    if path is None:
        return values

    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as f:
            cp.read_file(f, source=path)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from err

    for section in cp.sections():
        if section not in SCHEMA:
            line = _find_line(path, f"[{section}]")
            at = f"{path}:{line}" if line else path
            raise ConfigError(f"{at}: unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                line = _find_line(path, key)
                at = f"{path}:{line}" if line else path
                raise ConfigError(f"{at}: unknown key {key!r} in section [{section}]")
            where = f"{path} [{section}] {key}"
            values[section][key] = _convert(SCHEMA[section][key].kind, raw, where)
    return values


def build_experiment(values: dict[str, dict]) -> ExperimentConfig:
    body_v = values["body"]
    inertia = np.array(
        [
            [body_v["inertia_xx"], body_v["inertia_xy"], body_v["inertia_xz"]],
            [body_v["inertia_xy"], body_v["inertia_yy"], body_v["inertia_yz"]],
            [body_v["inertia_xz"], body_v["inertia_yz"], body_v["inertia_zz"]],
        ]
    )
    body = BodyParams(body_v["mass"], inertia, body_v["gravity"])

    geo_v = values["geometry"]
    normal = geo_v["plane_normal"]
    n = float(np.linalg.norm(normal))
    if n == 0.0:
        raise ConfigError("geometry.plane_normal must be nonzero")
    normal = normal / n
    if geo_v["mode"] == "quad":
        points = quad_hull(geo_v["arm_length"], geo_v["arm_drop"], geo_v["leg_drop"])
    elif geo_v["mode"] == "point":
        points = [np.zeros(3)]
    else:
        raise ConfigError(f"geometry.mode must be 'quad' or 'point', got {geo_v['mode']!r}")
    geometry = WorldGeometry(normal, geo_v["plane_offset"], points)

    ctl_v = values["controller"]
    if ctl_v["type"] not in CONTROLLERS:
        raise ConfigError(f"controller.type must be one of {CONTROLLERS}")
    gains = ControllerGains(
        attitude_stiffness=ctl_v["attitude_stiffness"],
        position_stiffness=ctl_v["position_stiffness"],
        damping=DualMatrix.diagonal(ctl_v["damping_angular"], ctl_v["damping_linear"]),
        admittance=DualMatrix.diagonal(ctl_v["admittance_angular"], ctl_v["admittance_linear"]),
        energy_split=ctl_v["energy_split"],
        admittance_cap=ctl_v["admittance_cap"],
        admittance_safety=ctl_v["admittance_safety"],
        hold_time=ctl_v["hold_time"],
        torque_limit=ctl_v["torque_limit"],
        force_limit=ctl_v["force_limit"],
    )

    con_v = values["contact"]
    if not 0.0 <= con_v["restitution"] < 1.0:
        raise ConfigError("contact.restitution must lie in [0, 1) for simulation")
    if con_v["friction"] < 0.0:
        raise ConfigError("contact.friction must be non-negative")

    exp_v = values["experiment"]
    if exp_v["impulse_model"] not in IMPULSE_MODELS:
        raise ConfigError(f"experiment.impulse_model must be one of {IMPULSE_MODELS}")
    if exp_v["trials"] < 1:
        raise ConfigError("experiment.trials must be at least 1")

    sim_v = values["sim"]
    if sim_v["dt"] <= 0.0 or sim_v["t_end"] <= 0.0:
        raise ConfigError("sim.dt and sim.t_end must be positive")

    return ExperimentConfig(
        body=body,
        geometry=geometry,
        gains=gains,
        restitution=con_v["restitution"],
        friction=con_v["friction"],
        slip_threshold=con_v["slip_threshold"],
        resting_threshold=con_v["resting_threshold"],
        controller_type=ctl_v["type"],
        impulse_model=exp_v["impulse_model"],
        dt=sim_v["dt"],
        t_end=sim_v["t_end"],
        event_tolerance=sim_v["event_tolerance"],
        max_bisect=sim_v["max_bisect"],
        max_jumps_per_window=sim_v["max_jumps_per_window"],
        jump_window=sim_v["jump_window"],
        blowup_speed=sim_v["blowup_speed"],
        scenario=exp_v["scenario"],
        trials=exp_v["trials"],
        seed=exp_v["seed"],
        jitter_xy=exp_v["jitter_xy"],
        tilt_deg=exp_v["tilt_deg"],
        tilt_max_deg=exp_v["tilt_max_deg"],
        impact_speed=exp_v["impact_speed"],
        clearance=exp_v["clearance"],
        settle_threshold=exp_v["settle_threshold"],
        settle_dwell=exp_v["settle_dwell"],
        random_contact_point=exp_v["random_contact_point"],
    )


def load_experiment(path: str | None, overrides: dict[tuple[str, str], str] | None = None) -> ExperimentConfig:
    """Load a config file (or pure defaults) with optional (section, key)
    string overrides applied before building."""
    values = load_values(path)
    for (section, key), raw in (overrides or {}).items():
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override targets unknown key [{section}] {key}")
        values[section][key] = _convert(SCHEMA[section][key].kind, raw, f"override {section}.{key}")
    return build_experiment(values)


def reference_text() -> str:
    """Fully commented reference configuration (all defaults)."""
    lines = [
        "# Reference configuration: every key, with its default value.",
        "# Unknown sections or keys are rejected; omitted keys keep these defaults.",
        "",
    ]
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, k in keys.items():
            lines.append(f"# {k.help}")
            lines.append(f"{key} = {k.default}")
        lines.append("")
    return "\n".join(lines)


def schema_help() -> str:
    """Flat key listing used in the CLI help output."""
    lines = ["configuration keys (a commented reference file ships in configs/reference.ini):"]
    for section, keys in SCHEMA.items():
        for key, k in keys.items():
            lines.append(f"  [{section}] {key} (default {k.default}): {k.help}")
    return "\n".join(lines)
