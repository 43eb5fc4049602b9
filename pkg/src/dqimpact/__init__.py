"""Dual-quaternion rigid-body impact modeling and collision-recovery control.

The package provides:

* quaternion and dual-quaternion/screw algebra (`quat`, `dualquat`)
* rigid-body flight dynamics in classical and dual form (`dynamics`)
* impulse-based reset maps in matrix and dual-quaternion form, plus a
  cross-coupled impulse oracle (`impact`)
* the screw-admittance recovery controller, its Lyapunov certificates and
  admittance gain bounds (`controller`)
* a hybrid-system executor with guard detection and event localization
  (`hybridsim`)
* experiment orchestration, metrics and CSV/SVG emission (`harness`)
* FLOP accounting and latency microbenchmarks of the impulse formulations
  (`bench`)
* a command-line front end (`cli`)
"""

__version__ = "0.1.0"

from . import bench, controller, dualquat, dynamics, harness, hybridsim, impact, quat

__all__ = [
    "bench",
    "controller",
    "dualquat",
    "dynamics",
    "harness",
    "hybridsim",
    "impact",
    "quat",
]
