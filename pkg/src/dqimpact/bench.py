"""FLOP accounting and latency microbenchmarks for the impulse formulations.

Three straight-line scalar implementations of the impulse magnitude are
compared:

* ``inertial``  -- world-frame solution: rotates the inverse inertia into
  the world frame and evaluates everything there;
* ``matrix``    -- the optimized classical baseline: the world-frame state
  velocity is transformed into the body frame once, then the standard
  effective-mass solution is evaluated body-frame;
* ``dq``        -- the screw/dual formulation, which works on the body
  twist natively (no state transform) and reuses the contact-line moment
  between the numerator and the effective-mass denominator.

All formulations receive the same contact description (body-frame contact
point and body-frame unit normal; the contact pipeline resolves the normal
once, outside the timed/counted region) and a dense precomputed inverse
inertia. Counting conventions: additions and multiplications have unit
weight, a division counts as one multiplication-equivalent, negation is
free, and no square roots appear on any path.

Counts come from flowing a counting scalar type through these exact
functions, not from hand tallies, and the same functions (on floats) are
what the latency benchmark times. A correctness gate checks all
formulations produce identical magnitudes on shared random inputs before
any timing is reported.
"""
from __future__ import annotations

import gc
import time
from dataclasses import dataclass

import numpy as np

from . import quat
from .dualquat import DualVector
from .dynamics import DualInertia
from .impact import ContactSpec, impulse_dq

FORMULATIONS = ("inertial", "matrix", "dq")

_COUNTER = {"adds": 0, "muls": 0}


@dataclass(frozen=True)
class OpCount:
    adds: int
    muls: int

    @property
    def total(self) -> int:
        return self.adds + self.muls


@dataclass(frozen=True)
class LatencyStats:
    median_ns: float
    p95_ns: float
    mean_ns: float
    iterations: int
    checksum: float


class CountingFloat:
    """Scalar that counts the arithmetic flowing through it.

    Additions/subtractions bump the add counter; multiplications bump the
    multiply counter; division counts as one multiplication-equivalent;
    negation and comparisons are free.
    """

    __slots__ = ("v",)

    def __init__(self, v: float):
        self.v = float(v)

    def __add__(self, o):
        _COUNTER["adds"] += 1
        return CountingFloat(self.v + _val(o))

    __radd__ = __add__

    def __sub__(self, o):
        _COUNTER["adds"] += 1
        return CountingFloat(self.v - _val(o))

    def __rsub__(self, o):
        _COUNTER["adds"] += 1
        return CountingFloat(_val(o) - self.v)

    def __mul__(self, o):
        _COUNTER["muls"] += 1
        return CountingFloat(self.v * _val(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        _COUNTER["muls"] += 1  # division counted as one multiplication-equivalent
        return CountingFloat(self.v / _val(o))

    def __rtruediv__(self, o):
        _COUNTER["muls"] += 1
        return CountingFloat(_val(o) / self.v)

    def __neg__(self):
        return CountingFloat(-self.v)

    def __float__(self):
        return self.v


def _val(x):
    return x.v if isinstance(x, CountingFloat) else x


def impulse_magnitude_dq(w, v, r, n, jinv, m_inv, e, marks=None):
    """Screw-formulation impulse magnitude.

    Inputs: body angular rate w, body linear velocity v, body contact point
    r, body unit normal n (3-tuples), row-major dense inverse inertia jinv
    (9-tuple), inverse mass, restitution.
    """
    wx, wy, wz = w
    vx, vy, vz = v
    rx, ry, rz = r
    nx, ny, nz = n

    # moment of the contact normal line about the CoM (real part of the screw)
    mx = ry * nz - rz * ny
    my = rz * nx - rx * nz
    mz = rx * ny - ry * nx
    _mark(marks, "normal screw moment")

    # twist projected on the normal screw: the normal closing speed
    vn = wx * mx + wy * my + wz * mz + vx * nx + vy * ny + vz * nz
    _mark(marks, "normal closing speed")

    # inverse inertia acting on the screw
    ax = jinv[0] * mx + jinv[1] * my + jinv[2] * mz
    ay = jinv[3] * mx + jinv[4] * my + jinv[5] * mz
    az = jinv[6] * mx + jinv[7] * my + jinv[8] * mz
    bx = m_inv * nx
    by = m_inv * ny
    bz = m_inv * nz
    _mark(marks, "inverse inertia on screw")

    rho = ax * mx + ay * my + az * mz + bx * nx + by * ny + bz * nz
    _mark(marks, "effective inverse mass")

    lam = -(1.0 + e) * vn / rho
    _mark(marks, "impulse magnitude")
    return lam


def impulse_magnitude_matrix(v_world, w, rot, r, n_b, jinv, m_inv, e, marks=None):
    """Optimized classical (body-frame) impulse magnitude.

    Inputs: world linear velocity, body angular rate, row-major rotation
    matrix (9-tuple), body contact point, body unit normal, dense inverse
    inertia, inverse mass, restitution. The classical state keeps its
    linear velocity in the world frame, so the solution pays one frame
    transform before the body-frame effective-mass evaluation.
    """
    vwx, vwy, vwz = v_world
    wx, wy, wz = w
    rx, ry, rz = r
    nx, ny, nz = n_b

    # world -> body velocity (transpose rotation)
    vbx = rot[0] * vwx + rot[3] * vwy + rot[6] * vwz
    vby = rot[1] * vwx + rot[4] * vwy + rot[7] * vwz
    vbz = rot[2] * vwx + rot[5] * vwy + rot[8] * vwz
    _mark(marks, "world-to-body velocity")

    # contact-point velocity and its normal projection
    cx = wy * rz - wz * ry
    cy = wz * rx - wx * rz
    cz = wx * ry - wy * rx
    px = vbx + cx
    py = vby + cy
    pz = vbz + cz
    vn = px * nx + py * ny + pz * nz
    _mark(marks, "normal closing speed")

    # effective inverse mass about the contact line
    mx = ry * nz - rz * ny
    my = rz * nx - rx * nz
    mz = rx * ny - ry * nx
    ax = jinv[0] * mx + jinv[1] * my + jinv[2] * mz
    ay = jinv[3] * mx + jinv[4] * my + jinv[5] * mz
    az = jinv[6] * mx + jinv[7] * my + jinv[8] * mz
    rho = m_inv + (ax * mx + ay * my + az * mz)
    _mark(marks, "effective inverse mass")

    lam = -(1.0 + e) * vn / rho
    _mark(marks, "impulse magnitude")
    return lam


def impulse_magnitude_inertial(v_world, w, rot, r, n_world, jinv, m_inv, e, marks=None):
    """World-frame impulse magnitude: the inverse inertia is rotated into
    the world frame (R J^-1 R^T) and the solution evaluated entirely there.
    Included to document why nobody ships it."""
    vwx, vwy, vwz = v_world
    wx, wy, wz = w
    rx, ry, rz = r
    nx, ny, nz = n_world

    # T = R @ Jinv
    t0 = rot[0] * jinv[0] + rot[1] * jinv[3] + rot[2] * jinv[6]
    t1 = rot[0] * jinv[1] + rot[1] * jinv[4] + rot[2] * jinv[7]
    t2 = rot[0] * jinv[2] + rot[1] * jinv[5] + rot[2] * jinv[8]
    t3 = rot[3] * jinv[0] + rot[4] * jinv[3] + rot[5] * jinv[6]
    t4 = rot[3] * jinv[1] + rot[4] * jinv[4] + rot[5] * jinv[7]
    t5 = rot[3] * jinv[2] + rot[4] * jinv[5] + rot[5] * jinv[8]
    t6 = rot[6] * jinv[0] + rot[7] * jinv[3] + rot[8] * jinv[6]
    t7 = rot[6] * jinv[1] + rot[7] * jinv[4] + rot[8] * jinv[7]
    t8 = rot[6] * jinv[2] + rot[7] * jinv[5] + rot[8] * jinv[8]
    # Jw = T @ R^T
    j0 = t0 * rot[0] + t1 * rot[1] + t2 * rot[2]
    j1 = t0 * rot[3] + t1 * rot[4] + t2 * rot[5]
    j2 = t0 * rot[6] + t1 * rot[7] + t2 * rot[8]
    j3 = t3 * rot[0] + t4 * rot[1] + t5 * rot[2]
    j4 = t3 * rot[3] + t4 * rot[4] + t5 * rot[5]
    j5 = t3 * rot[6] + t4 * rot[7] + t5 * rot[8]
    j6 = t6 * rot[0] + t7 * rot[1] + t8 * rot[2]
    j7 = t6 * rot[3] + t7 * rot[4] + t8 * rot[5]
    j8 = t6 * rot[6] + t7 * rot[7] + t8 * rot[8]
    _mark(marks, "inverse inertia to world")

    # contact point and angular rate to world
    rwx = rot[0] * rx + rot[1] * ry + rot[2] * rz
    rwy = rot[3] * rx + rot[4] * ry + rot[5] * rz
    rwz = rot[6] * rx + rot[7] * ry + rot[8] * rz
    wwx = rot[0] * wx + rot[1] * wy + rot[2] * wz
    wwy = rot[3] * wx + rot[4] * wy + rot[5] * wz
    wwz = rot[6] * wx + rot[7] * wy + rot[8] * wz
    _mark(marks, "contact geometry to world")

    cx = wwy * rwz - wwz * rwy
    cy = wwz * rwx - wwx * rwz
    cz = wwx * rwy - wwy * rwx
    px = vwx + cx
    py = vwy + cy
    pz = vwz + cz
    vn = px * nx + py * ny + pz * nz
    _mark(marks, "normal closing speed")

    mx = rwy * nz - rwz * ny
    my = rwz * nx - rwx * nz
    mz = rwx * ny - rwy * nx
    ax = j0 * mx + j1 * my + j2 * mz
    ay = j3 * mx + j4 * my + j5 * mz
    az = j6 * mx + j7 * my + j8 * mz
    rho = m_inv + (ax * mx + ay * my + az * mz)
    _mark(marks, "effective inverse mass")

    lam = -(1.0 + e) * vn / rho
    _mark(marks, "impulse magnitude")
    return lam


def _mark(marks, label):
    if marks is not None:
        marks.append((label, _COUNTER["adds"], _COUNTER["muls"]))


@dataclass(frozen=True, eq=False)
class BenchSample:
    """One physical input sample, packed for each formulation."""

    w: tuple
    v_body: tuple
    v_world: tuple
    rot: tuple
    r: tuple
    n_body: tuple
    n_world: tuple
    jinv: tuple
    m_inv: float
    e: float
    attitude: np.ndarray
    inertia: np.ndarray
    mass: float


def generate_inputs(count: int, seed: int = 0) -> list[BenchSample]:
    """Random approaching-contact samples shared by all formulations."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        mass = rng.uniform(0.3, 3.0)
        a = rng.normal(size=(3, 3))
        inertia = a @ a.T * 0.02 + np.eye(3) * rng.uniform(0.005, 0.05)
        jinv = np.linalg.inv(inertia)
        q = quat.normalize(rng.normal(size=4))
        rot = quat.rotation_matrix(q)
        w = rng.normal(0.0, 2.0, 3)
        v_body = rng.normal(0.0, 2.0, 3)
        r = rng.uniform(-0.3, 0.3, 3)
        n_world = rng.normal(size=3)
        n_world /= np.linalg.norm(n_world)
        n_body = rot.T @ n_world
        vn = float(np.dot(v_body + np.cross(w, r), n_body))
        if vn > -0.1:
            continue
        out.append(
            BenchSample(
                w=tuple(w.tolist()),
                v_body=tuple(v_body.tolist()),
                v_world=tuple((rot @ v_body).tolist()),
                rot=tuple(rot.reshape(-1).tolist()),
                r=tuple(r.tolist()),
                n_body=tuple(n_body.tolist()),
                n_world=tuple(n_world.tolist()),
                jinv=tuple(jinv.reshape(-1).tolist()),
                m_inv=1.0 / mass,
                e=float(rng.uniform(0.0, 0.99)),
                attitude=q,
                inertia=inertia,
                mass=mass,
            )
        )
    return out


_IMPLS = {
    "dq": impulse_magnitude_dq,
    "matrix": impulse_magnitude_matrix,
    "inertial": impulse_magnitude_inertial,
}


def _pack_args(formulation: str, s: BenchSample, cast=None) -> tuple:
    if formulation == "dq":
        args = (s.w, s.v_body, s.r, s.n_body, s.jinv, s.m_inv, s.e)
    elif formulation == "matrix":
        args = (s.v_world, s.w, s.rot, s.r, s.n_body, s.jinv, s.m_inv, s.e)
    elif formulation == "inertial":
        args = (s.v_world, s.w, s.rot, s.r, s.n_world, s.jinv, s.m_inv, s.e)
    else:
        raise ValueError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")
    if cast is None:
        return args
    return tuple(
        tuple(map(cast, a)) if isinstance(a, tuple) else cast(a) for a in args
    )


def _call(formulation: str, s: BenchSample, cast=None, marks=None):
    args = _pack_args(formulation, s, cast)  # validates the name
    return _IMPLS[formulation](*args, marks)


def flop_count(formulation: str) -> OpCount:
    """Operation count of one impulse-magnitude evaluation.

    The paths are straight-line (no value-dependent branching), so the
    count is input-independent."""
    sample = generate_inputs(1, seed=1234)[0]
    _COUNTER["adds"] = 0
    _COUNTER["muls"] = 0
    _call(formulation, sample, cast=CountingFloat)
    return OpCount(_COUNTER["adds"], _COUNTER["muls"])


def flop_breakdown(formulation: str) -> list[tuple[str, OpCount]]:
    """Per-stage operation counts (the itemization behind the totals)."""
    sample = generate_inputs(1, seed=1234)[0]
    _COUNTER["adds"] = 0
    _COUNTER["muls"] = 0
    marks: list[tuple[str, int, int]] = []
    _call(formulation, sample, cast=CountingFloat, marks=marks)
    out = []
    prev_a, prev_m = 0, 0
    for label, a, m in marks:
        out.append((label, OpCount(a - prev_a, m - prev_m)))
        prev_a, prev_m = a, m
    return out


def correctness_check(count: int = 256, seed: int = 0) -> float:
    """Gate before timing: max relative deviation of the impulse magnitude
    across all formulations and against the library screw implementation
    (frictionless contact)."""
    samples = generate_inputs(count, seed)
    worst = 0.0
    for s in samples:
        lams = {f: _call(f, s) for f in FORMULATIONS}
        contact = ContactSpec(np.array(s.r), np.array(s.n_world), s.e, 0.0)
        lib = impulse_dq(
            DualVector(np.array(s.w), np.array(s.v_body)),
            contact,
            s.attitude,
            DualInertia(s.inertia, s.mass),
        ).magnitude
        ref = lams["dq"]
        for lam in (*lams.values(), lib):
            worst = max(worst, abs(lam - ref) / max(abs(ref), 1e-12))
    return worst


def latency_bench(
    formulation: str, n_iters: int, seed: int = 0, pool: int = 256, batch: int = 128
) -> LatencyStats:
    """Warm-cache latency of one impulse-magnitude evaluation.

    Inputs are pre-generated and cycled; calls are timed in batches and the
    per-call statistics are computed over batch means. The checksum
    accumulates every output so the work cannot be optimized away, and is
    reported alongside the timings.
    """
    if n_iters <= 0:
        raise ValueError("iteration count must be positive")
    if formulation not in _IMPLS:
        raise ValueError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")
    fn = _IMPLS[formulation]
    packed = [_pack_args(formulation, s) for s in generate_inputs(pool, seed)]

    # warmup
    checksum = 0.0
    for args in packed:
        checksum += fn(*args)

    n_batches = max(1, n_iters // batch)
    per_call = np.empty(n_batches)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        idx = 0
        n_args = len(packed)
        for b in range(n_batches):
            t0 = time.perf_counter_ns()
            for _ in range(batch):
                checksum += fn(*packed[idx])
                idx += 1
                if idx == n_args:
                    idx = 0
            t1 = time.perf_counter_ns()
            per_call[b] = (t1 - t0) / batch
    finally:
        if gc_was_enabled:
            gc.enable()

    return LatencyStats(
        median_ns=float(np.median(per_call)),
        p95_ns=float(np.percentile(per_call, 95)),
        mean_ns=float(per_call.mean()),
        iterations=n_batches * batch,
        checksum=checksum,
    )


BENCH_HEADER = "formulation,adds,muls,total,median_ns,p95_ns,checksum"


def bench_csv(results: dict[str, tuple[OpCount, LatencyStats]]) -> str:
    lines = [BENCH_HEADER]
    for name in FORMULATIONS:
        if name not in results:
            continue
        ops, lat = results[name]
        lines.append(
            f"{name},{ops.adds},{ops.muls},{ops.total},"
            f"{lat.median_ns:.17g},{lat.p95_ns:.17g},{lat.checksum:.17g}"
        )
    return "\n".join(lines) + "\n"
