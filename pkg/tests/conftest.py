"""Shared random generators and independent oracles.

The oracles here intentionally avoid the library's own formulas: rotation
matrices come from the outer-product identity, pose composition goes through
4x4 homogeneous matrices, so library bugs cannot cancel against themselves.
"""
import logging

import numpy as np

from dqimpact.dualquat import DualVector
from dqimpact.dynamics import BodyParams, DualInertia
from dqimpact.impact import ContactSpec

# randomized stress tests intentionally produce slip-reversal impacts;
# don't let the per-impact warning flood the output
logging.getLogger("dqimpact.impact").setLevel(logging.ERROR)


def rotation_oracle(q):
    """Rotation matrix via R = (w^2 - v.v) I + 2 v v^T + 2 w [v]x."""
    w, v = float(q[0]), np.asarray(q[1:4], dtype=float)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return (w * w - v @ v) * np.eye(3) + 2.0 * np.outer(v, v) + 2.0 * w * vx


def homogeneous_oracle(q, p):
    T = np.eye(4)
    T[:3, :3] = rotation_oracle(q)
    T[:3, 3] = p
    return T


def random_unit_quaternion(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_spd(rng, base=0.02, floor=0.005, ceil=0.05):
    a = rng.normal(size=(3, 3))
    return a @ a.T * base + np.eye(3) * rng.uniform(floor, ceil)


def random_twist(rng, scale=2.0):
    return DualVector(rng.normal(0, scale, 3), rng.normal(0, scale, 3))


def random_impact(rng, e=None, mu=None, max_tries=100):
    """Random approaching contact: (twist, contact, attitude, inertia, body)."""
    for _ in range(max_tries):
        mass = rng.uniform(0.3, 3.0)
        inertia_mat = random_spd(rng)
        q = random_unit_quaternion(rng)
        twist = random_twist(rng)
        r_c = rng.uniform(-0.3, 0.3, 3)
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        e_draw = rng.uniform(0.0, 1.0 - 1e-9) if e is None else e
        mu_draw = rng.uniform(0.0, 1.0) if mu is None else mu
        contact = ContactSpec(r_c, n, e_draw, mu_draw)
        body = BodyParams(mass, inertia_mat)
        dual_inertia = DualInertia(inertia_mat, mass)
        from dqimpact import quat
        from dqimpact.dualquat import cross, screw_from_contact, dual_dot

        n_b = quat.rotate(quat.conjugate(q), n)
        v_n = dual_dot(twist, screw_from_contact(r_c, n_b))
        if v_n < -1e-3:
            return twist, contact, q, dual_inertia, body
    raise RuntimeError("failed to draw an approaching contact")
