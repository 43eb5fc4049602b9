import numpy as np
import pytest

from conftest import homogeneous_oracle, random_spd, random_twist, random_unit_quaternion
from dqimpact import quat
from dqimpact.dualquat import (
    DualMatrix,
    DualQuaternion,
    DualVector,
    dq_conjugate,
    dq_exp,
    dq_from_pose,
    dq_identity,
    dq_log,
    dq_mul,
    dq_normalized,
    dq_to_pose,
    dual_cross,
    dual_cross_adjoint,
    dual_dot,
    dual_matrix_apply,
    screw_from_contact,
    unit_violation,
)

EX = np.array([1.0, 0.0, 0.0])
EY = np.array([0.0, 1.0, 0.0])
EZ = np.array([0.0, 0.0, 1.0])


class TestDualOperations:
    def test_dot_basis(self):
        a = DualVector(EX, EY)
        assert dual_dot(a, a) == 2.0
        assert dual_dot(DualVector(EX, np.zeros(3)), DualVector(np.zeros(3), EX)) == 0.0

    def test_dot_componentwise_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(300):
            a, b = random_twist(rng), random_twist(rng)
            expected = float(a.real @ b.real + a.dual @ b.dual)
            assert abs(dual_dot(a, b) - expected) < 1e-12 * max(1.0, abs(expected))

    def test_cross_basis(self):
        out = dual_cross(DualVector(EX, np.zeros(3)), DualVector(EY, np.zeros(3)))
        assert np.allclose(out.real, EZ) and np.allclose(out.dual, 0.0)
        out = dual_cross(DualVector(EX, np.zeros(3)), DualVector(np.zeros(3), EY))
        assert np.allclose(out.real, 0.0) and np.allclose(out.dual, EZ)

    def test_cross_componentwise_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            a, b = random_twist(rng), random_twist(rng)
            out = dual_cross(a, b)
            assert np.allclose(out.real, np.cross(a.real, b.real), atol=1e-12)
            assert np.allclose(
                out.dual, np.cross(a.real, b.dual) + np.cross(a.dual, b.real), atol=1e-12
            )

    def test_cross_adjoint_basis(self):
        out = dual_cross_adjoint(DualVector(EX, np.zeros(3)), DualVector(EY, np.zeros(3)))
        assert np.allclose(out.real, EZ) and np.allclose(out.dual, 0.0)
        # the dual-dual product lands in the real part
        out = dual_cross_adjoint(DualVector(np.zeros(3), EX), DualVector(np.zeros(3), EY))
        assert np.allclose(out.real, EZ) and np.allclose(out.dual, 0.0)

    def test_cross_adjoint_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            a, b = random_twist(rng), random_twist(rng)
            out = dual_cross_adjoint(a, b)
            assert np.allclose(out.real, np.cross(a.real, b.real) + np.cross(a.dual, b.dual))
            assert np.allclose(out.dual, np.cross(a.real, b.dual))

    def test_gyroscopic_orthogonality(self):
        # the adjoint cross of a twist with its momentum never does work
        rng = np.random.default_rng(13)
        for _ in range(10_000):
            tw = random_twist(rng)
            inertia = random_spd(rng)
            mass = rng.uniform(0.2, 4.0)
            momentum = DualVector(inertia @ tw.real, mass * tw.dual)
            val = dual_dot(tw, dual_cross_adjoint(tw, momentum))
            scale = max(1.0, dual_dot(tw, tw) * (np.linalg.norm(inertia) + mass))
            assert abs(val) < 1e-10 * scale

    def test_matrix_apply(self):
        a = DualVector(EX, EY)
        ident = DualMatrix(np.eye(3), np.eye(3))
        out = dual_matrix_apply(ident, a)
        assert np.allclose(out.real, EX) and np.allclose(out.dual, EY)
        gains = DualMatrix(2.0 * np.eye(3), 3.0 * np.eye(3))
        out = dual_matrix_apply(gains, a)
        assert np.allclose(out.real, 2.0 * EX) and np.allclose(out.dual, 3.0 * EY)

    def test_matrix_apply_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            gains = DualMatrix(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
            a = random_twist(rng)
            out = dual_matrix_apply(gains, a)
            assert np.allclose(out.real, gains.real @ a.real, atol=1e-12)
            assert np.allclose(out.dual, gains.dual @ a.dual, atol=1e-12)


class TestPose:
    def test_identity_pose(self):
        dq = dq_from_pose(quat.IDENTITY, np.zeros(3))
        assert np.allclose(dq.real, quat.IDENTITY) and np.allclose(dq.dual, 0.0)

    def test_translation_dual_part(self):
        dq = dq_from_pose(quat.IDENTITY, np.array([0.0, 0.0, 2.0]))
        assert np.allclose(dq.dual, [0.0, 0.0, 0.0, 1.0])

    def test_pose_roundtrip(self):
        rng = np.random.default_rng(15)
        worst = 0.0
        for _ in range(10_000):
            q = random_unit_quaternion(rng)
            p = rng.normal(0.0, 2.0, 3)
            q2, p2 = dq_to_pose(dq_from_pose(q, p))
            worst = max(worst, float(np.max(np.abs(p2 - p))))
            assert np.allclose(q2, q)
        assert worst < 1e-10

    def test_from_pose_rejects_non_unit(self):
        with pytest.raises(ValueError):
            dq_from_pose(np.array([1.0, 1.0, 0.0, 0.0]), np.zeros(3))

    def test_mul_identity_and_translations(self):
        rng = np.random.default_rng(16)
        dq = dq_from_pose(random_unit_quaternion(rng), rng.normal(size=3))
        out = dq_mul(dq_identity(), dq)
        assert np.allclose(out.real, dq.real) and np.allclose(out.dual, dq.dual)
        t1 = dq_from_pose(quat.IDENTITY, np.array([1.0, 2.0, 3.0]))
        t2 = dq_from_pose(quat.IDENTITY, np.array([-0.5, 1.0, 0.25]))
        _, p = dq_to_pose(dq_mul(t1, t2))
        assert np.allclose(p, [0.5, 3.0, 3.25])

    def test_mul_matches_homogeneous_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            q1, p1 = random_unit_quaternion(rng), rng.normal(size=3)
            q2, p2 = random_unit_quaternion(rng), rng.normal(size=3)
            qc, pc = dq_to_pose(dq_mul(dq_from_pose(q1, p1), dq_from_pose(q2, p2)))
            T = homogeneous_oracle(q1, p1) @ homogeneous_oracle(q2, p2)
            assert np.allclose(quat.rotation_matrix(qc), T[:3, :3], atol=1e-12)
            assert np.allclose(pc, T[:3, 3], atol=1e-12)

    def test_conjugate_is_inverse(self):
        rng = np.random.default_rng(18)
        ident = dq_conjugate(dq_identity())
        assert np.allclose(ident.real, quat.IDENTITY) and np.allclose(ident.dual, 0.0)
        t = dq_from_pose(quat.IDENTITY, np.array([1.0, -2.0, 0.5]))
        _, p = dq_to_pose(dq_conjugate(t))
        assert np.allclose(p, [-1.0, 2.0, -0.5])
        for _ in range(300):
            dq = dq_from_pose(random_unit_quaternion(rng), rng.normal(size=3))
            out = dq_mul(dq_conjugate(dq), dq)
            assert abs(abs(out.real[0]) - 1.0) < 1e-9
            assert np.linalg.norm(out.real[1:]) < 1e-9
            assert np.linalg.norm(out.dual) < 1e-9
            qi, pi = dq_to_pose(dq_conjugate(dq))
            Tinv = np.linalg.inv(homogeneous_oracle(*dq_to_pose(dq)))
            assert np.allclose(quat.rotation_matrix(qi), Tinv[:3, :3], atol=1e-11)
            assert np.allclose(pi, Tinv[:3, 3], atol=1e-11)

    def test_unit_constraint_over_long_chains(self):
        rng = np.random.default_rng(19)
        acc = dq_identity()
        worst = 0.0
        for k in range(100_000):
            if k % 1000 == 0:
                step = dq_from_pose(random_unit_quaternion(rng), rng.normal(0, 0.1, 3))
            acc = dq_mul(acc, step)
            if k % 5000 == 0:
                worst = max(worst, unit_violation(acc))
        worst = max(worst, unit_violation(acc))
        assert worst < 1e-9
        renorm = dq_normalized(acc)
        # constraint residual is floating-point relative to the accumulated
        # translation magnitude (hundreds of meters after the random walk)
        assert unit_violation(renorm) < 1e-13 * max(1.0, float(np.linalg.norm(renorm.dual)))

    def test_triple_product_cyclic(self):
        # the screw triple product is cyclic under the reciprocal (Klein)
        # pairing <x, y> = x_r . y_d + x_d . y_r; the component-sum dual dot
        # used for twist/screw projections is not ad-invariant
        def reciprocal(x, y):
            return float(x.real @ y.dual + x.dual @ y.real)

        rng = np.random.default_rng(20)
        for _ in range(500):
            a, b, c = random_twist(rng), random_twist(rng), random_twist(rng)
            x = reciprocal(a, dual_cross(b, c))
            y = reciprocal(c, dual_cross(a, b))
            z = reciprocal(b, dual_cross(c, a))
            assert abs(x - y) < 1e-10 * max(1.0, abs(x))
            assert abs(x - z) < 1e-10 * max(1.0, abs(x))


class TestScrewExponential:
    def test_exp_zero(self):
        out = dq_exp(DualVector.zero())
        assert np.allclose(out.real, quat.IDENTITY) and np.allclose(out.dual, 0.0)

    def test_exp_pure_translation(self):
        v = np.array([0.4, -1.0, 2.0])
        q, p = dq_to_pose(dq_exp(DualVector(np.zeros(3), v)))
        assert np.allclose(q, quat.IDENTITY) and np.allclose(p, v)

    def test_exp_small_displacement_series(self):
        # scalar part converges to 1 - |w|^2/8 at fourth order, translation
        # to the linear displacement at second order
        rng = np.random.default_rng(21)
        w = rng.normal(size=3)
        w /= np.linalg.norm(w)
        v = rng.normal(size=3)
        errs_w, errs_p = [], []
        for scale in (0.1, 0.05, 0.025):
            delta = DualVector(scale * w, scale * v)
            out = dq_exp(delta)
            _, p = dq_to_pose(out)
            errs_w.append(abs(out.real[0] - (1.0 - scale**2 / 8.0)))
            errs_p.append(np.linalg.norm(p - delta.dual))
        for k in range(2):
            assert errs_w[k] / errs_w[k + 1] > 12.0  # ~16x per halving: fourth order
            assert errs_p[k] / errs_p[k + 1] > 3.5  # ~4x per halving: second order

    def test_exp_rejects_large_rotation(self):
        with pytest.raises(ValueError):
            dq_exp(DualVector(np.array([2.0 * np.pi, 0.0, 0.0]), np.zeros(3)))

    def test_log_roundtrip(self):
        rng = np.random.default_rng(22)
        for _ in range(2000):
            w = rng.normal(size=3)
            w = w / np.linalg.norm(w) * rng.uniform(0.0, 3.0)
            delta = DualVector(w, rng.normal(0, 2.0, 3))
            back = dq_log(dq_exp(delta))
            assert np.allclose(back.real, delta.real, atol=1e-9)
            assert np.allclose(back.dual, delta.dual, atol=1e-9)


class TestContactScrew:
    def test_axis_through_projection(self):
        out = screw_from_contact(np.array([0.0, 0.0, -0.2]), EZ)
        assert np.allclose(out.real, 0.0) and np.allclose(out.dual, EZ)

    def test_offset_point(self):
        out = screw_from_contact(EX, EZ)
        assert np.allclose(out.real, [0.0, -1.0, 0.0]) and np.allclose(out.dual, EZ)

    def test_random_matches_cross_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            r = rng.normal(size=3)
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            out = screw_from_contact(r, u)
            assert np.allclose(out.real, np.cross(r, u), atol=1e-12)
            assert np.allclose(out.dual, u)

    def test_rejects_non_unit_direction(self):
        with pytest.raises(ValueError):
            screw_from_contact(EX, np.array([0.0, 0.0, 2.0]))
