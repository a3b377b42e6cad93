import numpy as np
import pytest
from scipy.linalg import expm

from wio import attitude as att
from wio.errors import DegenerateNormalError, TiltSingularityError


def random_tilt(rng, radius=0.9):
    r = radius * np.sqrt(rng.uniform())
    a = rng.uniform(0.0, 2.0 * np.pi)
    return r * np.array([np.cos(a), np.sin(a)])


class TestRotationFromYawTilt:
    def test_zero_tilt_is_pure_yaw(self):
        r = att.rotation_from_yaw_tilt(np.pi / 2.0, np.zeros(2))
        expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(r, expected, atol=1e-15)

    def test_unit_tilt_boundary_value(self):
        # s = (1, 0) sits on the chart boundary; with the precondition check
        # disabled the printed matrix evaluates to a 90-degree pitch
        r = att.tilt_rotation(np.array([1.0, 0.0]), check=False)
        expected = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        np.testing.assert_allclose(r, expected, atol=1e-15)

    def test_orthogonality_and_determinant(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            r = att.rotation_from_yaw_tilt(rng.uniform(-np.pi, np.pi), random_tilt(rng))
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
            assert abs(np.linalg.det(r) - 1.0) < 1e-12

    def test_singularity_raises(self):
        with pytest.raises(TiltSingularityError):
            att.rotation_from_yaw_tilt(0.0, np.array([0.9995, 0.0]))

    def test_body_z_independent_of_yaw(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            s = random_tilt(rng)
            z0 = att.rotation_from_yaw_tilt(0.0, s)[:, 2]
            z1 = att.rotation_from_yaw_tilt(rng.uniform(-np.pi, np.pi), s)[:, 2]
            assert abs(z0[2] - z1[2]) < 1e-15
            assert abs(np.linalg.norm(z0[:2]) - np.linalg.norm(z1[:2])) < 1e-14


def yaw_tilt_from_rotation(r):
    """Invert the parameterization; independent of the forward code path.

    The third row of R equals the third row of the tilt block (yaw cannot
    touch it), which pins s; yaw follows from the remaining z-rotation.
    """
    s1 = -r[2, 0] / (1.0 + r[2, 2])
    s2 = -r[2, 1] / (1.0 + r[2, 2])
    s = np.array([s1, s2])
    r_psi = r @ att.tilt_rotation(s, check=False).T
    return np.arctan2(r_psi[1, 0], r_psi[0, 0]), s


class TestTiltKinematics:
    def test_pure_yaw_rate(self):
        psi_dot, s_dot = att.tilt_kinematics(np.zeros(2), np.array([0.0, 0.0, 0.7]))
        assert psi_dot == pytest.approx(0.7, abs=1e-15)
        np.testing.assert_allclose(s_dot, np.zeros(2), atol=1e-15)

    def test_pure_pitch_rate(self):
        psi_dot, s_dot = att.tilt_kinematics(np.zeros(2), np.array([0.0, 0.4, 0.0]))
        assert psi_dot == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(s_dot, np.array([0.2, 0.0]), atol=1e-15)

    def test_matches_rotation_integration(self):
        # oracle: differentiate (psi, s) extracted from R(t) = R0 expm([w]x t)
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(50):
            s = random_tilt(rng, radius=0.7)
            psi = rng.uniform(-np.pi, np.pi)
            omega = rng.uniform(-1.0, 1.0, 3)
            r0 = att.rotation_from_yaw_tilt(psi, s)
            wx = np.array(
                [
                    [0.0, -omega[2], omega[1]],
                    [omega[2], 0.0, -omega[0]],
                    [-omega[1], omega[0], 0.0],
                ]
            )
            psi_p, s_p = yaw_tilt_from_rotation(r0 @ expm(wx * h))
            psi_m, s_m = yaw_tilt_from_rotation(r0 @ expm(-wx * h))
            psi_dot, s_dot = att.tilt_kinematics(s, omega)
            assert psi_dot == pytest.approx((psi_p - psi_m) / (2 * h), abs=1e-6)
            np.testing.assert_allclose(s_dot, (s_p - s_m) / (2 * h), atol=1e-6)

    def test_rk4_tracks_rotation_integration(self):
        # integrating the chart kinematics with RK4 stays O(dt^4)-close to the
        # direct rotation integration over a short horizon
        rng = np.random.default_rng(4)
        omega = np.array([0.3, -0.5, 0.8])
        psi, s = 0.3, np.array([0.1, -0.2])
        r = att.rotation_from_yaw_tilt(psi, s)
        wx = np.array(
            [
                [0.0, -omega[2], omega[1]],
                [omega[2], 0.0, -omega[0]],
                [-omega[1], omega[0], 0.0],
            ]
        )
        dt = 1e-3
        for _ in range(200):
            def rate(state):
                psi_dot, s_dot = att.tilt_kinematics(state[1:], omega)
                return np.concatenate([[psi_dot], s_dot])

            y = np.concatenate([[psi], s])
            k1 = rate(y)
            k2 = rate(y + 0.5 * dt * k1)
            k3 = rate(y + 0.5 * dt * k2)
            k4 = rate(y + dt * k3)
            y = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            psi, s = y[0], y[1:]
            r = r @ expm(wx * dt)
        psi_ref, s_ref = yaw_tilt_from_rotation(r)
        assert psi == pytest.approx(psi_ref, abs=1e-10)
        np.testing.assert_allclose(s, s_ref, atol=1e-10)


class TestTiltRotationPartials:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        h = 1e-7
        for _ in range(100):
            s = random_tilt(rng, radius=0.8)
            d1, d2 = att.tilt_rotation_partials(s)
            for axis, analytic in ((0, d1), (1, d2)):
                sp, sm = s.copy(), s.copy()
                sp[axis] += h
                sm[axis] -= h
                fd = (
                    att.tilt_rotation(sp, check=False) - att.tilt_rotation(sm, check=False)
                ) / (2 * h)
                np.testing.assert_allclose(analytic, fd, atol=1e-6)


class TestQuaternions:
    def test_log_error_identity(self):
        q = att.quat_from_rotvec(np.array([0.2, -0.1, 0.4]))
        np.testing.assert_allclose(att.quat_log_error(q, q), np.zeros(3), atol=1e-15)

    def test_log_error_ten_degrees_about_z(self):
        q = att.quat_from_rotvec(np.array([0.0, 0.0, np.radians(10.0)]))
        err = att.quat_log_error(att.quat_identity(), q)
        np.testing.assert_allclose(err, [0.0, 0.0, 0.1745329252], atol=1e-9)

    def test_log_magnitude_equals_trace_geodesic(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            q1 = att.quat_normalize(rng.standard_normal(4))
            q2 = att.quat_normalize(rng.standard_normal(4))
            err = att.quat_log_error(q1, q2)
            rel = att.quat_to_rotation(q1).T @ att.quat_to_rotation(q2)
            angle = np.arccos(np.clip(0.5 * (np.trace(rel) - 1.0), -1.0, 1.0))
            assert np.linalg.norm(err) == pytest.approx(angle, abs=1e-9)
            assert np.linalg.norm(err) <= np.pi + 1e-12

    def test_log_error_antisymmetry_small_angles(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            q1 = att.quat_normalize(rng.standard_normal(4))
            delta = att.quat_from_rotvec(rng.uniform(-0.05, 0.05, 3))
            q2 = att.quat_multiply(q1, delta)
            fwd = att.quat_log_error(q1, q2)
            back = att.quat_log_error(q2, q1)
            np.testing.assert_allclose(fwd, -back, atol=1e-9)

    def test_rotation_round_trip(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            q = att.quat_normalize(rng.standard_normal(4))
            if q[0] < 0:
                q = -q
            back = att.quat_from_rotation(att.quat_to_rotation(q))
            np.testing.assert_allclose(back, q, atol=1e-12)

    def test_multiply_keeps_unit_norm(self):
        rng = np.random.default_rng(9)
        q = att.quat_identity()
        for _ in range(1000):
            q = att.quat_multiply(q, att.quat_from_rotvec(rng.uniform(-0.3, 0.3, 3)))
            assert abs(np.linalg.norm(q) - 1.0) < 1e-12


class TestTiltFromNormal:
    def test_level_ground(self):
        np.testing.assert_allclose(
            att.tilt_from_normal(np.array([0.0, 0.0, 1.0]), 1.3), np.zeros(2), atol=1e-15
        )

    def test_ten_degree_pitch(self):
        # oracle: with s2 = 0 the alignment condition reduces to the scalar
        # quadratic tan(10 deg) s1^2 + 2 s1 - tan(10 deg) = 0
        t = np.tan(np.radians(10.0))
        s1_expected = (np.sqrt(1.0 + t * t) - 1.0) / t
        normal = np.array([np.sin(np.radians(10.0)), 0.0, np.cos(np.radians(10.0))])
        s = att.tilt_from_normal(normal, 0.0)
        assert s[0] == pytest.approx(s1_expected, abs=1e-12)
        assert abs(s[1]) < 1e-15
        assert 2 * s[0] / (1.0 - s[0] ** 2) == pytest.approx(t, abs=1e-12)

    def test_round_trip_alignment(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            n = rng.standard_normal(3)
            n[2] = abs(n[2]) + 0.6 * np.linalg.norm(n)  # keeps n_z > 0.5 after normalizing
            n /= np.linalg.norm(n)
            psi = rng.uniform(-np.pi, np.pi)
            s = att.tilt_from_normal(n, psi)
            z_axis = att.rotation_from_yaw_tilt(psi, s, check=False)[:, 2]
            assert np.linalg.norm(np.cross(z_axis, n)) < 1e-10
            assert z_axis @ n > 0

    def test_degenerate_normal(self):
        with pytest.raises(DegenerateNormalError):
            att.tilt_from_normal(np.array([1.0, 0.0, 0.0]), 0.0)


class TestClampTilt:
    def test_clamps_to_disk(self):
        s, hit = att.clamp_tilt(np.array([2.0, 0.0]))
        assert hit
        assert s @ s == pytest.approx(1.0 - att.EPS_TILT, rel=1e-12)

    def test_leaves_interior_alone(self):
        s0 = np.array([0.3, -0.2])
        s, hit = att.clamp_tilt(s0)
        assert not hit
        np.testing.assert_array_equal(s, s0)
