import numpy as np
import pytest

from wio import spline as spl
from wio.attitude import body_z_in_gravity, tilt_from_normal
from wio.errors import InsufficientPosesError, MissingControlPointError, ParseError


# --- independent oracle: classic uniform B-spline basis functions -----------

def cubic_basis(u):
    """Uniform cubic basis values written out longhand (not via the matrix)."""
    return np.array(
        [
            (1.0 - u) ** 3 / 6.0,
            (3.0 * u ** 3 - 6.0 * u ** 2 + 4.0) / 6.0,
            (-3.0 * u ** 3 + 3.0 * u ** 2 + 3.0 * u + 1.0) / 6.0,
            u ** 3 / 6.0,
        ]
    )


def double_sum_height(net, u, v):
    """Direct double sum over basis products; the evaluation oracle."""
    bu = cubic_basis(u)
    bv = cubic_basis(v)
    return sum(
        bu[i] * bv[j] * net[i, j] for i in range(4) for j in range(4)
    )


def random_spline(rng, d=5.0, span=8, scale=2.0):
    points = {
        (i, j): float(rng.uniform(-scale, scale))
        for i in range(-span, span + 1)
        for j in range(-span, span + 1)
    }
    return spl.GroundSpline(spl.KnotGrid(d), points)


class TestPatchCoords:
    def test_simple_map(self):
        pc = spl.patch_coords(spl.KnotGrid(5.0), 2.5, 0.0)
        assert (pc.gx, pc.gy) == (0, 0)
        assert pc.u == pytest.approx(0.5)
        assert pc.v == pytest.approx(0.0)

    def test_half_open_boundary(self):
        pc = spl.patch_coords(spl.KnotGrid(5.0), 5.0, 0.0)
        assert pc.gx == 1
        assert pc.u == 0.0

    def test_negative_coordinate(self):
        pc = spl.patch_coords(spl.KnotGrid(5.0), -0.1, 0.0)
        assert pc.gx == -1
        assert pc.u == pytest.approx(0.98)

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        grid = spl.KnotGrid(3.0, x0=-1.0, y0=2.0)
        for _ in range(200):
            x, y = rng.uniform(-50, 50, 2)
            pc = spl.patch_coords(grid, x, y)
            assert 0.0 <= pc.u < 1.0 and 0.0 <= pc.v < 1.0
            assert grid.x0 + (pc.gx + pc.u) * grid.d == pytest.approx(x, abs=1e-12)
            assert grid.y0 + (pc.gy + pc.v) * grid.d == pytest.approx(y, abs=1e-12)


class TestEvalHeight:
    def test_partition_of_unity(self):
        rng = np.random.default_rng(1)
        grid = spl.KnotGrid(5.0)
        points = {(i, j): 3.0 for i in range(-6, 7) for j in range(-6, 7)}
        s = spl.GroundSpline(grid, points)
        for _ in range(1000):
            x, y = rng.uniform(-14, 14, 2)
            assert abs(spl.eval_height(s, x, y) - 3.0) < 1e-12

    def test_matches_double_sum(self):
        rng = np.random.default_rng(2)
        s = random_spline(rng)
        for _ in range(300):
            x, y = rng.uniform(-20, 20, 2)
            pc = spl.patch_coords(s.grid, x, y)
            net = s.control_net(pc.gx, pc.gy)
            assert spl.eval_height(s, x, y) == pytest.approx(
                double_sum_height(net, pc.u, pc.v), abs=1e-12
            )

    def test_continuous_across_patch_corner(self):
        # evaluate the same corner with all four adjacent patch anchorings
        rng = np.random.default_rng(3)
        s = random_spline(rng)
        d = s.grid.d
        for (ci, cj) in [(0, 0), (2, -1), (-3, 4)]:
            corner = np.array([ci * d, cj * d])
            values = []
            for (gx, gy, u, v) in [
                (ci, cj, 0.0, 0.0),
                (ci - 1, cj, 1.0, 0.0),
                (ci, cj - 1, 0.0, 1.0),
                (ci - 1, cj - 1, 1.0, 1.0),
            ]:
                net = s.control_net(gx, gy)
                bu, _, _ = spl.basis_rows(u, 3)
                bv, _, _ = spl.basis_rows(v, 3)
                values.append(float(bu @ net @ bv))
            assert np.ptp(values) < 1e-12

    def test_missing_control_point_named(self):
        s = spl.GroundSpline(spl.KnotGrid(5.0), {(0, 0): 1.0})
        with pytest.raises(MissingControlPointError) as err:
            spl.eval_height(s, 2.0, 2.0)
        assert err.value.index in {(i, j) for i in range(4) for j in range(4)} - {(0, 0)}


class TestEvalGradient:
    def test_flat_ground(self):
        points = {(i, j): 3.0 for i in range(-4, 5) for j in range(-4, 5)}
        s = spl.GroundSpline(spl.KnotGrid(5.0), points)
        np.testing.assert_allclose(spl.eval_gradient(s, 1.2, -3.4), np.zeros(2), atol=1e-14)

    def test_matches_finite_difference(self):
        rng = np.random.default_rng(4)
        s = random_spline(rng)
        h = 1e-5 * s.grid.d
        for _ in range(200):
            x, y = rng.uniform(-15, 15, 2)
            gx, gy = spl.eval_gradient(s, x, y)
            fd_x = (spl.eval_height(s, x + h, y) - spl.eval_height(s, x - h, y)) / (2 * h)
            fd_y = (spl.eval_height(s, x, y + h) - spl.eval_height(s, x, y - h)) / (2 * h)
            assert gx == pytest.approx(fd_x, abs=1e-7)
            assert gy == pytest.approx(fd_y, abs=1e-7)

    def test_gradient_continuous_across_knots(self):
        rng = np.random.default_rng(5)
        s = random_spline(rng)
        d = s.grid.d
        eps = 1e-9
        for k in (-2, 0, 3):
            y = 1.7
            left = spl.eval_gradient(s, k * d - eps, y)
            right = spl.eval_gradient(s, k * d + eps, y)
            np.testing.assert_allclose(left, right, atol=1e-10)

    def test_second_difference_continuous_across_knots(self):
        # C2: second derivatives continuous too
        rng = np.random.default_rng(6)
        s = random_spline(rng)
        d = s.grid.d
        eps = 1e-7
        for k in (-1, 2):
            y = 0.9
            left = spl.eval_hessian(s, k * d - eps, y)
            right = spl.eval_hessian(s, k * d + eps, y)
            np.testing.assert_allclose(left, right, atol=1e-8)

    def test_hessian_matches_finite_difference(self):
        rng = np.random.default_rng(7)
        s = random_spline(rng)
        h = 1e-4
        for _ in range(50):
            x, y = rng.uniform(-10, 10, 2)
            hxx, hxy, hyy = spl.eval_hessian(s, x, y)
            gxp = spl.eval_gradient(s, x + h, y)
            gxm = spl.eval_gradient(s, x - h, y)
            gyp = spl.eval_gradient(s, x, y + h)
            gym = spl.eval_gradient(s, x, y - h)
            assert hxx == pytest.approx((gxp[0] - gxm[0]) / (2 * h), abs=1e-6)
            assert hxy == pytest.approx((gyp[0] - gym[0]) / (2 * h), abs=1e-6)
            assert hyy == pytest.approx((gyp[1] - gym[1]) / (2 * h), abs=1e-6)


class TestLowerDegrees:
    @pytest.mark.parametrize("degree", [1, 2])
    def test_partition_of_unity(self, degree):
        rng = np.random.default_rng(8)
        points = {(i, j): 2.5 for i in range(-5, 6) for j in range(-5, 6)}
        s = spl.GroundSpline(spl.KnotGrid(4.0), points, degree=degree)
        for _ in range(200):
            x, y = rng.uniform(-10, 10, 2)
            assert spl.eval_height(s, x, y) == pytest.approx(2.5, abs=1e-12)

    def test_degree_one_is_bilinear(self):
        points = {(i, j): float(i + 2 * j) for i in range(-5, 6) for j in range(-5, 6)}
        s = spl.GroundSpline(spl.KnotGrid(1.0), points, degree=1)
        assert spl.eval_height(s, 0.25, 0.5) == pytest.approx(0.25 + 2 * 0.5, abs=1e-14)

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_linear_precision_at_greville_points(self, degree):
        # heights sampled from a plane at the Greville abscissae reproduce it
        d = 2.0
        shift = -(degree - 1) / 2.0
        plane = lambda x, y: 0.5 * x - 0.25 * y  # noqa: E731
        points = {
            (i, j): plane((i + shift) * d, (j + shift) * d)
            for i in range(-6, 7)
            for j in range(-6, 7)
        }
        s = spl.GroundSpline(spl.KnotGrid(d), points, degree=degree)
        rng = np.random.default_rng(9)
        for _ in range(100):
            x, y = rng.uniform(-6, 6, 2)
            assert spl.eval_height(s, x, y) == pytest.approx(plane(x, y), abs=1e-12)


class TestConstraintResidual:
    def test_level_contact_is_zero(self):
        points = {(i, j): 1.5 for i in range(-4, 5) for j in range(-4, 5)}
        s = spl.GroundSpline(spl.KnotGrid(5.0), points)
        r = spl.constraint_residual(s, np.array([2.0, 3.0, 1.5]), 0.7, np.zeros(2))
        np.testing.assert_allclose(r, np.zeros(3), atol=1e-12)

    def test_alignment_rows_match_cross_product(self):
        # the simplified alignment rows equal the cross-product components up
        # to the positive factor sigma / (1 - |s|^2) and a fixed sign
        rng = np.random.default_rng(10)
        s = random_spline(rng)
        for _ in range(300):
            p_w = np.array([rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-2, 2)])
            yaw = rng.uniform(-np.pi, np.pi)
            r = 0.9 * np.sqrt(rng.uniform())
            a = rng.uniform(0, 2 * np.pi)
            tilt = r * np.array([np.cos(a), np.sin(a)])
            simplified = spl.constraint_residual(s, p_w, yaw, tilt)
            cross = spl.normal_alignment_cross(s, p_w, yaw, tilt)
            factor = (1.0 + tilt @ tilt) / (1.0 - tilt @ tilt)
            assert simplified[1] == pytest.approx(-factor * cross[0], abs=1e-9)
            assert simplified[2] == pytest.approx(factor * cross[1], abs=1e-9)

    def test_pitched_plane_alignment(self):
        # linear precision: control heights sampled from the plane at the
        # Greville abscissae reproduce it exactly, and the normal-matched
        # tilt zeroes the alignment rows
        slope = np.tan(np.radians(10.0))
        d = 5.0
        points = {(i, j): slope * (i - 1) * d for i in range(-4, 5) for j in range(-4, 5)}
        s = spl.GroundSpline(spl.KnotGrid(d), points)
        x, y = 1.3, -2.1
        z = spl.eval_height(s, x, y)
        assert z == pytest.approx(slope * x, abs=1e-12)
        tilt = tilt_from_normal(spl.surface_normal(s, x, y), 0.0)
        assert abs(tilt[1]) < 1e-12
        r = spl.constraint_residual(s, np.array([x, y, z]), 0.0, tilt)
        np.testing.assert_allclose(r, np.zeros(3), atol=1e-8)

    def test_cross_form_co_zero(self):
        rng = np.random.default_rng(11)
        s = random_spline(rng)
        for _ in range(100):
            x, y = rng.uniform(-10, 10, 2)
            yaw = rng.uniform(-np.pi, np.pi)
            z = spl.eval_height(s, x, y)
            tilt = tilt_from_normal(spl.surface_normal(s, x, y), yaw)
            p_w = np.array([x, y, z])
            assert np.max(np.abs(spl.constraint_residual(s, p_w, yaw, tilt))) < 1e-10
            assert np.max(np.abs(spl.constraint_residual_cross(s, p_w, yaw, tilt))) < 1e-10

    def test_cross_third_component_is_dependent(self):
        # a . (a x b) = 0 pins the third component to the first two whenever
        # the body z and the constraint gradient have nonzero z parts
        rng = np.random.default_rng(12)
        s = random_spline(rng)
        for _ in range(100):
            p_w = np.array([rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-2, 2)])
            yaw = rng.uniform(-np.pi, np.pi)
            r = 0.8 * np.sqrt(rng.uniform())
            a = rng.uniform(0, 2 * np.pi)
            tilt = r * np.array([np.cos(a), np.sin(a)])
            cross = spl.normal_alignment_cross(s, p_w, yaw, tilt)
            z_axis = body_z_in_gravity(yaw, tilt)
            assert z_axis[2] > 0
            predicted_third = -(z_axis[0] * cross[0] + z_axis[1] * cross[1]) / z_axis[2]
            assert cross[2] == pytest.approx(predicted_third, abs=1e-10)

    def test_kron_equals_matrix_form(self):
        rng = np.random.default_rng(13)
        grid = spl.KnotGrid(5.0)
        for _ in range(500):
            net = rng.uniform(-2, 2, (4, 4))
            patch = (int(rng.integers(-4, 4)), int(rng.integers(-4, 4)))
            p_w = np.array(
                [
                    (patch[0] + rng.uniform()) * grid.d,
                    (patch[1] + rng.uniform()) * grid.d,
                    rng.uniform(-2, 2),
                ]
            )
            yaw = rng.uniform(-np.pi, np.pi)
            r = 0.9 * np.sqrt(rng.uniform())
            a = rng.uniform(0, 2 * np.pi)
            tilt = r * np.array([np.cos(a), np.sin(a)])
            matrix = spl.constraint_residual_for_net(net, grid, patch, p_w, yaw, tilt)
            kron = spl.constraint_residual_kron(net, grid, patch, p_w, yaw, tilt)
            np.testing.assert_allclose(kron, matrix, atol=1e-14)


class TestConstraintJacobians:
    def test_control_rows_on_flat_net(self):
        grid = spl.KnotGrid(5.0)
        net = np.full((4, 4), 2.0)
        p_w = np.array([1.0, 2.0, 2.0])
        blocks = spl.constraint_jacobians(net, grid, (0, 0), p_w, 0.3, np.zeros(2))
        pc = spl.patch_coords(grid, p_w[0], p_w[1])
        bu, dbu, _ = spl.basis_rows(pc.u, 3)
        bv, dbv, _ = spl.basis_rows(pc.v, 3)
        np.testing.assert_allclose(blocks.d_c[0], np.kron(bv, bu), atol=1e-15)
        assert blocks.d_c[0].sum() == pytest.approx(1.0, abs=1e-12)

    def test_height_row_z_column_is_minus_one(self):
        rng = np.random.default_rng(14)
        grid = spl.KnotGrid(5.0)
        net = rng.uniform(-2, 2, (4, 4))
        blocks = spl.constraint_jacobians(
            net, grid, (0, 0), np.array([2.0, 1.0, 0.4]), 0.2, np.array([0.1, -0.05])
        )
        assert blocks.d_p[0, 2] == -1.0
        assert blocks.d_p[1, 2] == 0.0
        assert blocks.d_p[2, 2] == 0.0

    def test_all_blocks_match_fd(self):
        from wio.verify import check_constraint_jacobians, check_static_constraint_jacobian

        for result in check_constraint_jacobians(seed=1, cases=25):
            assert result.passed, str(result)
        for result in check_static_constraint_jacobian(seed=1, cases=25):
            assert result.passed, str(result)


class TestLsFitControl:
    @staticmethod
    def poses_on_spline(s, rng, patch, count, lever_z=0.0):
        poses = []
        d = s.grid.d
        for _ in range(count):
            x = (patch[0] + rng.uniform(0.02, 0.98)) * d
            y = (patch[1] + rng.uniform(0.02, 0.98)) * d
            z = spl.eval_height(s, x, y)
            yaw = rng.uniform(-np.pi, np.pi)
            tilt = tilt_from_normal(spl.surface_normal(s, x, y), yaw)
            poses.append((np.array([x, y, z + lever_z]), yaw, tilt))
        return poses

    def test_flat_ground_reproduction(self):
        rng = np.random.default_rng(15)
        grid = spl.KnotGrid(5.0)
        poses = [
            (np.array([rng.uniform(0, 5), rng.uniform(0, 5), 2.0]), rng.uniform(-3, 3), np.zeros(2))
            for _ in range(12)
        ]
        vec_c, _ = spl.ls_fit_control(poses, grid, (0, 0))
        net = spl.net_from_vec(vec_c)
        for p_w, yaw, tilt in poses:
            r = spl.constraint_residual_for_net(net, grid, (0, 0), p_w, yaw, tilt)
            assert abs(r[0]) < 1e-6

    def test_recovers_known_net_residual(self):
        # plain least squares (no ridge) must reproduce noiseless poses exactly
        rng = np.random.default_rng(16)
        s = random_spline(rng)
        patch = (1, -2)
        poses = self.poses_on_spline(s, rng, patch, 20)
        vec_c, residual = spl.ls_fit_control(poses, s.grid, patch, ridge_scale=0.0)
        assert residual < 1e-8
        # the default ridge trades a small reproduction bias for noise
        # robustness; it must stay far below the manifold constraint sigma
        _, ridge_residual = spl.ls_fit_control(poses, s.grid, patch)
        assert ridge_residual < 1e-2
        # held-out reproduction inside the patch
        net = spl.net_from_vec(vec_c)
        for _ in range(20):
            x = (patch[0] + rng.uniform(0.05, 0.95)) * s.grid.d
            y = (patch[1] + rng.uniform(0.05, 0.95)) * s.grid.d
            bu, _, _ = spl.basis_rows(spl.patch_coords(s.grid, x, y).u, 3)
            bv, _, _ = spl.basis_rows(spl.patch_coords(s.grid, x, y).v, 3)
            fitted = float(bu @ net @ bv)
            assert fitted == pytest.approx(spl.eval_height(s, x, y), abs=1e-6)

    def test_single_pose_raises(self):
        with pytest.raises(InsufficientPosesError):
            spl.ls_fit_control(
                [(np.zeros(3), 0.0, np.zeros(2))], spl.KnotGrid(5.0), (0, 0)
            )


class TestControlPointIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(17)
        s = random_spline(rng, d=2.5, span=3)
        path = tmp_path / "net.tsv"
        spl.write_control_points(s, path)
        back = spl.read_control_points(path)
        assert back.grid == s.grid
        assert back.degree == s.degree
        assert back.points == s.points

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("0\t0\t1.0\n")
        with pytest.raises(ParseError):
            spl.read_control_points(path)

    def test_bad_row(self, tmp_path):
        path = tmp_path / "bad2.tsv"
        path.write_text("# d=5 x0=0 y0=0 degree=3\n0\t0\n")
        with pytest.raises(ParseError) as err:
            spl.read_control_points(path)
        assert err.value.line == 2
