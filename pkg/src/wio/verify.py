"""First-class numerical oracles: finite differences and Monte Carlo.

Every analytic derivative and the covariance-scaling rule ship with an
independent check runnable on demand.  Each check reports its worst error
against a stated tolerance; the command-line ``verify`` subcommand and the
acceptance tests both run these.

Comparison rule for derivatives: pass iff
    |analytic - fd| <= max(rel_tol * |fd|, abs_tol)
elementwise, with central differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spline as spl
from .models import (
    ImuInput,
    ImuState,
    process_jacobians,
    propagate_state,
    scale_increment_covariance,
)

REL_TOL = 1e-5
ABS_TOL = 1e-8


@dataclass
class CheckResult:
    name: str
    worst: float  # worst normalized error (1.0 == exactly at tolerance)
    passed: bool

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"{flag}  {self.name}: worst normalized error {self.worst:.3e}"


def _fd_jacobian(fn, x, h=1e-6):
    """Central-difference Jacobian of fn: R^n -> R^m."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fn(x))
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        jac[:, i] = (np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2.0 * step)
    return jac


def _normalized_error(analytic, fd, rel=REL_TOL, abs_=ABS_TOL):
    """Max over entries of |a - fd| / max(rel |fd|, abs); <= 1 passes."""
    analytic = np.asarray(analytic, dtype=float)
    fd = np.asarray(fd, dtype=float)
    denom = np.maximum(rel * np.abs(fd), abs_)
    return float(np.max(np.abs(analytic - fd) / denom))


def _random_imu_case(rng):
    tilt = rng.uniform(-0.45, 0.45, 2)
    state = ImuState(
        p=rng.uniform(-20.0, 20.0, 3),
        v=rng.uniform(-3.0, 3.0, 3),
        yaw=rng.uniform(-np.pi, np.pi),
        tilt=tilt,
    )
    u = ImuInput(
        accel=rng.uniform(-3.0, 3.0, 3),
        gyro=rng.uniform(-0.6, 0.6, 3),
        dt=0.01,
    )
    return state, u


def check_process_jacobians(seed=0, cases=100):
    """F and Fn of the discrete step vs central differences."""
    rng = np.random.default_rng(seed)
    worst_f = worst_fn = 0.0
    for _ in range(cases):
        state, u = _random_imu_case(rng)
        f, fn = process_jacobians(state, u)

        def step_state(x):
            return propagate_state(ImuState.from_vector(x), u).as_vector()

        worst_f = max(worst_f, _normalized_error(f, _fd_jacobian(step_state, state.as_vector())))

        def step_noise(n):
            u_n = ImuInput(u.accel - n[0:3], u.gyro - n[3:6], u.dt)
            return propagate_state(state, u_n).as_vector()

        worst_fn = max(worst_fn, _normalized_error(fn, _fd_jacobian(step_noise, np.zeros(6))))
    return [
        CheckResult("process_F_vs_fd", worst_f, worst_f <= 1.0),
        CheckResult("process_Fn_vs_fd", worst_fn, worst_fn <= 1.0),
    ]


def _random_constraint_case(rng, degree=3, d=5.0):
    grid = spl.KnotGrid(d)
    order = degree + 1
    net = rng.uniform(-2.0, 2.0, (order, order))
    patch = (int(rng.integers(-5, 5)), int(rng.integers(-5, 5)))
    radius = 0.8 * np.sqrt(rng.uniform())
    angle = rng.uniform(0.0, 2.0 * np.pi)
    tilt = radius * np.array([np.cos(angle), np.sin(angle)])
    yaw = rng.uniform(-np.pi, np.pi)
    p_imu = np.array(
        [
            grid.x0 + (patch[0] + rng.uniform(0.05, 0.95)) * d,
            grid.y0 + (patch[1] + rng.uniform(0.05, 0.95)) * d,
            rng.uniform(-2.0, 2.0),
        ]
    )
    lever = rng.uniform(-0.3, 0.3, 3)
    return grid, net, patch, p_imu, yaw, tilt, lever


def check_velocity_jacobian(seed=0, cases=100):
    """The velocity observation is a direct state read; its Jacobian is the
    selector [0 I 0], checked against finite differences of that read."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    h = np.zeros((3, 9))
    h[:, 3:6] = np.eye(3)
    for _ in range(cases):
        state, _ = _random_imu_case(rng)

        def observe(x):
            return ImuState.from_vector(x).v

        worst = max(worst, _normalized_error(h, _fd_jacobian(observe, state.as_vector())))
    return [CheckResult("velocity_H_vs_fd", worst, worst <= 1.0)]


def check_constraint_jacobians(seed=0, cases=100, degree=3):
    """Active-row blocks (pose and control Jacobians) vs finite differences."""
    rng = np.random.default_rng(seed)
    worst_pose = worst_c = 0.0
    for _ in range(cases):
        grid, net, patch, p_imu, yaw, tilt, lever = _random_constraint_case(rng, degree)
        blocks = spl.constraint_jacobians(
            net, grid, patch, p_imu, yaw, tilt, lever_arm=lever, degree=degree
        )

        def res_pose(x):
            from .attitude import rotation_from_yaw_tilt

            p_w = x[0:3] + rotation_from_yaw_tilt(x[3], x[4:6], check=False) @ lever
            return spl.constraint_residual_for_net(net, grid, patch, p_w, x[3], x[4:6], degree)

        x0 = np.concatenate([p_imu, [yaw], tilt])
        fd_pose = _fd_jacobian(res_pose, x0)
        analytic_pose = np.hstack([blocks.d_p, blocks.d_yaw[:, None], blocks.d_tilt])
        worst_pose = max(worst_pose, _normalized_error(analytic_pose, fd_pose))

        from .attitude import rotation_from_yaw_tilt

        p_w0 = p_imu + rotation_from_yaw_tilt(yaw, tilt) @ lever

        def res_c(vec_c):
            return spl.constraint_residual_for_net(
                spl.net_from_vec(vec_c, degree), grid, patch, p_w0, yaw, tilt, degree
            )

        fd_c = _fd_jacobian(res_c, net.flatten(order="F"))
        worst_c = max(worst_c, _normalized_error(blocks.d_c, fd_c))
    return [
        CheckResult("constraint_pose_jacobian_vs_fd", worst_pose, worst_pose <= 1.0),
        CheckResult("constraint_control_jacobian_vs_fd", worst_c, worst_c <= 1.0),
    ]


def check_static_constraint_jacobian(seed=0, cases=100, degree=3):
    """Static-row structure: rows differentiate only through the optimized
    subset of the net (the selection split), frozen points contribute nothing."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    order = degree + 1
    n = order * order
    for _ in range(cases):
        grid, net, patch, p_imu, yaw, tilt, _ = _random_constraint_case(rng, degree)
        p_w = p_imu  # frozen poses enter with their stored contact point
        blocks = spl.constraint_jacobians(
            net, grid, patch, p_w, yaw, tilt, lever_arm=None, degree=degree
        )
        active = rng.permutation(n)[: int(rng.integers(1, n + 1))]
        frozen_vec = net.flatten(order="F")

        def res_active(sub):
            vec = frozen_vec.copy()
            vec[active] = sub
            return spl.constraint_residual_for_net(
                spl.net_from_vec(vec, degree), grid, patch, p_w, yaw, tilt, degree
            )

        fd = _fd_jacobian(res_active, frozen_vec[active])
        worst = max(worst, _normalized_error(blocks.d_c[:, active], fd))
    return [CheckResult("static_constraint_selection_vs_fd", worst, worst <= 1.0)]


def jacobians_suite(seed=0, cases=100):
    results = []
    results += check_process_jacobians(seed, cases)
    results += check_velocity_jacobian(seed, cases)
    results += check_constraint_jacobians(seed, cases)
    results += check_static_constraint_jacobian(seed, cases)
    return results


# --- covariance scaling (Monte Carlo) ----------------------------------------


def _mc_velocity_increments(rng, n_windows, n, dt, sigma_a, yaw_rate=0.1):
    """Accumulate white accelerometer noise through rotating frames."""
    yaw = (np.arange(n) * yaw_rate * dt)[None, :, None]
    noise = rng.normal(0.0, 1.0, (n_windows, n, 3)) * sigma_a
    c, s = np.cos(yaw), np.sin(yaw)
    rotated = np.concatenate(
        [
            c * noise[:, :, 0:1] - s * noise[:, :, 1:2],
            s * noise[:, :, 0:1] + c * noise[:, :, 1:2],
            noise[:, :, 2:3],
        ],
        axis=2,
    )
    return rotated.sum(axis=1) * dt


def _mc_rotation_increments(rng, n_windows, n, dt, sigma_w, omega0):
    """Quaternion-integrate (omega0 + noise) and (omega0) in parallel; return
    the per-window rotation-vector differences."""

    def qmul(a, b):
        w = a[:, 0] * b[:, 0] - np.sum(a[:, 1:] * b[:, 1:], axis=1)
        xyz = (
            a[:, :1] * b[:, 1:]
            + b[:, :1] * a[:, 1:]
            + np.cross(a[:, 1:], b[:, 1:])
        )
        return np.column_stack([w, xyz])

    q_noisy = np.zeros((n_windows, 4))
    q_clean = np.zeros((n_windows, 4))
    q_noisy[:, 0] = q_clean[:, 0] = 1.0
    omega0 = np.asarray(omega0, float)
    for _ in range(n):
        w_noisy = omega0[None, :] + rng.normal(0.0, sigma_w, (n_windows, 3))
        dq = 0.5 * qmul(q_noisy, np.column_stack([np.zeros(n_windows), w_noisy]))
        q_noisy = q_noisy + dq * dt
        q_noisy /= np.linalg.norm(q_noisy, axis=1)[:, None]
        w_clean = np.tile(omega0, (n_windows, 1))
        dq = 0.5 * qmul(q_clean, np.column_stack([np.zeros(n_windows), w_clean]))
        q_clean = q_clean + dq * dt
        q_clean /= np.linalg.norm(q_clean, axis=1)[:, None]
    # Log(q_clean^* (x) q_noisy)
    conj = q_clean * np.array([1.0, -1.0, -1.0, -1.0])
    rel = qmul(conj, q_noisy)
    rel *= np.sign(rel[:, :1])
    norm_v = np.linalg.norm(rel[:, 1:], axis=1)
    angle = 2.0 * np.arctan2(norm_v, rel[:, 0])
    factor = np.where(norm_v > 1e-12, angle / np.where(norm_v > 1e-12, norm_v, 1.0), 2.0)
    return rel[:, 1:] * factor[:, None]


def covariance_suite(seed=0, n_windows=10_000, n=100, dt=0.01, tol=0.05):
    """Monte Carlo check of the window-to-sample covariance scaling rule."""
    rng = np.random.default_rng(seed)
    sigma_a = np.array([0.02, 0.02, 0.05])  # x/y equal: exact under yaw rotation
    v_inc = _mc_velocity_increments(rng, n_windows, n, dt, sigma_a)
    emp_v = v_inc.var(axis=0)
    expected_v = n * dt * dt * sigma_a ** 2
    dev_v = float(np.max(np.abs(emp_v - expected_v) / expected_v))

    sigma_w = 0.002
    q_err = _mc_rotation_increments(rng, n_windows, n, dt, sigma_w, omega0=(0.0, 0.0, 0.2))
    emp_q = q_err.var(axis=0)
    expected_q = n * dt * dt * sigma_w ** 2
    dev_q = float(np.max(np.abs(emp_q - expected_q) / expected_q))

    # round trip through the scaling rule itself
    back_a, back_w = scale_increment_covariance(emp_v, emp_q, n, dt)
    dev_round = float(
        max(
            np.max(np.abs(back_a - sigma_a ** 2) / sigma_a ** 2),
            np.max(np.abs(back_w - sigma_w ** 2) / sigma_w ** 2),
        )
    )
    return [
        CheckResult("mc_velocity_increment_cov", dev_v / tol, dev_v <= tol),
        CheckResult("mc_rotation_increment_cov", dev_q / tol, dev_q <= tol),
        CheckResult("mc_scaling_round_trip", dev_round / tol, dev_round <= tol),
    ]


# --- constraint-form equivalence ----------------------------------------------


def constraints_suite(seed=0, cases=10_000):
    """Simplified rows vs cross-product form: identical zero sets; Kronecker
    (vectorized) assembly equals the matrix form to 1e-14."""
    rng = np.random.default_rng(seed)
    grid = spl.KnotGrid(5.0)
    co_vanish_ok = True
    worst_kron = 0.0
    worst_ratio = 0.0
    for case in range(cases):
        order = 4
        net = rng.uniform(-2.0, 2.0, (order, order))
        patch = (int(rng.integers(-3, 3)), int(rng.integers(-3, 3)))
        x = grid.x0 + (patch[0] + rng.uniform(0.02, 0.98)) * grid.d
        y = grid.y0 + (patch[1] + rng.uniform(0.02, 0.98)) * grid.d
        yaw = rng.uniform(-np.pi, np.pi)
        points = {
            (patch[0] + i, patch[1] + j): net[i, j] for i in range(order) for j in range(order)
        }
        sp = spl.GroundSpline(grid, points)
        on_manifold = case % 2 == 0
        if on_manifold:
            z = spl.eval_height(sp, x, y)
            from .attitude import tilt_from_normal

            tilt = tilt_from_normal(spl.surface_normal(sp, x, y), yaw)
        else:
            radius = 0.9 * np.sqrt(rng.uniform())
            ang = rng.uniform(0.0, 2.0 * np.pi)
            tilt = radius * np.array([np.cos(ang), np.sin(ang)])
            z = rng.uniform(-2.0, 2.0)
        p_w = np.array([x, y, z])
        simplified = spl.constraint_residual(sp, p_w, yaw, tilt)
        cross = spl.constraint_residual_cross(sp, p_w, yaw, tilt)
        for a, b in zip(simplified, cross):
            if (abs(a) < 1e-10) != (abs(b) < 1e-10):
                co_vanish_ok = False
        # alignment rows differ from the cross components only by the positive
        # factor sigma / (1 - |s|^2) and a sign
        s1, s2 = tilt
        factor = (1.0 - s1 * s1 - s2 * s2) / (1.0 + s1 * s1 + s2 * s2)
        for row, comp in ((1, 1), (2, 2)):
            lhs = abs(simplified[row]) * factor
            rhs = abs(cross[comp])
            worst_ratio = max(worst_ratio, abs(lhs - rhs))
        kron = spl.constraint_residual_kron(net, grid, patch, p_w, yaw, tilt)
        worst_kron = max(worst_kron, float(np.max(np.abs(kron - simplified))))
    return [
        CheckResult("constraint_co_vanish", 0.0 if co_vanish_ok else 1.0, co_vanish_ok),
        CheckResult("constraint_magnitude_ratio", worst_ratio / 1e-9, worst_ratio <= 1e-9),
        CheckResult("constraint_kron_vs_matrix", worst_kron / 1e-14, worst_kron <= 1e-14),
    ]


SUITES = {
    "jacobians": jacobians_suite,
    "covariance": covariance_suite,
    "constraints": constraints_suite,
}
