"""Synthetic world and sensor-log generation.

The simulator builds three things, all fully seeded:

    make_ground             a smoothed random-field control net
    make_trajectory         a dynamically consistent ride over it
    synthesize_measurements noisy IMU/wheel samples plus the truth side channel

Truth kinematics are produced at 10x the sensor rate (the path parameter is
integrated with RK4 there) and decimated, so simulator truncation error stays
well below the filter's forward-Euler error.  Poses ride exactly on the
ground spline: contact height equals the surface and tilt comes from the
surface normal, which keeps every truth sample on the constraint manifold.

Accelerometer convention matches the measurement model used by the filter:
``a_meas = R.T (a_world + g) + bias + noise`` with g = (0, 0, -9.8).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import gaussian_filter

from .attitude import tilt_rotation  # noqa: F401  (re-exported convenience)
from .models import GRAVITY, MeasurementSample, WheelParams, wheel_speeds_from_body
from .spline import GroundSpline, KnotGrid

MAX_GROUND_SLOPE = 0.3


@dataclass
class NoiseModel:
    """Sensor corruption parameters (all standard deviations, SI units)."""

    sigma_a: float = 0.0  # accel white noise per sample, m/s^2
    sigma_w: float = 0.0  # gyro white noise per sample, rad/s
    sigma_wheel: float = 0.0  # per-wheel speed noise, rad/s
    bias_a: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m/s^2
    bias_w: np.ndarray = field(default_factory=lambda: np.zeros(3))  # rad/s
    walk_a: float = 0.0  # accel bias random-walk intensity, m/s^2/sqrt(s)
    walk_w: float = 0.0  # gyro bias random-walk intensity, rad/s/sqrt(s)
    slip: float = 0.0  # forward-speed deficit per rad/s of yaw rate

    def __post_init__(self):
        self.bias_a = np.asarray(self.bias_a, dtype=float)
        self.bias_w = np.asarray(self.bias_w, dtype=float)
        for name in ("sigma_a", "sigma_w", "sigma_wheel", "walk_a", "walk_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class TruthRecord:
    """Per-sample ground truth: the oracle side channel."""

    t: np.ndarray
    p: np.ndarray  # IMU position, gravity frame (N, 3)
    yaw: np.ndarray
    tilt: np.ndarray  # (N, 2)
    v_imu: np.ndarray  # IMU-frame velocity (N, 3)
    a_world: np.ndarray  # gravity-frame acceleration of the IMU point (N, 3)
    omega: np.ndarray  # body angular rate (N, 3)
    bias_a: np.ndarray  # (N, 3); zero until measurements are synthesized
    bias_w: np.ndarray

    def __len__(self):
        return len(self.t)


def make_ground(seed, extent, d=5.0, amplitude=0.5, smoothness=2.0) -> GroundSpline:
    """Seeded rolling ground: smoothed white noise on the control lattice.

    ``extent`` is the side of the covered square centered on the origin;
    heights are scaled to ``amplitude`` and rescaled further if the slope
    anywhere exceeds the MAX_GROUND_SLOPE budget.
    """
    if extent < 3 * d:
        raise ValueError(f"extent {extent} too small for knot interval {d}")
    rng = np.random.default_rng(seed)
    half = int(np.ceil(0.5 * extent / d)) + 4  # net + neighborhood margin
    n = 2 * half + 1
    heights = rng.standard_normal((n, n))
    if smoothness > 0:
        heights = gaussian_filter(heights, sigma=smoothness, mode="reflect")
    peak = np.abs(heights).max()
    heights = heights * (amplitude / peak) if peak > 0 and amplitude > 0 else heights * 0.0
    grid = KnotGrid(d)
    spline = GroundSpline(
        grid,
        {(i - half, j - half): float(heights[i, j]) for i in range(n) for j in range(n)},
    )
    if amplitude > 0:
        surf = _BatchSurface(spline)
        span = (half - 4) * d  # keep every probed patch's net inside the lattice
        xs = np.linspace(-span, span, 120)
        xx, yy = np.meshgrid(xs, xs)
        gx, gy = surf.gradient(xx.ravel(), yy.ravel())
        worst = float(np.max(np.hypot(gx, gy)))
        if worst >= MAX_GROUND_SLOPE:
            scale = 0.95 * MAX_GROUND_SLOPE / worst
            for key in spline.points:
                spline.points[key] *= scale
            surf = _BatchSurface(spline)
    return spline


class _BatchSurface:
    """Vectorized height/gradient/hessian evaluation over a dense lattice.

    Simulator-side convenience; the sparse scalar evaluators in the spline
    module stay the reference implementation.
    """

    def __init__(self, spline: GroundSpline):
        keys = np.array(list(spline.points.keys()))
        self.i0, self.j0 = keys[:, 0].min(), keys[:, 1].min()
        ni = keys[:, 0].max() - self.i0 + 1
        nj = keys[:, 1].max() - self.j0 + 1
        self.h = np.full((ni, nj), np.nan)
        for (i, j), v in spline.points.items():
            self.h[i - self.i0, j - self.j0] = v
        self.grid = spline.grid
        self.degree = spline.degree
        from .spline import BASIS

        self.B = BASIS[spline.degree]

    def _prep(self, x, y):
        d = self.grid.d
        tx = (np.asarray(x, float) - self.grid.x0) / d
        ty = (np.asarray(y, float) - self.grid.y0) / d
        gx = np.floor(tx).astype(int)
        gy = np.floor(ty).astype(int)
        u, v = tx - gx, ty - gy
        k = self.degree
        di = np.arange(k + 1)
        nets = self.h[
            (gx[:, None, None] - self.i0) + di[None, :, None],
            (gy[:, None, None] - self.j0) + di[None, None, :],
        ]
        powers = np.arange(k, -1, -1)
        pu = u[:, None] ** powers
        pv = v[:, None] ** powers
        dpu = powers * np.where(powers >= 1, u[:, None] ** np.maximum(powers - 1, 0), 0.0)
        dpv = powers * np.where(powers >= 1, v[:, None] ** np.maximum(powers - 1, 0), 0.0)
        d2pu = powers * (powers - 1) * np.where(
            powers >= 2, u[:, None] ** np.maximum(powers - 2, 0), 0.0
        )
        d2pv = powers * (powers - 1) * np.where(
            powers >= 2, v[:, None] ** np.maximum(powers - 2, 0), 0.0
        )
        return nets, pu @ self.B, pv @ self.B, dpu @ self.B, dpv @ self.B, d2pu @ self.B, d2pv @ self.B

    def height(self, x, y):
        nets, bu, bv, *_ = self._prep(x, y)
        return np.einsum("ni,nij,nj->n", bu, nets, bv)

    def gradient(self, x, y):
        nets, bu, bv, dbu, dbv, _, _ = self._prep(x, y)
        k = 1.0 / self.grid.d
        return (
            k * np.einsum("ni,nij,nj->n", dbu, nets, bv),
            k * np.einsum("ni,nij,nj->n", bu, nets, dbv),
        )


def _rotations(yaw, tilt):
    """Batched body-to-gravity rotations for arrays of yaw and tilt."""
    yaw = np.asarray(yaw, float)
    s1, s2 = tilt[:, 0], tilt[:, 1]
    sigma = 1.0 + s1 * s1 + s2 * s2
    r_phi = np.empty((len(yaw), 3, 3))
    r_phi[:, 0, 0] = 1 - s1 * s1 + s2 * s2
    r_phi[:, 0, 1] = -2 * s1 * s2
    r_phi[:, 0, 2] = 2 * s1
    r_phi[:, 1, 0] = -2 * s1 * s2
    r_phi[:, 1, 1] = 1 + s1 * s1 - s2 * s2
    r_phi[:, 1, 2] = 2 * s2
    r_phi[:, 2, 0] = -2 * s1
    r_phi[:, 2, 1] = -2 * s2
    r_phi[:, 2, 2] = 1 - s1 * s1 - s2 * s2
    r_phi /= sigma[:, None, None]
    c, s = np.cos(yaw), np.sin(yaw)
    r_psi = np.zeros((len(yaw), 3, 3))
    r_psi[:, 0, 0] = c
    r_psi[:, 0, 1] = -s
    r_psi[:, 1, 0] = s
    r_psi[:, 1, 1] = c
    r_psi[:, 2, 2] = 1.0
    return np.einsum("nij,njk->nik", r_psi, r_phi)


def _rotvec_between(r_a, r_b):
    """Rotation vectors of R_a.T @ R_b for stacked rotations (small angles)."""
    rel = np.einsum("nji,njk->nik", r_a, r_b)
    tr = np.clip(rel[:, 0, 0] + rel[:, 1, 1] + rel[:, 2, 2], -1.0, 3.0)
    angle = np.arccos(np.clip(0.5 * (tr - 1.0), -1.0, 1.0))
    vee = 0.5 * np.stack(
        [
            rel[:, 2, 1] - rel[:, 1, 2],
            rel[:, 0, 2] - rel[:, 2, 0],
            rel[:, 1, 0] - rel[:, 0, 1],
        ],
        axis=1,
    )
    sin_a = np.sin(angle)
    factor = np.where(sin_a > 1e-8, angle / np.where(sin_a > 1e-8, sin_a, 1.0), 1.0 + angle ** 2 / 6.0)
    return vee * factor[:, None]


def make_trajectory(
    spline: GroundSpline, path, speed, rate=100.0, lever_arm=None, oversample=10
) -> TruthRecord:
    """Ground-riding truth along a waypoint path at constant speed.

    ``path`` is an (M, 2) waypoint array; a closed loop (first == last point)
    becomes a periodic spline.  The contact point follows the path with z from
    the surface, yaw along the tangent, and tilt from the surface normal, so
    every sample satisfies the contact constraint.  Derivatives and body
    rates come from the oversampled sequence and are decimated to ``rate``.
    """
    path = np.asarray(path, dtype=float)
    surf = _BatchSurface(spline)
    t_w = np.zeros(3) if lever_arm is None else np.asarray(lever_arm, dtype=float)

    closed = np.allclose(path[0], path[-1])
    chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))])
    path_spline = CubicSpline(chord, path, bc_type="periodic" if closed else "natural", axis=0)
    d_path = path_spline.derivative()

    # arc length-consistent time parameterization via RK4 on tau_dot = v/|r'|
    tau_grid = np.linspace(0.0, chord[-1], max(4 * len(path), 4000))
    g_grid = np.linalg.norm(d_path(tau_grid), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (g_grid[1:] + g_grid[:-1]) * np.diff(tau_grid))])
    total_len = arc[-1]
    duration = total_len / speed
    n_samples = int(np.floor(duration * rate))
    fine_dt = 1.0 / (rate * oversample)
    n_fine = (n_samples - 1) * oversample + 1

    def g_of(tau):
        return np.interp(np.mod(tau, chord[-1]) if closed else tau, tau_grid, g_grid)

    taus = np.empty(n_fine + 4)
    tau = 0.0
    # two backward steps provide interior central differences at t = 0
    back = tau
    for i in range(2):
        k1 = speed / g_of(back)
        k2 = speed / g_of(back - 0.5 * fine_dt * k1)
        k3 = speed / g_of(back - 0.5 * fine_dt * k2)
        k4 = speed / g_of(back - fine_dt * k3)
        back -= fine_dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        taus[1 - i] = back
    for i in range(n_fine + 2):
        taus[i + 2] = tau
        k1 = speed / g_of(tau)
        k2 = speed / g_of(tau + 0.5 * fine_dt * k1)
        k3 = speed / g_of(tau + 0.5 * fine_dt * k2)
        k4 = speed / g_of(tau + fine_dt * k3)
        tau += fine_dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    tau_eval = np.mod(taus, chord[-1]) if closed else taus
    xy = path_spline(tau_eval)
    tangent = d_path(tau_eval)
    z = surf.height(xy[:, 0], xy[:, 1])
    contact = np.column_stack([xy, z])

    yaw = np.unwrap(np.arctan2(tangent[:, 1], tangent[:, 0]))
    sx, sy = surf.gradient(xy[:, 0], xy[:, 1])
    normal = np.column_stack([-sx, -sy, np.ones_like(sx)])
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    # inverse stereographic projection of the yaw-derotated normal
    c, s = np.cos(yaw), np.sin(yaw)
    mx = c * normal[:, 0] + s * normal[:, 1]
    my = -s * normal[:, 0] + c * normal[:, 1]
    mz = normal[:, 2]
    tilt = np.column_stack([mx / (1.0 + mz), my / (1.0 + mz)])

    rot = _rotations(yaw, tilt)
    p_imu = contact - np.einsum("nij,j->ni", rot, t_w)

    v_world = (p_imu[2:] - p_imu[:-2]) / (2.0 * fine_dt)
    a_world = (p_imu[2:] - 2.0 * p_imu[1:-1] + p_imu[:-2]) / fine_dt ** 2
    omega = _rotvec_between(rot[:-2], rot[2:]) / (2.0 * fine_dt)

    # interior fine index 1..n_fine+2 maps to t = (i-1)*fine_dt - fine_dt
    sensor_idx = 1 + np.arange(n_samples) * oversample  # into the trimmed arrays
    rot_in = rot[1:-1]
    v_imu = np.einsum("nji,nj->ni", rot_in[sensor_idx], v_world[sensor_idx])
    n = n_samples
    return TruthRecord(
        t=np.arange(n) / rate,
        p=p_imu[1:-1][sensor_idx],
        yaw=yaw[1:-1][sensor_idx],
        tilt=tilt[1:-1][sensor_idx],
        v_imu=v_imu,
        a_world=a_world[sensor_idx],
        omega=omega[sensor_idx],
        bias_a=np.zeros((n, 3)),
        bias_w=np.zeros((n, 3)),
    )


def synthesize_measurements(
    truth: TruthRecord,
    noise: NoiseModel,
    wheels: WheelParams,
    seed,
    lever_arm=None,
):
    """Invert the measurement models over a truth stream.

    Returns (samples, truth_with_biases); the returned truth is a copy whose
    bias arrays hold the actually injected (possibly walking) biases.
    """
    rng = np.random.default_rng(seed)
    n = len(truth)
    dt = float(truth.t[1] - truth.t[0]) if n > 1 else 0.01
    t_w = np.zeros(3) if lever_arm is None else np.asarray(lever_arm, dtype=float)

    bias_a = np.tile(noise.bias_a, (n, 1))
    bias_w = np.tile(noise.bias_w, (n, 1))
    if noise.walk_a > 0:
        bias_a += np.cumsum(rng.normal(0.0, noise.walk_a * np.sqrt(dt), (n, 3)), axis=0)
    if noise.walk_w > 0:
        bias_w += np.cumsum(rng.normal(0.0, noise.walk_w * np.sqrt(dt), (n, 3)), axis=0)

    rot = _rotations(truth.yaw, truth.tilt)
    acc_clean = np.einsum("nji,nj->ni", rot, truth.a_world + GRAVITY)
    acc = acc_clean + bias_a + rng.normal(0.0, noise.sigma_a, (n, 3))
    gyro = truth.omega + bias_w + rng.normal(0.0, noise.sigma_w, (n, 3))

    # wheel-frame velocity: body velocity transferred to the contact frame
    v_contact = truth.v_imu + np.cross(truth.omega, t_w)
    v_x = v_contact[:, 0] * (1.0 - noise.slip * np.abs(truth.omega[:, 2]))
    w_z = truth.omega[:, 2]
    wl = np.empty(n)
    wr = np.empty(n)
    for k in range(n):
        wl[k], wr[k] = wheel_speeds_from_body(v_x[k], w_z[k], wheels)
    wl += rng.normal(0.0, noise.sigma_wheel, n)
    wr += rng.normal(0.0, noise.sigma_wheel, n)

    samples = [
        MeasurementSample(float(truth.t[k]), acc[k], gyro[k], float(wl[k]), float(wr[k]))
        for k in range(n)
    ]
    truth_out = TruthRecord(
        t=truth.t.copy(),
        p=truth.p.copy(),
        yaw=truth.yaw.copy(),
        tilt=truth.tilt.copy(),
        v_imu=truth.v_imu.copy(),
        a_world=truth.a_world.copy(),
        omega=truth.omega.copy(),
        bias_a=bias_a,
        bias_w=bias_w,
    )
    return samples, truth_out


def figure_eight_waypoints(length=500.0, n_points=400):
    """Closed figure-eight (Gerono lemniscate) sized to the requested arc
    length."""
    theta = np.linspace(0.0, 2.0 * np.pi, 4000)
    unit = np.column_stack([np.sin(theta), np.sin(theta) * np.cos(theta)])
    per_unit = np.sum(np.linalg.norm(np.diff(unit, axis=0), axis=1))
    scale = length / per_unit
    theta = np.linspace(0.0, 2.0 * np.pi, n_points)
    pts = scale * np.column_stack([np.sin(theta), np.sin(theta) * np.cos(theta)])
    pts[-1] = pts[0]
    return pts


def stationary_log(seed, duration, noise: NoiseModel, wheels: WheelParams, rate=100.0):
    """Measurements of a robot parked on level ground; for bias calibration."""
    n = int(duration * rate)
    t = np.arange(n) / rate
    truth = TruthRecord(
        t=t,
        p=np.zeros((n, 3)),
        yaw=np.zeros(n),
        tilt=np.zeros((n, 2)),
        v_imu=np.zeros((n, 3)),
        a_world=np.zeros((n, 3)),
        omega=np.zeros((n, 3)),
        bias_a=np.zeros((n, 3)),
        bias_w=np.zeros((n, 3)),
    )
    return synthesize_measurements(truth, noise, wheels, seed)
