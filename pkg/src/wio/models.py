"""Vehicle kinematics: wheel odometer geometry and the IMU process model.

State ordering is fixed repo-wide as (p, v, psi, s):

    p   position in the gravity frame, m          indices 0:3
    v   velocity in the IMU frame, m/s            indices 3:6
    psi yaw angle, rad                            index  6
    s   stereographic tilt pair                   indices 7:9

Every Jacobian block in this module and downstream is documented against this
order.  Gravity is ``GRAVITY = (0, 0, -9.8)`` m/s^2 in the gravity frame; the
accelerometer convention is ``a_meas = R.T (a_world + g) + bias + noise``, so
at rest a level accelerometer reads R.T g.

The filter propagates with one explicit forward-Euler step per sample (the
Jacobians below differentiate exactly that step); the simulator integrates
truth with RK4 at a higher rate so model error stays attributable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attitude import (
    quat_identity,
    quat_multiply,
    rotation_from_yaw_tilt,
    tilt_kinematics,
    tilt_rotation,
    tilt_rotation_partials,
    yaw_rotation,
    yaw_rotation_partial,
)

GRAVITY = np.array([0.0, 0.0, -9.8])

# Explicit-Euler validity band for the 100 Hz class of sensors this targets.
MAX_STEP_S = 0.05


def skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


@dataclass(frozen=True)
class WheelParams:
    """Two-wheel geometry: radii r_l, r_r and wheelbase w_b, all meters."""

    r_l: float
    r_r: float
    w_b: float

    def __post_init__(self):
        if min(self.r_l, self.r_r, self.w_b) <= 0:
            raise ValueError("wheel radii and wheelbase must be positive")


def wheel_body_velocity(omega_l, omega_r, params: WheelParams):
    """Forward speed v_x (m/s) and yaw rate omega_z (rad/s) from wheel speeds.

    v_x = (omega_l r_l + omega_r r_r) / 2
    w_z = (omega_r r_r - omega_l r_l) / w_b
    """
    sl = omega_l * params.r_l
    sr = omega_r * params.r_r
    return 0.5 * (sl + sr), (sr - sl) / params.w_b


def wheel_speeds_from_body(v_x, omega_z, params: WheelParams):
    """Algebraic inverse of wheel_body_velocity; used by the simulator."""
    sl = v_x - 0.5 * omega_z * params.w_b
    sr = v_x + 0.5 * omega_z * params.w_b
    return sl / params.r_l, sr / params.r_r


@dataclass
class ImuState:
    """IMU mean state: position (gravity frame), velocity (IMU frame), yaw, tilt."""

    p: np.ndarray
    v: np.ndarray
    yaw: float
    tilt: np.ndarray

    def copy(self):
        return ImuState(self.p.copy(), self.v.copy(), float(self.yaw), self.tilt.copy())

    def as_vector(self):
        return np.concatenate([self.p, self.v, [self.yaw], self.tilt])

    @staticmethod
    def from_vector(x):
        x = np.asarray(x, dtype=float)
        return ImuState(x[0:3].copy(), x[3:6].copy(), float(x[6]), x[7:9].copy())

    def rotation(self):
        return rotation_from_yaw_tilt(self.yaw, self.tilt)


@dataclass(frozen=True)
class ImuInput:
    """Bias-corrected IMU sample driving one propagation step.

    accel: specific-force-convention acceleration in the IMU frame, m/s^2
    gyro:  angular rate in the IMU frame, rad/s
    dt:    step, s (must stay inside the explicit-Euler band)
    """

    accel: np.ndarray
    gyro: np.ndarray
    dt: float

    def __post_init__(self):
        if not 0.0 <= self.dt <= MAX_STEP_S:
            raise ValueError(f"dt {self.dt} outside [0, {MAX_STEP_S}] s")


@dataclass(frozen=True)
class MeasurementSample:
    """One raw sensor sample: accelerometer, gyroscope, wheel speeds."""

    t: float
    accel: np.ndarray  # m/s^2, IMU frame
    gyro: np.ndarray  # rad/s, IMU frame
    wheel_l: float  # rad/s
    wheel_r: float  # rad/s


def propagate_state(x: ImuState, u: ImuInput) -> ImuState:
    """One forward-Euler step of the continuous model

        p_dot  = R v
        v_dot  = a - R.T g - w x v
        psi_dot, s_dot per tilt_kinematics
    """
    r = rotation_from_yaw_tilt(x.yaw, x.tilt)
    psi_dot, s_dot = tilt_kinematics(x.tilt, u.gyro)
    p_next = x.p + r @ x.v * u.dt
    v_next = x.v + (u.accel - r.T @ GRAVITY - np.cross(u.gyro, x.v)) * u.dt
    return ImuState(p_next, v_next, x.yaw + psi_dot * u.dt, x.tilt + s_dot * u.dt)


def process_jacobians(x: ImuState, u: ImuInput):
    """Jacobians (F, Fn) of the discrete step w.r.t. state and input noise.

    F is 9x9 over (p, v, psi, s); Fn is 9x6 over noise (n_a, n_w) entering as
    accel = a_true - n_a, gyro = w_true - n_w.
    """
    dt = u.dt
    s1, s2 = float(x.tilt[0]), float(x.tilt[1])
    w1, w2, w3 = (float(c) for c in u.gyro)
    r_psi = yaw_rotation(x.yaw)
    r_phi = tilt_rotation(x.tilt)
    r = r_psi @ r_phi
    dphi_s1, dphi_s2 = tilt_rotation_partials(x.tilt)

    f = np.eye(9)
    # position row
    f[0:3, 3:6] = r * dt
    f[0:3, 6] = yaw_rotation_partial(x.yaw) @ r_phi @ x.v * dt
    f[0:3, 7] = r_psi @ dphi_s1 @ x.v * dt
    f[0:3, 8] = r_psi @ dphi_s2 @ x.v * dt
    # velocity row: v' = v + (a - R.T g - w x v) dt; R.T g = Rphi.T g
    f[3:6, 3:6] = np.eye(3) - skew(u.gyro) * dt
    f[3:6, 7] = -dphi_s1.T @ GRAVITY * dt
    f[3:6, 8] = -dphi_s2.T @ GRAVITY * dt
    # yaw row: psi' = psi + (-s1 w1 - s2 w2 + w3) dt
    f[6, 7] = -w1 * dt
    f[6, 8] = -w2 * dt
    # tilt row
    f[7:9, 7:9] += (
        np.array(
            [
                [w2 * s1 - w1 * s2, -w1 * s1 - w2 * s2 + w3],
                [w1 * s1 + w2 * s2 - w3, w2 * s1 - w1 * s2],
            ]
        )
        * dt
    )

    fn = np.zeros((9, 6))
    fn[3:6, 0:3] = -np.eye(3) * dt
    fn[3:6, 3:6] = -skew(x.v) * dt
    fn[6, 3:6] = np.array([s1, s2, -1.0]) * dt
    fn[7:9, 3:6] = (
        np.array(
            [
                [s1 * s2, 0.5 * (-1.0 - s1 * s1 + s2 * s2), -s2],
                [0.5 * (1.0 - s1 * s1 + s2 * s2), -s1 * s2, s1],
            ]
        )
        * dt
    )
    return f, fn


def scale_increment_covariance(sigma2_v, sigma2_q, n, dt):
    """Per-sample IMU noise covariances from window-increment covariances.

    Over a window of n uniform steps dt, white accelerometer noise of
    covariance S accumulates into a velocity increment of covariance
    n dt^2 S (same for gyro noise and the rotation increment), so

        sigma2_a = sigma2_v / (n dt^2),  sigma2_w = sigma2_q / (n dt^2).
    """
    if n < 1:
        raise ValueError("window size must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    scale = 1.0 / (n * dt * dt)
    return np.asarray(sigma2_v, dtype=float) * scale, np.asarray(sigma2_q) * scale


def integrate_increments(samples, bias_a, bias_w, rotations):
    """Forward-Euler window increments from raw samples and bias estimates.

    rotations supplies the body-to-gravity rotation per sample (ground truth
    in the simulator).  Returns (velocity increment in the gravity frame,
    relative rotation quaternion over the window).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty measurement window")
    bias_a = np.asarray(bias_a, dtype=float)
    bias_w = np.asarray(bias_w, dtype=float)
    v_inc = np.zeros(3)
    q = quat_identity()
    for idx in range(len(samples) - 1):
        s = samples[idx]
        dt = samples[idx + 1].t - s.t
        r = rotations[idx]
        v_inc = v_inc + (r @ (s.accel - bias_a) - GRAVITY) * dt
        w = s.gyro - bias_w
        dq = 0.5 * np.array([-(q[1:] @ w), *(q[0] * w + np.cross(q[1:], w))])
        q = q + dq * dt
        q = q / np.linalg.norm(q)
    return v_inc, q
