"""Pluggable measurement correctors and their calibration diagnostics.

A corrector consumes a fixed-size window of raw samples and produces the
quantities a learned front end would: accelerometer/gyro bias estimates with
window-increment covariances, and a corrected IMU-frame velocity with its
covariance.  Three implementations cover testing needs:

    passthrough  zero biases, raw wheel-model velocity, fixed covariances
    oracle       truth-side-channel biases/velocity plus seeded perturbation
    constant_fit constant biases fit on a stationary calibration segment

All covariances go through the exp(2 zeta) parameterization, so they stay
positive for any finite zeta.  The corrected velocity keeps the additive
structure v_imu = R_wheel_imu @ v_body + delta_v, so a learned corrector that
predicts delta_v drops in unchanged.

Outputs are immutable values; a corrector may run on a different thread from
the filter, which always consumes the latest completed output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attitude import quat_log_error
from .errors import MalformedWindowError, UncalibratedError
from .models import GRAVITY, WheelParams, wheel_body_velocity

# Lower bound applied inside the exp(2 zeta) map; keeps noise-free test
# configurations from producing exact zeros.
SIGMA2_FLOOR = 1e-16


def _zeta(sigma2):
    return 0.5 * np.log(np.maximum(np.asarray(sigma2, dtype=float), SIGMA2_FLOOR))


@dataclass(frozen=True)
class CorrectorOutput:
    """Bias and velocity corrections with log-std (zeta) covariance params."""

    bias_a: np.ndarray  # m/s^2
    bias_w: np.ndarray  # rad/s
    zeta_v_inc: np.ndarray  # log-std of the window velocity increment, per axis
    zeta_q_inc: np.ndarray  # log-std of the window rotation increment, per axis
    v_imu: np.ndarray  # corrected IMU-frame velocity, m/s
    zeta_v: np.ndarray  # log-std of v_imu, per axis

    @property
    def sigma2_v_inc(self):
        return np.exp(2.0 * self.zeta_v_inc)

    @property
    def sigma2_q_inc(self):
        return np.exp(2.0 * self.zeta_q_inc)

    @property
    def sigma2_v(self):
        return np.exp(2.0 * self.zeta_v)


class SampleWindow:
    """Ordered, uniformly spaced measurement window of exactly ``size`` samples."""

    def __init__(self, samples, size):
        samples = tuple(samples)
        if len(samples) != size:
            raise MalformedWindowError(f"window has {len(samples)} samples, expected {size}")
        t = np.array([s.t for s in samples])
        dt = np.diff(t)
        if len(dt) and (dt <= 0).any():
            raise MalformedWindowError("timestamps not strictly increasing")
        if len(dt) and (np.abs(dt - dt[0]) > 1e-6).any():
            raise MalformedWindowError("timestamps not uniform within 1e-6 s")
        self.samples = samples
        self.dt = float(dt[0]) if len(dt) else 0.0

    def __len__(self):
        return len(self.samples)

    @property
    def t_end(self):
        return self.samples[-1].t


class Corrector:
    """Base class: owns the wheel-velocity transfer, subclasses estimate."""

    def __init__(self, wheels: WheelParams, window_size, lever_arm=None):
        self.wheels = wheels
        self.window_size = int(window_size)
        # {}^I t_B: wheel-frame origin in the IMU frame; rotation assumed identity
        self.lever_arm = np.zeros(3) if lever_arm is None else np.asarray(lever_arm, float)

    def raw_body_velocity(self, sample):
        """Nonholonomic wheel-model velocity [v_x, 0, 0] of one sample."""
        v_x, _ = wheel_body_velocity(sample.wheel_l, sample.wheel_r, self.wheels)
        return np.array([v_x, 0.0, 0.0])

    def correct(self, window: SampleWindow) -> CorrectorOutput:
        if len(window) != self.window_size:
            raise MalformedWindowError(
                f"window size {len(window)} != configured {self.window_size}"
            )
        bias_a, bias_w, s2_v_inc, s2_q_inc, delta_v, s2_v = self._estimate(window)
        v_body = self.raw_body_velocity(window.samples[-1])
        v_imu = v_body + delta_v  # wheel->IMU rotation is identity
        return CorrectorOutput(
            bias_a=bias_a,
            bias_w=bias_w,
            zeta_v_inc=_zeta(s2_v_inc),
            zeta_q_inc=_zeta(s2_q_inc),
            v_imu=v_imu,
            zeta_v=_zeta(s2_v),
        )

    def _estimate(self, window):
        raise NotImplementedError


class PassthroughCorrector(Corrector):
    """No learning stand-in: zero biases, rigid-body wheel velocity transfer,
    constant configured covariances."""

    def __init__(
        self,
        wheels,
        window_size,
        lever_arm=None,
        sigma2_v_inc=1e-4,
        sigma2_q_inc=1e-6,
        sigma2_v=1e-4,
    ):
        super().__init__(wheels, window_size, lever_arm)
        self.sigma2_v_inc = np.full(3, sigma2_v_inc, dtype=float)
        self.sigma2_q_inc = np.full(3, sigma2_q_inc, dtype=float)
        self.sigma2_v = np.full(3, sigma2_v, dtype=float)

    def _estimate(self, window):
        gyro = window.samples[-1].gyro
        delta_v = -np.cross(gyro, self.lever_arm)
        return (
            np.zeros(3),
            np.zeros(3),
            self.sigma2_v_inc,
            self.sigma2_q_inc,
            delta_v,
            self.sigma2_v,
        )


class OracleCorrector(Corrector):
    """Truth-fed corrector for closed-loop consistency experiments.

    Reads true biases and IMU-frame velocity from the simulator side channel
    and adds seeded zero-mean perturbation.  Claimed covariances are the true
    ones: sensor white noise accumulated over the window plus the constant
    bias perturbation integrated over it.
    """

    def __init__(
        self,
        wheels,
        window_size,
        truth,
        lever_arm=None,
        sigma_a=0.0,
        sigma_w=0.0,
        perturb_bias_a=0.0,
        perturb_bias_w=0.0,
        perturb_v=0.0,
        seed=0,
    ):
        super().__init__(wheels, window_size, lever_arm)
        self.truth = truth
        self.sigma_a = float(sigma_a)
        self.sigma_w = float(sigma_w)
        self.perturb_bias_a = float(perturb_bias_a)
        self.perturb_bias_w = float(perturb_bias_w)
        self.perturb_v = float(perturb_v)
        self.rng = np.random.default_rng(seed)

    def _truth_index(self, t):
        idx = int(np.searchsorted(self.truth.t, t - 1e-9))
        return min(idx, len(self.truth.t) - 1)

    def _estimate(self, window):
        idx = self._truth_index(window.t_end)
        bias_a = self.truth.bias_a[idx] + self.rng.normal(0.0, self.perturb_bias_a, 3)
        bias_w = self.truth.bias_w[idx] + self.rng.normal(0.0, self.perturb_bias_w, 3)
        v_true = self.truth.v_imu[idx] + self.rng.normal(0.0, self.perturb_v, 3)
        n, dt = self.window_size, window.dt
        span = n * dt
        s2_v_inc = np.full(3, n * dt * dt * self.sigma_a ** 2 + (span * self.perturb_bias_a) ** 2)
        s2_q_inc = np.full(3, n * dt * dt * self.sigma_w ** 2 + (span * self.perturb_bias_w) ** 2)
        s2_v = np.full(3, self.perturb_v ** 2)
        delta_v = v_true - self.raw_body_velocity(window.samples[-1])
        return bias_a, bias_w, s2_v_inc, s2_q_inc, delta_v, s2_v


class ConstantFitCorrector(Corrector):
    """Constant biases estimated from a designated stationary segment.

    calibrate() must run before correct(); it averages the measurement
    residuals of a stationary stretch (expected accelerometer reading at rest
    is R.T g) and keeps the empirical per-axis noise variances.
    """

    def __init__(self, wheels, window_size, lever_arm=None):
        super().__init__(wheels, window_size, lever_arm)
        self._bias_a = None
        self._bias_w = None
        self._sigma2_a = None
        self._sigma2_w = None
        self._sigma2_v = None

    def calibrate(self, samples, rotation=None):
        """Fit biases on stationary ``samples``; ``rotation`` is the (fixed)
        body-to-gravity attitude during the segment, identity tilt if None."""
        samples = list(samples)
        r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        acc = np.array([s.accel for s in samples])
        gyro = np.array([s.gyro for s in samples])
        acc_residual = acc - r.T @ GRAVITY
        self._bias_a = acc_residual.mean(axis=0)
        self._bias_w = gyro.mean(axis=0)
        self._sigma2_a = np.maximum(acc.var(axis=0), SIGMA2_FLOOR)
        self._sigma2_w = np.maximum(gyro.var(axis=0), SIGMA2_FLOOR)
        v_raw = np.array(
            [self.raw_body_velocity(s) - np.cross(s.gyro - self._bias_w, self.lever_arm)
             for s in samples]
        )
        # at rest the transferred velocity should be zero; its spread is the
        # velocity measurement noise
        self._sigma2_v = np.maximum((v_raw ** 2).mean(axis=0), 1e-8)

    def _estimate(self, window):
        if self._bias_a is None:
            raise UncalibratedError("calibrate() must run before correct()")
        n, dt = self.window_size, window.dt
        s2_v_inc = n * dt * dt * self._sigma2_a
        s2_q_inc = n * dt * dt * self._sigma2_w
        gyro = window.samples[-1].gyro - self._bias_w
        delta_v = -np.cross(gyro, self.lever_arm)
        return self._bias_a, self._bias_w, s2_v_inc, s2_q_inc, delta_v, self._sigma2_v


# --- diagnostics -------------------------------------------------------------


def _check_sigma2(sigma2):
    sigma2 = np.asarray(sigma2, dtype=float)
    if (sigma2 <= 0).any():
        raise ValueError("non-positive covariance")
    return sigma2


def gaussian_nll(errors, sigma2):
    """Mean negative log likelihood (up to the constant term):

        (1/2N) sum log det Sigma + (1/2N) sum e.T Sigma^-1 e

    with per-axis diagonal Sigma."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    sigma2 = np.atleast_2d(_check_sigma2(sigma2))
    n = errors.shape[0]
    log_det = np.sum(np.log(sigma2))
    maha = np.sum(errors * errors / sigma2)
    return 0.5 * (log_det + maha) / n


def nll_debias_loss(pred_v_inc, sigma2_v_inc, true_v_inc, pred_q_inc, sigma2_q_inc, true_q_inc):
    """Window-increment losses (L_dv, L_dq) of a de-bias corrector.

    Velocity errors are true minus predicted increments; rotation errors are
    the quaternion-log residuals Log(q_hat^* (x) q) per window.
    """
    l_dv = gaussian_nll(np.asarray(true_v_inc) - np.asarray(pred_v_inc), sigma2_v_inc)
    q_err = np.array(
        [quat_log_error(qh, q) for qh, q in zip(pred_q_inc, true_q_inc)]
    )
    l_dq = gaussian_nll(q_err, sigma2_q_inc)
    return l_dv, l_dq


def nll_velocity_loss(pred_v, sigma2_v, true_v):
    """Corrected-velocity loss of a wheel corrector."""
    return gaussian_nll(np.asarray(true_v) - np.asarray(pred_v), sigma2_v)


def sigma_coverage(errors, sigmas, k=3.0):
    """Per-axis fraction of |error| <= k * sigma; the consistency diagnostic."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    sigmas = np.atleast_2d(np.asarray(sigmas, dtype=float))
    if errors.shape != sigmas.shape:
        raise ValueError(f"length mismatch: {errors.shape} vs {sigmas.shape}")
    return (np.abs(errors) <= k * sigmas).mean(axis=0)
