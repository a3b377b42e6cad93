import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from wio import corrector as cor
from wio.errors import MalformedWindowError, UncalibratedError
from wio.models import GRAVITY, MeasurementSample, WheelParams
from wio.synth import NoiseModel, stationary_log

WHEELS = WheelParams(0.3, 0.3, 0.6)


def window_of(samples, n=None):
    n = len(samples) if n is None else n
    return cor.SampleWindow(samples[-n:], n)


def straight_drive_samples(n, v_x, dt=0.01, gyro=None):
    # level attitude at constant speed: the measured acceleration is R.T g = g
    gyro = np.zeros(3) if gyro is None else np.asarray(gyro, float)
    wl = wr = v_x / WHEELS.r_l
    return [
        MeasurementSample(k * dt, GRAVITY.copy(), gyro.copy(), wl, wr) for k in range(n)
    ]


class TestSampleWindow:
    def test_size_checked(self):
        samples = straight_drive_samples(10, 1.0)
        with pytest.raises(MalformedWindowError):
            cor.SampleWindow(samples, 20)

    def test_uniformity_checked(self):
        samples = straight_drive_samples(10, 1.0)
        bad = samples[:5] + [
            MeasurementSample(s.t + 0.001, s.accel, s.gyro, s.wheel_l, s.wheel_r)
            for s in samples[5:]
        ]
        with pytest.raises(MalformedWindowError):
            cor.SampleWindow(bad, 10)

    def test_monotonicity_checked(self):
        samples = straight_drive_samples(10, 1.0)
        bad = list(samples)
        bad[3] = MeasurementSample(bad[4].t, bad[3].accel, bad[3].gyro, 0.0, 0.0)
        with pytest.raises(MalformedWindowError):
            cor.SampleWindow(bad, 10)


class TestPassthrough:
    def test_noise_free_velocity_identity(self):
        # level straight drive: the wheel transfer is exact
        v_x = 1.5
        corr = cor.PassthroughCorrector(WHEELS, 50)
        out = corr.correct(window_of(straight_drive_samples(50, v_x)))
        np.testing.assert_allclose(out.v_imu, [v_x, 0.0, 0.0], atol=1e-12)
        np.testing.assert_array_equal(out.bias_a, np.zeros(3))
        np.testing.assert_array_equal(out.bias_w, np.zeros(3))

    def test_lever_arm_transfer(self):
        # v_imu = v_wheel - w x t_B when the wheel frame sits at t_B
        v_x, gyro, lever = 2.0, np.array([0.0, 0.0, 0.8]), np.array([0.4, 0.1, -0.2])
        corr = cor.PassthroughCorrector(WHEELS, 30, lever_arm=lever)
        out = corr.correct(window_of(straight_drive_samples(30, v_x, gyro=gyro)))
        expected = np.array([v_x, 0.0, 0.0]) - np.cross(gyro, lever)
        np.testing.assert_allclose(out.v_imu, expected, atol=1e-12)

    def test_constant_covariances(self):
        corr = cor.PassthroughCorrector(WHEELS, 20, sigma2_v=4e-4)
        out = corr.correct(window_of(straight_drive_samples(20, 1.0)))
        np.testing.assert_allclose(out.sigma2_v, np.full(3, 4e-4), rtol=1e-12)


class _Truth:
    """Minimal truth side channel for the oracle corrector."""

    def __init__(self, n, dt, bias_a, bias_w, v_imu):
        self.t = np.arange(n) * dt
        self.bias_a = np.tile(bias_a, (n, 1))
        self.bias_w = np.tile(bias_w, (n, 1))
        self.v_imu = np.tile(v_imu, (n, 1))


class TestOracle:
    def test_exact_biases_without_perturbation(self):
        bias_a = np.array([0.02, -0.01, 0.005])
        bias_w = np.array([0.001, 0.002, -0.0005])
        truth = _Truth(100, 0.01, bias_a, bias_w, np.array([1.0, 0.0, 0.0]))
        corr = cor.OracleCorrector(WHEELS, 100, truth)
        out = corr.correct(window_of(straight_drive_samples(100, 1.0)))
        np.testing.assert_array_equal(out.bias_a, bias_a)
        np.testing.assert_array_equal(out.bias_w, bias_w)
        np.testing.assert_allclose(out.v_imu, [1.0, 0.0, 0.0], atol=1e-15)

    def test_perturbation_is_seeded(self):
        truth = _Truth(100, 0.01, np.zeros(3), np.zeros(3), np.zeros(3))
        window = window_of(straight_drive_samples(100, 0.0))
        outs = [
            cor.OracleCorrector(WHEELS, 100, truth, perturb_bias_a=1e-3, seed=42).correct(window)
            for _ in range(2)
        ]
        np.testing.assert_array_equal(outs[0].bias_a, outs[1].bias_a)
        assert np.any(outs[0].bias_a != 0.0)

    def test_claimed_covariance_reflects_noise(self):
        truth = _Truth(100, 0.01, np.zeros(3), np.zeros(3), np.zeros(3))
        corr = cor.OracleCorrector(WHEELS, 100, truth, sigma_a=0.02, perturb_bias_a=0.002)
        out = corr.correct(window_of(straight_drive_samples(100, 0.0)))
        n, dt = 100, 0.01
        expected = n * dt * dt * 0.02 ** 2 + (n * dt * 0.002) ** 2
        np.testing.assert_allclose(out.sigma2_v_inc, np.full(3, expected), rtol=1e-9)


class TestConstantFit:
    def test_uncalibrated_raises(self):
        corr = cor.ConstantFitCorrector(WHEELS, 10)
        with pytest.raises(UncalibratedError):
            corr.correct(window_of(straight_drive_samples(10, 0.0)))

    def test_stationary_bias_recovery(self):
        # standard-error bound over 20 seeds; allow the statistically expected
        # number of 3-sigma exceedances across all seed/axis combinations
        sigma, n = 0.01, 1000
        bound = 3.0 * sigma / np.sqrt(n)
        bias_a = np.array([0.02, -0.01, 0.005])
        bias_w = np.array([0.001, -0.002, 0.0005])
        noise = NoiseModel(sigma_a=sigma, sigma_w=sigma, bias_a=bias_a, bias_w=bias_w)
        exceed = 0
        worst = 0.0
        for seed in range(20):
            samples, _ = stationary_log(seed, 10.0, noise, WHEELS)
            corr = cor.ConstantFitCorrector(WHEELS, 100)
            corr.calibrate(samples)
            err = np.concatenate(
                [np.abs(corr._bias_a - bias_a), np.abs(corr._bias_w - bias_w)]
            )
            exceed += int(np.sum(err > bound))
            worst = max(worst, float(err.max()))
        assert exceed <= 2, f"{exceed} exceedances of the 3-sigma bound"
        assert worst < 5.0 * sigma / np.sqrt(n)

    def test_empirical_covariance_positive(self):
        noise = NoiseModel(sigma_a=0.01, sigma_w=0.001)
        samples, _ = stationary_log(0, 5.0, noise, WHEELS)
        corr = cor.ConstantFitCorrector(WHEELS, 100)
        corr.calibrate(samples)
        out = corr.correct(window_of(samples, 100))
        assert (out.sigma2_v_inc > 0).all()
        assert (out.sigma2_q_inc > 0).all()
        assert (out.sigma2_v > 0).all()


class TestNllLosses:
    def test_zero_error_unit_covariance(self):
        v = np.zeros((4, 3))
        s2 = np.ones((4, 3))
        q = np.tile([1.0, 0.0, 0.0, 0.0], (4, 1))
        l_dv, l_dq = cor.nll_debias_loss(v, s2, v, q, s2, q)
        assert l_dv == pytest.approx(0.0, abs=1e-15)
        assert l_dq == pytest.approx(0.0, abs=1e-15)

    def test_scalar_mahalanobis_case(self):
        pred = np.zeros((1, 3))
        true = np.ones((1, 3))
        s2 = np.ones((1, 3))
        assert cor.nll_velocity_loss(pred, s2, true) == pytest.approx(1.5)

    def test_nonpositive_covariance_rejected(self):
        with pytest.raises(ValueError):
            cor.nll_velocity_loss(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)))

    def test_batch_permutation_invariance(self):
        rng = np.random.default_rng(5)
        err = rng.normal(size=(64, 3))
        s2 = np.exp(rng.normal(size=(64, 3)))
        perm = rng.permutation(64)
        assert cor.gaussian_nll(err, s2) == pytest.approx(
            cor.gaussian_nll(err[perm], s2[perm]), rel=1e-12
        )

    def test_minimum_at_mean_square_error(self):
        # for fixed errors the per-axis NLL in log sigma is convex with the
        # minimum at sigma^2 = MSE; golden-section agrees within 2%
        rng = np.random.default_rng(6)
        errors = rng.normal(0.0, 0.37, size=(10_000, 1))
        mse = float(np.mean(errors ** 2))

        def loss_of_zeta(zeta):
            return cor.gaussian_nll(errors, np.full_like(errors, np.exp(2.0 * zeta)))

        res = minimize_scalar(loss_of_zeta, bracket=(-3.0, 0.0), method="golden")
        sigma2_opt = float(np.exp(2.0 * res.x))
        assert sigma2_opt == pytest.approx(mse, rel=0.02)
        # convexity probe around the minimum
        for delta in (0.2, 0.5):
            assert loss_of_zeta(res.x + delta) > res.fun
            assert loss_of_zeta(res.x - delta) > res.fun


class TestSigmaCoverage:
    def test_zero_errors(self):
        np.testing.assert_array_equal(
            cor.sigma_coverage(np.zeros((10, 3)), np.ones((10, 3))), np.ones(3)
        )

    def test_gaussian_three_sigma(self):
        rng = np.random.default_rng(7)
        sigma = np.array([0.5, 1.0, 2.0])
        errors = rng.normal(0.0, sigma, size=(100_000, 3))
        cov = cor.sigma_coverage(errors, np.tile(sigma, (100_000, 1)), k=3.0)
        np.testing.assert_allclose(cov, np.full(3, 0.9973), atol=0.003)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cor.sigma_coverage(np.zeros((10, 3)), np.zeros((9, 3)))


class TestZetaParameterization:
    def test_positivity_for_any_zeta(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            zeta = rng.uniform(-40, 5, 3)
            out = cor.CorrectorOutput(
                bias_a=np.zeros(3),
                bias_w=np.zeros(3),
                zeta_v_inc=zeta,
                zeta_q_inc=zeta,
                v_imu=np.zeros(3),
                zeta_v=zeta,
            )
            assert (out.sigma2_v_inc > 0).all()
            assert (out.sigma2_q_inc > 0).all()
            assert (out.sigma2_v > 0).all()
