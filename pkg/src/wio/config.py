"""Flat ``key = value`` configuration: parsing, validation, scenario assembly.

One text file drives both simulation and estimation.  Unknown keys are
rejected (typos fail fast), vectors are space-separated, booleans are on/off.
The environment variable ``WING_SEED`` overrides the configured seed.

Key reference (defaults in parentheses):

    seed (1)
    d_m (5.0)            knot interval, m
    d_s (0.1)            state augmentation distance, m
    sigma2_M (10.0)      manifold pseudo-measurement variance
    window (100)         corrector window, samples
    cadence (20)         corrector period, samples
    rate (100.0)         sensor rate, Hz
    corrector (oracle)   passthrough | oracle | constant_fit
    lever_arm (0 0 0)    wheel-frame origin in the IMU frame, m
    gate (off)           chi-square innovation gate on velocity updates
    spline_degree (3)    1 | 2 | 3
    manifold (on)
    path_length (500.0)  figure-eight arc length, m
    speed (2.0)          m/s
    amplitude (0.5)      ground roughness, m
    smoothness (2.0)     ground correlation, lattice units
    wheel_radius_left / wheel_radius_right (0.3), wheel_base (0.6)   m
    sigma_a (0.02) sigma_w (0.002) sigma_wheel (0.05)
    bias_a (0.02 -0.01 0.005) bias_w (0.001 -0.002 0.0005)
    walk_a (0.0) walk_w (0.0) slip (0.03)
    perturb_bias_a (0.002) perturb_bias_w (0.0002) perturb_v (0.01)
    passthrough_sigma2_v (1e-4) passthrough_sigma2_v_inc (1e-4)
    passthrough_sigma2_q_inc (1e-6)
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .corrector import ConstantFitCorrector, OracleCorrector, PassthroughCorrector
from .errors import ConfigError
from .filter import FilterConfig
from .models import WheelParams
from .synth import NoiseModel, figure_eight_waypoints, make_ground, stationary_log

_DEFAULTS = {
    "seed": "1",
    "d_m": "5.0",
    "d_s": "0.1",
    "sigma2_M": "10.0",
    "window": "100",
    "cadence": "20",
    "rate": "100.0",
    "corrector": "oracle",
    "lever_arm": "0 0 0",
    "gate": "off",
    "spline_degree": "3",
    "manifold": "on",
    "path_length": "500.0",
    "speed": "2.0",
    "amplitude": "0.5",
    "smoothness": "2.0",
    "wheel_radius_left": "0.3",
    "wheel_radius_right": "0.3",
    "wheel_base": "0.6",
    "sigma_a": "0.02",
    "sigma_w": "0.002",
    "sigma_wheel": "0.05",
    "bias_a": "0.02 -0.01 0.005",
    "bias_w": "0.001 -0.002 0.0005",
    "walk_a": "0.0",
    "walk_w": "0.0",
    "slip": "0.03",
    "perturb_bias_a": "0.002",
    "perturb_bias_w": "0.0002",
    "perturb_v": "0.01",
    "passthrough_sigma2_v": "1e-4",
    "passthrough_sigma2_v_inc": "1e-4",
    "passthrough_sigma2_q_inc": "1e-6",
}

SEED_ENV = "WING_SEED"


def parse_config_text(text, source="<config>"):
    values = dict(_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value
    if os.environ.get(SEED_ENV):
        values["seed"] = os.environ[SEED_ENV]
    return values


def load_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), source=str(path))


def _as_float(values, key):
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: not a number: {values[key]!r}") from None


def _as_int(values, key):
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: not an integer: {values[key]!r}") from None


def _as_vec3(values, key):
    parts = values[key].split()
    if len(parts) != 3:
        raise ConfigError(f"key {key!r}: expected 3 numbers, got {values[key]!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ConfigError(f"key {key!r}: not numbers: {values[key]!r}") from None


def _as_flag(values, key):
    v = values[key].lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r}: expected on/off, got {values[key]!r}")


@dataclass
class Scenario:
    """Typed view of one configuration."""

    values: dict

    @staticmethod
    def from_file(path):
        return Scenario(load_config(path))

    @staticmethod
    def default(**overrides):
        values = dict(_DEFAULTS)
        for key, val in overrides.items():
            if key not in _DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = str(val)
        if os.environ.get(SEED_ENV):
            values["seed"] = os.environ[SEED_ENV]
        return Scenario(values)

    @property
    def seed(self):
        return _as_int(self.values, "seed")

    @property
    def rate(self):
        return _as_float(self.values, "rate")

    @property
    def dt(self):
        return 1.0 / self.rate

    def filter_config(self, manifold=None, spline_degree=None, corrector_sigmas=True):
        d_m = _as_float(self.values, "d_m")
        d_s = _as_float(self.values, "d_s")
        if d_s >= d_m:
            raise ConfigError(
                f"d_s ({d_s}) must be smaller than d_m ({d_m})"
            )
        return FilterConfig(
            knot_interval=d_m,
            augment_distance=d_s,
            sigma2_manifold=_as_float(self.values, "sigma2_M"),
            window_size=_as_int(self.values, "window"),
            cadence=_as_int(self.values, "cadence"),
            dt=self.dt,
            lever_arm=_as_vec3(self.values, "lever_arm"),
            spline_degree=int(spline_degree if spline_degree is not None else _as_int(self.values, "spline_degree")),
            manifold_enabled=bool(
                _as_flag(self.values, "manifold") if manifold is None else manifold
            ),
            velocity_gate=_as_flag(self.values, "gate"),
        )

    def wheels(self):
        return WheelParams(
            r_l=_as_float(self.values, "wheel_radius_left"),
            r_r=_as_float(self.values, "wheel_radius_right"),
            w_b=_as_float(self.values, "wheel_base"),
        )

    def noise_model(self):
        return NoiseModel(
            sigma_a=_as_float(self.values, "sigma_a"),
            sigma_w=_as_float(self.values, "sigma_w"),
            sigma_wheel=_as_float(self.values, "sigma_wheel"),
            bias_a=_as_vec3(self.values, "bias_a"),
            bias_w=_as_vec3(self.values, "bias_w"),
            walk_a=_as_float(self.values, "walk_a"),
            walk_w=_as_float(self.values, "walk_w"),
            slip=_as_float(self.values, "slip"),
        )

    def waypoints(self):
        return figure_eight_waypoints(length=_as_float(self.values, "path_length"))

    def ground(self):
        pts = self.waypoints()
        extent = 2.0 * (np.abs(pts).max() + 4.0 * _as_float(self.values, "d_m"))
        return make_ground(
            seed=self.seed,
            extent=extent,
            d=_as_float(self.values, "d_m"),
            amplitude=_as_float(self.values, "amplitude"),
            smoothness=_as_float(self.values, "smoothness"),
        )

    def make_corrector(self, truth, kind=None):
        kind = kind or self.values["corrector"]
        wheels = self.wheels()
        window = _as_int(self.values, "window")
        lever = _as_vec3(self.values, "lever_arm")
        if kind == "passthrough":
            return PassthroughCorrector(
                wheels,
                window,
                lever_arm=lever,
                sigma2_v_inc=_as_float(self.values, "passthrough_sigma2_v_inc"),
                sigma2_q_inc=_as_float(self.values, "passthrough_sigma2_q_inc"),
                sigma2_v=_as_float(self.values, "passthrough_sigma2_v"),
            )
        if kind == "oracle":
            if truth is None:
                raise ConfigError("oracle corrector requires the truth side channel")
            return OracleCorrector(
                wheels,
                window,
                truth,
                lever_arm=lever,
                sigma_a=_as_float(self.values, "sigma_a"),
                sigma_w=_as_float(self.values, "sigma_w"),
                perturb_bias_a=_as_float(self.values, "perturb_bias_a"),
                perturb_bias_w=_as_float(self.values, "perturb_bias_w"),
                perturb_v=_as_float(self.values, "perturb_v"),
                seed=self.seed + 1_000_003,
            )
        if kind == "constant_fit":
            corr = ConstantFitCorrector(wheels, window, lever_arm=lever)
            calib, _ = stationary_log(
                seed=self.seed + 7,
                duration=10.0,
                noise=self.noise_model(),
                wheels=wheels,
                rate=self.rate,
            )
            corr.calibrate(calib)
            return corr
        raise ConfigError(f"unknown corrector {kind!r}")
