"""Wheel-inertial odometry with B-spline ground-manifold constraints.

A numpy/scipy library (plus a small CLI) implementing a space-based
sliding-window EKF for ground robots: IMU propagation in a yaw-decoupled
attitude convention, corrected-velocity updates from a pluggable measurement
corrector, and soft constraints tying the wheel-contact pose to a globally
continuous uniform B-spline ground surface whose control points are estimated
alongside the trajectory.
"""

__version__ = "0.1.0"

from . import attitude, corrector, evalkit, filter, models, spline, synth  # noqa: F401
