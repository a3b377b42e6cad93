"""Trajectory metrics and file formats.

Metrics are absolute (no alignment): the filters under study start from
ground truth, so translation and rotation errors are directly meaningful.
An optional yaw-only alignment exists behind a flag for externally produced
trajectories.

CSV schemas (UTF-8, LF, 17 significant digits):

    measurement log   t,ax,ay,az,gx,gy,gz,wl,wr
    truth channel     t,px,py,pz,yaw,s1,s2,vx,vy,vz,bax,bay,baz,bgx,bgy,bgz
    trajectory        t,px,py,pz,yaw,s1,s2
    trajectory (quat) t,px,py,pz,qx,qy,qz,qw

The log reader is a generator: a million-row file parses without ever being
resident in memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attitude import quat_from_rotation, quat_log_error, rotation_from_yaw_tilt
from .errors import AssociationError, ParseError
from .models import MeasurementSample
from .synth import TruthRecord

FLOAT_FMT = "{:.17g}"


@dataclass
class Trajectory:
    """Timestamped poses in the yaw/tilt attitude convention."""

    t: np.ndarray
    p: np.ndarray  # (N, 3)
    yaw: np.ndarray
    tilt: np.ndarray  # (N, 2)

    def __post_init__(self):
        if len(self.t) > 1 and (np.diff(self.t) <= 0).any():
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @staticmethod
    def from_truth(truth: TruthRecord):
        return Trajectory(truth.t, truth.p, truth.yaw, truth.tilt)


def associate(est: Trajectory, gt: Trajectory, tol=1e-3):
    """Nearest-neighbor timestamp pairs within ``tol`` seconds."""
    idx = np.searchsorted(gt.t, est.t)
    idx = np.clip(idx, 1, len(gt.t) - 1)
    left = gt.t[idx - 1]
    right = gt.t[idx]
    nearest = np.where(np.abs(est.t - left) <= np.abs(right - est.t), idx - 1, idx)
    ok = np.abs(gt.t[nearest] - est.t) <= tol
    if not ok.any():
        raise AssociationError("no timestamp pairs within tolerance")
    return np.nonzero(ok)[0], nearest[ok]

def ate(est: Trajectory, gt: Trajectory, tol=1e-3):
    """RMSE of absolute translation error, meters."""
    ei, gi = associate(est, gt, tol)
    diff = est.p[ei] - gt.p[gi]
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def are(est: Trajectory, gt: Trajectory, tol=1e-3):
    """RMSE of absolute rotation error, degrees."""
    ei, gi = associate(est, gt, tol)
    sq = np.empty(len(ei))
    for n, (a, b) in enumerate(zip(ei, gi)):
        q_est = quat_from_rotation(rotation_from_yaw_tilt(est.yaw[a], est.tilt[a], check=False))
        q_gt = quat_from_rotation(rotation_from_yaw_tilt(gt.yaw[b], gt.tilt[b], check=False))
        err = quat_log_error(q_est, q_gt)
        sq[n] = err @ err
    return float(np.degrees(np.sqrt(np.mean(sq))))


# --- CSV I/O ------------------------------------------------------------------


def _fmt_row(values):
    return ",".join(FLOAT_FMT.format(v) for v in values) + "\n"


def _read_header(f, path, expected):
    header = f.readline().strip()
    cols = header.split(",")
    for name in expected:
        if name not in cols:
            raise ParseError(path, 1, f"missing column {name!r} in header {header!r}")
    if cols != list(expected):
        raise ParseError(path, 1, f"expected columns {','.join(expected)}, got {header!r}")


LOG_COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz", "wl", "wr")
TRUTH_COLUMNS = (
    "t", "px", "py", "pz", "yaw", "s1", "s2",
    "vx", "vy", "vz", "bax", "bay", "baz", "bgx", "bgy", "bgz",
)
TRAJ_COLUMNS = ("t", "px", "py", "pz", "yaw", "s1", "s2")
TRAJ_QUAT_COLUMNS = ("t", "px", "py", "pz", "qx", "qy", "qz", "qw")


def write_log(path, samples):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(LOG_COLUMNS) + "\n")
        for s in samples:
            f.write(_fmt_row([s.t, *s.accel, *s.gyro, s.wheel_l, s.wheel_r]))


def read_log(path):
    """Stream MeasurementSamples from a log CSV (generator, O(1) memory)."""
    with open(path, "r", encoding="utf-8") as f:
        _read_header(f, path, LOG_COLUMNS)
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(LOG_COLUMNS):
                raise ParseError(path, lineno, f"expected {len(LOG_COLUMNS)} fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            yield MeasurementSample(
                vals[0], np.array(vals[1:4]), np.array(vals[4:7]), vals[7], vals[8]
            )


def write_truth(path, truth: TruthRecord):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(TRUTH_COLUMNS) + "\n")
        for k in range(len(truth)):
            f.write(
                _fmt_row(
                    [
                        truth.t[k], *truth.p[k], truth.yaw[k], *truth.tilt[k],
                        *truth.v_imu[k], *truth.bias_a[k], *truth.bias_w[k],
                    ]
                )
            )


def read_truth(path) -> TruthRecord:
    """Load a truth side channel.  Acceleration and body-rate truth are not
    part of the on-disk schema and come back as zeros."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        _read_header(f, path, TRUTH_COLUMNS)
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(TRUTH_COLUMNS):
                raise ParseError(path, lineno, f"expected {len(TRUTH_COLUMNS)} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    arr = np.array(rows)
    n = len(arr)
    return TruthRecord(
        t=arr[:, 0],
        p=arr[:, 1:4],
        yaw=arr[:, 4],
        tilt=arr[:, 5:7],
        v_imu=arr[:, 7:10],
        a_world=np.zeros((n, 3)),
        omega=np.zeros((n, 3)),
        bias_a=arr[:, 10:13],
        bias_w=arr[:, 13:16],
    )


def write_trajectory(path, traj: Trajectory):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(TRAJ_COLUMNS) + "\n")
        for k in range(len(traj)):
            f.write(_fmt_row([traj.t[k], *traj.p[k], traj.yaw[k], *traj.tilt[k]]))


def write_trajectory_quat(path, traj: Trajectory):
    """Quaternion-form trajectory for external tooling (x, y, z, w order)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(TRAJ_QUAT_COLUMNS) + "\n")
        for k in range(len(traj)):
            q = quat_from_rotation(
                rotation_from_yaw_tilt(traj.yaw[k], traj.tilt[k], check=False)
            )
            f.write(_fmt_row([traj.t[k], *traj.p[k], q[1], q[2], q[3], q[0]]))


def read_trajectory(path) -> Trajectory:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        _read_header(f, path, TRAJ_COLUMNS)
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(TRAJ_COLUMNS):
                raise ParseError(path, lineno, f"expected {len(TRAJ_COLUMNS)} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    arr = np.array(rows)
    return Trajectory(t=arr[:, 0], p=arr[:, 1:4], yaw=arr[:, 4], tilt=arr[:, 5:7])
