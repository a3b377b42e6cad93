"""Yaw-decoupled attitude parameterization and quaternion helpers.

The attitude of the body is split into a yaw angle ``psi`` about the gravity
axis and a two-parameter tilt ``s = (s1, s2)``, the stereographic chart of the
body z-axis on the unit sphere.  The full rotation from the body (IMU) frame
to the gravity-aligned frame factors as ``R = Rz(psi) @ tilt_rotation(s)``.
Because the tilt block never depends on yaw, velocity and tilt estimates stay
immune to yaw drift.

Conventions:
    - frames are Front-Left-Up; gravity frame has z pointing up
    - quaternions are arrays ``[w, x, y, z]`` with unit norm
    - tilt must stay strictly inside the unit disk; the parameterization is
      singular at 90 degrees of tilt (|s| = 1)

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalError, TiltSingularityError

# Tilt norm is clamped to sqrt(1 - EPS_TILT); the constraint equations divide
# by (1 - s1^2 - s2^2), which blows up at 90 degrees of tilt.  Ground vehicles
# never get close.
EPS_TILT = 1e-3


@dataclass
class Attitude:
    """Yaw angle (rad) plus stereographic tilt pair (dimensionless)."""

    yaw: float
    tilt: np.ndarray  # shape (2,)

    def rotation(self) -> np.ndarray:
        return rotation_from_yaw_tilt(self.yaw, self.tilt)


def yaw_rotation(psi):
    """Rotation by ``psi`` about the z axis."""
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_rotation_partial(psi):
    """d(Rz)/d(psi)."""
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def tilt_rotation(s, check=True):
    """Tilt block of the attitude: rotation taking body z to the surface
    normal direction, parameterized by stereographic coordinates.

    With sigma = 1 + s1^2 + s2^2:

        [[1-s1^2+s2^2, -2 s1 s2,     2 s1        ],
         [-2 s1 s2,     1+s1^2-s2^2, 2 s2        ],
         [-2 s1,       -2 s2,        1-s1^2-s2^2 ]] / sigma

    ``check=False`` skips the unit-disk precondition (used by tests probing
    the |s| -> 1 boundary).
    """
    s1, s2 = float(s[0]), float(s[1])
    rho2 = s1 * s1 + s2 * s2
    if check and rho2 >= 1.0 - EPS_TILT:
        raise TiltSingularityError(f"tilt norm^2 {rho2:.6f} >= {1.0 - EPS_TILT}")
    sigma = 1.0 + rho2
    return (
        np.array(
            [
                [1.0 - s1 * s1 + s2 * s2, -2.0 * s1 * s2, 2.0 * s1],
                [-2.0 * s1 * s2, 1.0 + s1 * s1 - s2 * s2, 2.0 * s2],
                [-2.0 * s1, -2.0 * s2, 1.0 - rho2],
            ]
        )
        / sigma
    )


def rotation_from_yaw_tilt(psi, s, check=True):
    """Full body-to-gravity rotation ``Rz(psi) @ tilt_rotation(s)``."""
    return yaw_rotation(psi) @ tilt_rotation(s, check=check)


def tilt_rotation_partials(s):
    """Analytic derivatives (dRphi/ds1, dRphi/ds2) of the tilt block.

    Denominators are sigma^2 = (1 + s1^2 + s2^2)^2.
    """
    s1, s2 = float(s[0]), float(s[1])
    sigma2 = (1.0 + s1 * s1 + s2 * s2) ** 2
    a = 1.0 - s1 * s1 + s2 * s2
    b = 1.0 + s1 * s1 - s2 * s2
    d_s1 = (
        np.array(
            [
                [-4.0 * s1 * (1.0 + s2 * s2), -2.0 * s2 * a, 2.0 * a],
                [-2.0 * s2 * a, 4.0 * s1 * s2 * s2, -4.0 * s1 * s2],
                [-2.0 * a, 4.0 * s1 * s2, -4.0 * s1],
            ]
        )
        / sigma2
    )
    d_s2 = (
        np.array(
            [
                [4.0 * s1 * s1 * s2, -2.0 * s1 * b, -4.0 * s1 * s2],
                [-2.0 * s1 * b, -4.0 * s2 * (1.0 + s1 * s1), 2.0 * b],
                [4.0 * s1 * s2, -2.0 * b, -4.0 * s2],
            ]
        )
        / sigma2
    )
    return d_s1, d_s2


def tilt_kinematics(s, omega):
    """Rates (psi_dot, s_dot) induced by body angular velocity ``omega``.

    psi_dot = [-s1, -s2, 1] . omega
    s_dot   = 0.5 * [[-2 s1 s2,      s1^2-s2^2+1,  2 s2],
                     [ s1^2-s2^2-1,  2 s1 s2,     -2 s1]] . omega
    """
    s1, s2 = float(s[0]), float(s[1])
    omega = np.asarray(omega, dtype=float)
    psi_dot = -s1 * omega[0] - s2 * omega[1] + omega[2]
    m = 0.5 * np.array(
        [
            [-2.0 * s1 * s2, s1 * s1 - s2 * s2 + 1.0, 2.0 * s2],
            [s1 * s1 - s2 * s2 - 1.0, 2.0 * s1 * s2, -2.0 * s1],
        ]
    )
    return psi_dot, m @ omega


def tilt_from_normal(normal, psi, eps=1e-6):
    """Invert the tilt chart: find ``s`` so the body z-axis of
    ``rotation_from_yaw_tilt(psi, s)`` aligns with ``normal``.

    ``normal`` must point upward (z component > eps).  This is the inverse
    stereographic projection of the yaw-derotated normal.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    if n[2] <= eps:
        raise DegenerateNormalError(f"normal z component {n[2]:.3e} <= {eps}")
    m = yaw_rotation(psi).T @ n
    return np.array([m[0] / (1.0 + m[2]), m[1] / (1.0 + m[2])])


def body_z_in_gravity(psi, s, check=True):
    """Direction of the body z-axis expressed in the gravity frame.

    Independent of psi only through the z component; the full vector is
    R @ e3 = Rz(psi) @ [2 s1, 2 s2, 1 - s1^2 - s2^2] / sigma.
    """
    return rotation_from_yaw_tilt(psi, s, check=check)[:, 2]


def clamp_tilt(s, eps=EPS_TILT):
    """Pull tilt back inside the disk of radius sqrt(1 - eps).

    Returns (clamped_tilt, was_clamped).
    """
    s = np.asarray(s, dtype=float)
    rho2 = float(s @ s)
    limit2 = 1.0 - eps
    if rho2 > limit2:
        return s * np.sqrt(limit2 / rho2), True
    return s, False


# --- quaternion helpers (arrays [w, x, y, z]) -------------------------------


def quat_identity():
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_multiply(p, q):
    """Hamilton product, renormalized to keep |q| = 1 under long chains."""
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    out = np.array(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )
    return out / np.linalg.norm(out)


def quat_from_rotvec(v):
    """Unit quaternion for a rotation vector (axis * angle)."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        q = np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
        return q / np.linalg.norm(q)
    axis = v / angle
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_to_rotation(q):
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rotation(R):
    """Shepperd-style extraction; stable for all rotation matrices."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        t = np.sqrt(1.0 + tr)
        w = 0.5 * t
        f = 0.5 / t
        q = np.array(
            [w, f * (R[2, 1] - R[1, 2]), f * (R[0, 2] - R[2, 0]), f * (R[1, 0] - R[0, 1])]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        t = np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        xyz = np.empty(3)
        xyz[i] = 0.5 * t
        f = 0.5 / t
        xyz[j] = f * (R[j, i] + R[i, j])
        xyz[k] = f * (R[k, i] + R[i, k])
        w = f * (R[k, j] - R[j, k])
        q = np.concatenate(([w], xyz))
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_log(q):
    """Rotation vector of a unit quaternion, magnitude in [0, pi].

    Uses the atan2 branch so small rotations keep full precision.
    """
    q = quat_normalize(q)
    if q[0] < 0:
        q = -q
    v = q[1:4]
    n = np.linalg.norm(v)
    if n < 1e-12:
        return 2.0 * v
    angle = 2.0 * np.arctan2(n, q[0])
    return (angle / n) * v


def quat_log_error(q_hat, q):
    """Rotation-vector error Log(q_hat^* (x) q) between two unit quaternions."""
    return quat_log(quat_multiply(quat_conjugate(q_hat), q))
