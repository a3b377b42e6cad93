"""Uniform B-spline height-field: the ground manifold.

The ground is the graph z = S(x, y) of a uniform two-directional B-spline
(cubic by default) over a square knot lattice with interval ``d``.  Control
heights live on integer lattice indices ``(i, j)``; the patch with index
``(gx, gy)`` covers ``[x0 + gx d, x0 + (gx+1) d) x [y0 + gy d, y0 + (gy+1) d)``
and is shaped by the (degree+1)^2 control points at lattice ``(gx+i, gy+j)``,
i, j in 0..degree.  Patches are half-open so every point has exactly one
owning patch.  Under this anchoring a control point's region of influence is
centered at the Greville abscissa ``(i - (degree-1)/2) d``, not at ``i d``;
only code that assigns heights from an analytic field needs to care.

Inside a patch, with local coordinates u, v in [0, 1):

    S(u, v) = poly(u) @ B @ C @ B.T @ poly(v).T

where ``poly(u) = [u^3, u^2, u, 1]`` (cubic) and B is the uniform B-spline
coefficient matrix.  Derivatives with respect to global x, y pick up a factor
1/d per order.  Evaluating through the local coordinates is algebraically
identical to the global-polynomial form ``x_row @ Kx @ B ...`` (Kx collects
the affine reparameterization) but avoids the cancellation that x^3-sized
terms would cause far from the origin.

A wheel-contact pose (p_w, yaw, tilt) satisfies the ground constraint when
the three residual rows returned by :func:`constraint_residual` vanish:
height on the surface, plus two rows aligning the body z-axis with the
surface normal.  The same rows, their analytic Jacobians, and their
Kronecker (vectorized-control) forms drive both the filter update and the
control-point initialization.

Vec(C) is column-major: [c00, c10, c20, c30, c01, ...] - index i runs along
x, j along y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .attitude import (
    body_z_in_gravity,
    tilt_rotation,
    tilt_rotation_partials,
    yaw_rotation,
    yaw_rotation_partial,
)
from .errors import InsufficientPosesError, MissingControlPointError, ParseError

# Uniform B-spline coefficient matrices, poly(u) @ BASIS[k] gives the k-degree
# basis-function row.  Rows of poly(u) are descending powers ending in 1.
BASIS = {
    1: np.array([[-1.0, 1.0], [1.0, 0.0]]),
    2: np.array([[1.0, -2.0, 1.0], [-2.0, 2.0, 0.0], [1.0, 1.0, 0.0]]) / 2.0,
    3: np.array(
        [
            [-1.0, 3.0, -3.0, 1.0],
            [3.0, -6.0, 3.0, 0.0],
            [-3.0, 0.0, 3.0, 0.0],
            [1.0, 4.0, 1.0, 0.0],
        ]
    )
    / 6.0,
}


def poly_row(u, degree):
    """[u^degree, ..., u, 1]"""
    return np.array([u ** k for k in range(degree, -1, -1)])


def poly_row_d1(u, degree):
    return np.array([k * u ** (k - 1) if k >= 1 else 0.0 for k in range(degree, -1, -1)])


def poly_row_d2(u, degree):
    return np.array(
        [k * (k - 1) * u ** (k - 2) if k >= 2 else 0.0 for k in range(degree, -1, -1)]
    )


def basis_rows(u, degree):
    """Basis value row and its first/second local-u derivatives."""
    B = BASIS[degree]
    return poly_row(u, degree) @ B, poly_row_d1(u, degree) @ B, poly_row_d2(u, degree) @ B


@dataclass(frozen=True)
class KnotGrid:
    """Uniform knot lattice: constant interval ``d`` (m), origin (x0, y0)."""

    d: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"knot interval must be positive, got {self.d}")


@dataclass(frozen=True)
class PatchCoords:
    """Integer patch index and local coordinates u, v in [0, 1)."""

    gx: int
    gy: int
    u: float
    v: float


def patch_coords(grid: KnotGrid, x, y) -> PatchCoords:
    """Locate (x, y) on the lattice; half-open patches make this a function."""
    tx = (x - grid.x0) / grid.d
    ty = (y - grid.y0) / grid.d
    gx = int(np.floor(tx))
    gy = int(np.floor(ty))
    return PatchCoords(gx, gy, tx - gx, ty - gy)


@dataclass
class GroundSpline:
    """Sparse ground manifold: knot grid plus lattice-indexed control heights.

    A lookup of a missing control point raises MissingControlPointError;
    absent ground is never silently treated as flat.
    """

    grid: KnotGrid
    points: dict = field(default_factory=dict)
    degree: int = 3

    def __post_init__(self):
        if self.degree not in BASIS:
            raise ValueError(f"unsupported spline degree {self.degree}")

    @property
    def order(self):
        return self.degree + 1

    def control_net(self, gx, gy):
        """(degree+1)^2 net anchored at patch (gx, gy); C[i, j] is the height
        at lattice (gx+i, gy+j)."""
        n = self.order
        net = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                key = (gx + i, gy + j)
                try:
                    net[i, j] = self.points[key]
                except KeyError:
                    raise MissingControlPointError(key) from None
        return net

    def has_net(self, gx, gy):
        return all(
            (gx + i, gy + j) in self.points
            for i in range(self.order)
            for j in range(self.order)
        )


class ConstraintBlocks(NamedTuple):
    """Residual rows of one contact constraint and their analytic Jacobians.

    residual : (3,)   height row (m), two alignment rows (dimensionless)
    d_p      : (3,3)  w.r.t. the IMU position
    d_yaw    : (3,)   w.r.t. yaw
    d_tilt   : (3,2)  w.r.t. tilt
    d_c      : (3,n)  w.r.t. Vec(C), column-major control order
    """

    residual: np.ndarray
    d_p: np.ndarray
    d_yaw: np.ndarray
    d_tilt: np.ndarray
    d_c: np.ndarray


def _tilt_terms(yaw, tilt):
    """The two alignment offsets f2, f3 and their yaw/tilt partials."""
    s1, s2 = float(tilt[0]), float(tilt[1])
    w = 1.0 - s1 * s1 - s2 * s2
    sy, cy = np.sin(yaw), np.cos(yaw)
    f2 = 2.0 * (s1 * sy + s2 * cy) / w
    f3 = 2.0 * (s1 * cy - s2 * sy) / w
    d2_yaw = 2.0 * (s1 * cy - s2 * sy) / w
    d3_yaw = 2.0 * (-s1 * sy - s2 * cy) / w
    w2 = w * w
    a = 1.0 + s1 * s1 - s2 * s2
    b = 1.0 - s1 * s1 + s2 * s2
    d2_s1 = 2.0 * (a * sy + 2.0 * s1 * s2 * cy) / w2
    d2_s2 = 2.0 * (b * cy + 2.0 * s1 * s2 * sy) / w2
    d3_s1 = 2.0 * (a * cy - 2.0 * s1 * s2 * sy) / w2
    d3_s2 = 2.0 * (-b * sy + 2.0 * s1 * s2 * cy) / w2
    return f2, f3, d2_yaw, d3_yaw, np.array([[d2_s1, d2_s2], [d3_s1, d3_s2]])


def _patch_rows(net, grid, pc, degree):
    """Spline value/derivative scalars and the three Kronecker rows at pc."""
    k = 1.0 / grid.d
    bu, dbu, ddbu = basis_rows(pc.u, degree)
    bv, dbv, ddbv = basis_rows(pc.v, degree)
    m = float(bu @ net @ bv)
    m_x = k * float(dbu @ net @ bv)
    m_y = k * float(bu @ net @ dbv)
    m_xx = k * k * float(ddbu @ net @ bv)
    m_xy = k * k * float(dbu @ net @ dbv)
    m_yy = k * k * float(bu @ net @ ddbv)
    rows_c = np.vstack(
        [np.kron(bv, bu), np.kron(k * dbv, bu), np.kron(bv, k * dbu)]
    )
    return m, m_x, m_y, m_xx, m_xy, m_yy, rows_c


def eval_height(spline: GroundSpline, x, y):
    """Surface height z = S(x, y) in meters."""
    pc = patch_coords(spline.grid, x, y)
    net = spline.control_net(pc.gx, pc.gy)
    bu, _, _ = basis_rows(pc.u, spline.degree)
    bv, _, _ = basis_rows(pc.v, spline.degree)
    return float(bu @ net @ bv)


def eval_gradient(spline: GroundSpline, x, y):
    """(dS/dx, dS/dy), dimensionless slopes."""
    pc = patch_coords(spline.grid, x, y)
    net = spline.control_net(pc.gx, pc.gy)
    k = 1.0 / spline.grid.d
    bu, dbu, _ = basis_rows(pc.u, spline.degree)
    bv, dbv, _ = basis_rows(pc.v, spline.degree)
    return np.array([k * float(dbu @ net @ bv), k * float(bu @ net @ dbv)])


def eval_hessian(spline: GroundSpline, x, y):
    """(S_xx, S_xy, S_yy) second partials in 1/m."""
    pc = patch_coords(spline.grid, x, y)
    net = spline.control_net(pc.gx, pc.gy)
    k2 = 1.0 / spline.grid.d ** 2
    bu, dbu, ddbu = basis_rows(pc.u, spline.degree)
    bv, dbv, ddbv = basis_rows(pc.v, spline.degree)
    return np.array(
        [
            k2 * float(ddbu @ net @ bv),
            k2 * float(dbu @ net @ dbv),
            k2 * float(bu @ net @ ddbv),
        ]
    )


def surface_normal(spline: GroundSpline, x, y):
    """Upward unit normal of the surface at (x, y)."""
    gx, gy = eval_gradient(spline, x, y)
    n = np.array([-gx, -gy, 1.0])
    return n / np.linalg.norm(n)


def constraint_residual_for_net(net, grid, patch, p_w, yaw, tilt, degree=3):
    """Three contact-constraint rows for an explicit control net.

    ``patch`` fixes the anchoring; p_w may sit outside the half-open patch
    (the polynomial extrapolates), which the control-fit uses deliberately.
    """
    k = 1.0 / grid.d
    u = (p_w[0] - grid.x0) * k - patch[0]
    v = (p_w[1] - grid.y0) * k - patch[1]
    pc = PatchCoords(patch[0], patch[1], u, v)
    m, m_x, m_y, *_ = _patch_rows(net, grid, pc, degree)
    f2, f3, *_ = _tilt_terms(yaw, tilt)
    return np.array([m - p_w[2], m_y + f2, m_x + f3])


def constraint_residual(spline: GroundSpline, p_w, yaw, tilt):
    """Contact-constraint rows against the spline's own patch at p_w."""
    pc = patch_coords(spline.grid, p_w[0], p_w[1])
    net = spline.control_net(pc.gx, pc.gy)
    return constraint_residual_for_net(
        net, spline.grid, (pc.gx, pc.gy), p_w, yaw, tilt, spline.degree
    )


def constraint_residual_kron(net, grid, patch, p_w, yaw, tilt, degree=3):
    """Same rows assembled through the Kronecker-vectorized control form.

    Used to pin the vectorized form to the matrix form bit-for-bit; both
    consume identical basis rows.
    """
    k = 1.0 / grid.d
    u = (p_w[0] - grid.x0) * k - patch[0]
    v = (p_w[1] - grid.y0) * k - patch[1]
    pc = PatchCoords(patch[0], patch[1], u, v)
    *_, rows_c = _patch_rows(net, grid, pc, degree)
    f2, f3, *_ = _tilt_terms(yaw, tilt)
    vec_c = np.asarray(net).flatten(order="F")
    return rows_c @ vec_c + np.array([-p_w[2], f2, f3])


def normal_alignment_cross(spline: GroundSpline, p_w, yaw, tilt):
    """Full cross product (R e3) x grad M with grad M = [S_x, S_y, -1].

    Test oracle for the simplified alignment rows; its first two components
    vanish exactly when the simplified rows do (the third is rank-deficient).
    """
    z_axis = body_z_in_gravity(yaw, tilt)
    sx, sy = eval_gradient(spline, p_w[0], p_w[1])
    grad_m = np.array([sx, sy, -1.0])
    return np.cross(z_axis, grad_m)


def constraint_residual_cross(spline: GroundSpline, p_w, yaw, tilt):
    """Height residual plus the first two cross-product components."""
    height = eval_height(spline, p_w[0], p_w[1]) - p_w[2]
    cross = normal_alignment_cross(spline, p_w, yaw, tilt)
    return np.array([height, cross[0], cross[1]])


def constraint_jacobians(
    net, grid, patch, p_imu, yaw, tilt, lever_arm=None, degree=3
) -> ConstraintBlocks:
    """Residual rows and analytic Jacobians of one contact constraint.

    The contact point is p_w = p_imu + R(yaw, tilt) @ lever_arm; Jacobians
    chain through the lever arm for the yaw/tilt blocks.  d_c columns follow
    the column-major Vec(C) order.
    """
    t_w = np.zeros(3) if lever_arm is None else np.asarray(lever_arm, dtype=float)
    r_psi = yaw_rotation(yaw)
    r_phi = tilt_rotation(tilt)
    p_w = np.asarray(p_imu, dtype=float) + r_psi @ r_phi @ t_w

    k = 1.0 / grid.d
    u = (p_w[0] - grid.x0) * k - patch[0]
    v = (p_w[1] - grid.y0) * k - patch[1]
    pc = PatchCoords(patch[0], patch[1], u, v)
    m, m_x, m_y, m_xx, m_xy, m_yy, rows_c = _patch_rows(net, grid, pc, degree)
    f2, f3, d2_yaw, d3_yaw, d_tilt_direct = _tilt_terms(yaw, tilt)

    residual = np.array([m - p_w[2], m_y + f2, m_x + f3])
    d_pw = np.array(
        [[m_x, m_y, -1.0], [m_xy, m_yy, 0.0], [m_xx, m_xy, 0.0]]
    )

    # lever-arm chain: d(p_w)/d(yaw) and d(p_w)/d(s)
    dpw_yaw = yaw_rotation_partial(yaw) @ r_phi @ t_w
    dphi_s1, dphi_s2 = tilt_rotation_partials(tilt)
    dpw_s = np.column_stack([r_psi @ dphi_s1 @ t_w, r_psi @ dphi_s2 @ t_w])

    d_yaw = d_pw @ dpw_yaw + np.array([0.0, d2_yaw, d3_yaw])
    d_tilt = d_pw @ dpw_s + np.vstack([np.zeros(2), d_tilt_direct])
    return ConstraintBlocks(residual, d_pw, d_yaw, d_tilt, rows_c)


def ls_fit_control(poses, grid, patch, degree=3, ridge_scale=1e-6):
    """Initialize one control net from contact poses by least squares.

    ``poses`` is a sequence of (p_w, yaw, tilt) wheel-contact poses.  Each
    contributes its three constraint rows to a stacked system A c = b.  A
    single patch cannot make all control points observable, so the solve is
    regularized toward the mean pose height c0 (never toward fabricated zero
    ground): with lambda = ridge_scale * d^2,

        c = c0 + (A.T A + lambda I)^-1 A.T (b - A c0).

    ``ridge_scale = 0`` selects the exact minimum-norm solution of the
    centered system instead (plain least squares; weakly observed directions
    stay at c0).  Acceptance is by reproduction residual, not by
    control-point identity.

    Returns (vec_c, residual_norm) with vec_c in column-major order.
    """
    if len(poses) < 2:
        raise InsufficientPosesError(f"need >= 2 poses, got {len(poses)}")
    n = (degree + 1) ** 2
    k = 1.0 / grid.d
    rows = []
    rhs = []
    for p_w, yaw, tilt in poses:
        u = (p_w[0] - grid.x0) * k - patch[0]
        v = (p_w[1] - grid.y0) * k - patch[1]
        bu, dbu, _ = basis_rows(u, degree)
        bv, dbv, _ = basis_rows(v, degree)
        rows.append(np.kron(bv, bu))
        rows.append(np.kron(k * dbv, bu))
        rows.append(np.kron(bv, k * dbu))
        f2, f3, *_ = _tilt_terms(yaw, tilt)
        rhs.extend([p_w[2], -f2, -f3])
    a = np.vstack(rows)
    b = np.array(rhs)
    c0 = np.full(n, np.mean([p[2] for p, _, _ in poses]))
    b_centered = b - a @ c0
    if ridge_scale > 0:
        lam = ridge_scale * grid.d ** 2
        delta = np.linalg.solve(a.T @ a + lam * np.eye(n), a.T @ b_centered)
    else:
        delta = np.linalg.lstsq(a, b_centered, rcond=None)[0]
    vec_c = c0 + delta
    return vec_c, float(np.linalg.norm(a @ vec_c - b))


def net_from_vec(vec_c, degree=3):
    """Column-major control vector back to the (degree+1)^2 net."""
    n = degree + 1
    return np.asarray(vec_c).reshape((n, n), order="F")


# --- control-net text format ------------------------------------------------
#
# header:  # d=<meters> x0=<m> y0=<m> degree=<k>
# rows:    i<TAB>j<TAB>height_m


def write_control_points(spline: GroundSpline, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        g = spline.grid
        f.write(f"# d={g.d:.17g} x0={g.x0:.17g} y0={g.y0:.17g} degree={spline.degree}\n")
        for (i, j) in sorted(spline.points):
            f.write(f"{i}\t{j}\t{spline.points[(i, j)]:.17g}\n")


def read_control_points(path) -> GroundSpline:
    points = {}
    grid = None
    degree = 3
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("#"):
            raise ParseError(path, 1, "missing control-net header line")
        fields = dict(
            item.split("=", 1) for item in header[1:].split() if "=" in item
        )
        try:
            grid = KnotGrid(
                float(fields["d"]), float(fields.get("x0", 0.0)), float(fields.get("y0", 0.0))
            )
            degree = int(fields.get("degree", 3))
        except (KeyError, ValueError) as exc:
            raise ParseError(path, 1, f"bad header: {exc}") from None
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected i<TAB>j<TAB>height, got {line!r}")
            try:
                points[(int(parts[0]), int(parts[1]))] = float(parts[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return GroundSpline(grid, points, degree)
