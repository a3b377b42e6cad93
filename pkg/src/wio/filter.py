"""Space-based sliding-window EKF over pose clones and ground control points.

The state vector is laid out as

    [ X_I | xi_1 ... xi_n | c ]

    X_I  IMU state (p, v, psi, s), 9 scalars
    xi_j pose clones (p, psi, s), 6 scalars each, appended every
         ``augment_distance`` meters of estimated travel (space-based, not
         time-based)
    c    active control vector, (degree+1)^2 spline heights in column-major
         order, present once initialized

The filter propagates every sample, updates with corrected IMU-frame velocity
at the corrector cadence, and applies the ground-manifold constraint whenever
the contact point crosses a patch boundary: every pose still in the state and
every frozen pose within the (2 degree + 1)^2 patch neighborhood contributes
three zero-measurement residual rows against the spline.  Crossing a boundary
also slides the window: clones that left the active patch and control points
that no longer shape it are frozen into a static store (their rows/columns
deleted from P - the exact marginal of a Gaussian), and control points
entering the active net are re-activated from the store or freshly
initialized.

The filter core is single-threaded and consumes samples in timestamp order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from . import spline as spl
from .attitude import EPS_TILT, clamp_tilt, rotation_from_yaw_tilt
from .corrector import SampleWindow
from .errors import FilterError, InnovationGateError, InsufficientPosesError
from .models import (
    ImuInput,
    ImuState,
    process_jacobians,
    propagate_state,
    scale_increment_covariance,
)

XI_ROWS = [0, 1, 2, 6, 7, 8]  # (p, psi, s) rows of the 9-dim IMU block


@dataclass
class FilterConfig:
    knot_interval: float = 5.0  # d_m, m
    augment_distance: float = 0.1  # d_s, m
    sigma2_manifold: float = 10.0  # variance of the zero pseudo-measurement
    window_size: int = 100  # corrector window, samples
    cadence: int = 20  # corrector invocation period, samples
    dt: float = 0.01  # s
    init_cov_imu: float = 1e-8
    init_cov_control: float = 1e-2
    lever_arm: np.ndarray = field(default_factory=lambda: np.zeros(3))
    spline_degree: int = 3
    min_fit_poses: int = 6
    ridge_scale: float = 1e-6
    manifold_enabled: bool = True
    velocity_gate: bool = False
    gate_prob: float = 0.999
    # per-row weights on (height, align1, align2); the single sigma2_manifold
    # is applied uniformly by default despite the mixed units
    manifold_row_weights: np.ndarray = field(default_factory=lambda: np.ones(3))
    grid_x0: float = 0.0
    grid_y0: float = 0.0
    # process-noise priors used until the first corrector output arrives
    initial_sigma2_v_inc: float = 1e-4
    initial_sigma2_q_inc: float = 1e-6

    def __post_init__(self):
        self.lever_arm = np.asarray(self.lever_arm, dtype=float)
        self.manifold_row_weights = np.asarray(self.manifold_row_weights, dtype=float)
        if not self.augment_distance < self.knot_interval:
            raise ValueError(
                f"augment_distance ({self.augment_distance}) must be smaller than "
                f"knot_interval ({self.knot_interval})"
            )

    @property
    def grid(self):
        return spl.KnotGrid(self.knot_interval, self.grid_x0, self.grid_y0)

    @property
    def n_control(self):
        return (self.spline_degree + 1) ** 2


@dataclass
class Clone:
    """One space-based sliding-window pose: position, yaw, tilt."""

    p: np.ndarray
    yaw: float
    tilt: np.ndarray

    def as_vector(self):
        return np.concatenate([self.p, [self.yaw], self.tilt])

    @staticmethod
    def from_vector(x):
        x = np.asarray(x, dtype=float)
        return Clone(x[0:3].copy(), float(x[3]), x[4:6].copy())


@dataclass
class Counters:
    clamp_events: int = 0
    psd_clamps: int = 0
    skipped_rows: int = 0
    gate_rejections: int = 0
    manifold_updates: int = 0
    slides: int = 0


class SlidingWindowFilter:
    """Algorithmic core; use :func:`run_filter` for whole-log processing."""

    def __init__(self, cfg: FilterConfig, init_state: ImuState):
        self.cfg = cfg
        self.imu = init_state.copy()
        self.clones: list[Clone] = []
        self.control = None  # active control vector, column-major
        self.active_patch = None  # anchor of the active net once initialized
        self.P = np.eye(9) * cfg.init_cov_imu
        self.static_poses: list[Clone] = []
        self.static_points: dict = {}
        self.counters = Counters()
        self.current_patch = self.contact_patch(self.imu.p, self.imu.yaw, self.imu.tilt)
        self._gate_threshold = chi2.ppf(cfg.gate_prob, df=3)

    # --- layout helpers ------------------------------------------------------

    @property
    def n_clones(self):
        return len(self.clones)

    @property
    def dim(self):
        n = 9 + 6 * self.n_clones
        return n + (self.cfg.n_control if self.control is not None else 0)

    def clone_slice(self, j):
        return slice(9 + 6 * j, 9 + 6 * j + 6)

    @property
    def control_offset(self):
        return 9 + 6 * self.n_clones

    def get_vector(self):
        parts = [self.imu.as_vector()] + [c.as_vector() for c in self.clones]
        if self.control is not None:
            parts.append(self.control)
        return np.concatenate(parts)

    def set_vector(self, x):
        x = np.asarray(x, dtype=float)
        self.imu = ImuState.from_vector(x[0:9])
        for j in range(self.n_clones):
            self.clones[j] = Clone.from_vector(x[self.clone_slice(j)])
        if self.control is not None:
            self.control = x[self.control_offset:].copy()

    # --- geometry helpers ----------------------------------------------------

    def contact_point(self, p, yaw, tilt):
        return np.asarray(p, float) + rotation_from_yaw_tilt(yaw, tilt) @ self.cfg.lever_arm

    def contact_patch(self, p, yaw, tilt):
        pw = self.contact_point(p, yaw, tilt)
        pc = spl.patch_coords(self.cfg.grid, pw[0], pw[1])
        return (pc.gx, pc.gy)

    def active_lattice_index(self, point):
        """Column-major position of a lattice point inside the active net."""
        di = point[0] - self.active_patch[0]
        dj = point[1] - self.active_patch[1]
        k = self.cfg.spline_degree
        if 0 <= di <= k and 0 <= dj <= k:
            return dj * (k + 1) + di
        return None

    # --- covariance hygiene ---------------------------------------------------

    def _condition_covariance(self):
        self.P = 0.5 * (self.P + self.P.T)
        if self.P.shape[0] and np.min(np.diagonal(self.P)) < -1e-12:
            w, v = np.linalg.eigh(self.P)
            self.P = (v * np.maximum(w, 0.0)) @ v.T
            self.P = 0.5 * (self.P + self.P.T)
            self.counters.psd_clamps += 1

    def _clamp_tilts(self):
        self.imu.tilt, hit = clamp_tilt(self.imu.tilt, EPS_TILT)
        self.counters.clamp_events += int(hit)
        for c in self.clones:
            c.tilt, hit = clamp_tilt(c.tilt, EPS_TILT)
            self.counters.clamp_events += int(hit)

    # --- propagation / augmentation -------------------------------------------

    def _propagated_blocks(self, u: ImuInput, w_noise):
        f, fn = process_jacobians(self.imu, u)
        p_ii = self.P[0:9, 0:9]
        t1 = p_ii @ f.T  # reused by the clone blocks
        t2 = w_noise @ fn.T
        new_ii = f @ t1 + fn @ t2
        new_ix = f @ self.P[0:9, 9:]
        return f, fn, t1, t2, new_ii, new_ix

    def propagate(self, u: ImuInput, w_noise):
        """State propagation: IMU block evolves, clones and control are
        identity-padded."""
        _, _, _, _, new_ii, new_ix = self._propagated_blocks(u, w_noise)
        self.imu = propagate_state(self.imu, u)
        if not np.isfinite(self.imu.as_vector()).all():
            raise FilterError("state became non-finite during propagation")
        self.P[0:9, 0:9] = new_ii
        self.P[0:9, 9:] = new_ix
        self.P[9:, 0:9] = new_ix.T
        self.P = 0.5 * (self.P + self.P.T)

    def augment(self, u: ImuInput, w_noise):
        """Propagate and clone in one step; the new clone copies the partial
        (p, psi, s) rows of the propagated IMU block, covariance included."""
        f, fn, t1, t2, new_ii, new_ix = self._propagated_blocks(u, w_noise)
        f_xi = f[XI_ROWS, :]
        fn_xi = fn[XI_ROWS, :]
        clone_imu = f_xi @ t1 + fn_xi @ t2  # 6 x 9
        clone_rest = f_xi @ self.P[0:9, 9:]  # 6 x (old rest)
        clone_clone = f_xi @ t1[:, XI_ROWS] + fn_xi @ t2[:, XI_ROWS]

        self.imu = propagate_state(self.imu, u)
        if not np.isfinite(self.imu.as_vector()).all():
            raise FilterError("state became non-finite during augmentation")

        old_dim = self.P.shape[0]
        ins = self.control_offset  # new clone goes after the last clone
        n_rest1 = ins - 9  # existing clone columns
        new_p = np.zeros((old_dim + 6, old_dim + 6))
        # imu rows
        new_p[0:9, 0:9] = new_ii
        new_p[0:9, 9:ins] = new_ix[:, :n_rest1]
        new_p[0:9, ins + 6:] = new_ix[:, n_rest1:]
        # untouched rest block
        new_p[9:ins, 9:ins] = self.P[9:ins, 9:ins]
        new_p[9:ins, ins + 6:] = self.P[9:ins, ins:]
        new_p[ins + 6:, ins + 6:] = self.P[ins:, ins:]
        # new clone rows
        new_p[ins:ins + 6, 0:9] = clone_imu
        new_p[ins:ins + 6, 9:ins] = clone_rest[:, :n_rest1]
        new_p[ins:ins + 6, ins + 6:] = clone_rest[:, n_rest1:]
        new_p[ins:ins + 6, ins:ins + 6] = clone_clone
        # mirror the strictly-lower triangle we left empty
        lower = np.tril_indices(old_dim + 6, -1)
        new_p[lower] = new_p.T[lower]

        self.P = 0.5 * (new_p + new_p.T)
        self.clones.append(Clone(self.imu.p.copy(), self.imu.yaw, self.imu.tilt.copy()))

    # --- measurement updates ---------------------------------------------------

    def _joseph_update(self, h, residual, s_diag, gate=False):
        """Kalman update in expanded Joseph form.

        h: (m, dim) Jacobian, residual: (m,) innovation z - h(X),
        s_diag: (m,) measurement variance diagonal.
        """
        pht = self.P @ h.T
        s_mat = h @ pht + np.diag(s_diag)
        if gate:
            maha = float(residual @ np.linalg.solve(s_mat, residual))
            if maha > self._gate_threshold:
                raise InnovationGateError(
                    f"innovation chi-square {maha:.2f} > {self._gate_threshold:.2f}"
                )
        k_gain = np.linalg.solve(s_mat.T, pht.T).T
        dx = k_gain @ residual
        a = k_gain @ pht.T
        self.P = self.P - a - a.T + k_gain @ s_mat @ k_gain.T
        self.set_vector(self.get_vector() + dx)
        self._clamp_tilts()
        self._condition_covariance()

    def update_velocity(self, out):
        """Absorb one corrector output: direct observation of the IMU-frame
        velocity block."""
        h = np.zeros((3, self.dim))
        h[:, 3:6] = np.eye(3)
        residual = np.asarray(out.v_imu, float) - self.imu.v
        self._joseph_update(h, residual, out.sigma2_v, gate=self.cfg.velocity_gate)

    # --- manifold constraint ----------------------------------------------------

    def _net_for_patch(self, patch):
        """Assemble the control net of ``patch`` from active and frozen points.

        Returns (net, active_cols) where active_cols maps net vec positions to
        active control indices, or None when a needed point is unavailable.
        """
        k = self.cfg.spline_degree
        order = k + 1
        net = np.empty((order, order))
        active_cols = []
        for i in range(order):
            for j in range(order):
                pt = (patch[0] + i, patch[1] + j)
                idx = self.active_lattice_index(pt)
                if idx is not None:
                    net[i, j] = self.control[idx]
                    active_cols.append((j * order + i, idx))
                elif pt in self.static_points:
                    net[i, j] = self.static_points[pt]
                else:
                    return None
        return net, active_cols

    def _pose_rows(self, pose: Clone, state_slice):
        """Constraint rows of one pose against its own containing patch.

        state_slice is the pose's location in the state vector, or None for a
        frozen pose (no pose Jacobian).  Returns (residual, h_rows) or None.
        """
        cfg = self.cfg
        pw = self.contact_point(pose.p, pose.yaw, pose.tilt)
        pc = spl.patch_coords(cfg.grid, pw[0], pw[1])
        patch = (pc.gx, pc.gy)
        if max(abs(patch[0] - self.active_patch[0]), abs(patch[1] - self.active_patch[1])) > cfg.spline_degree:
            return None
        resolved = self._net_for_patch(patch)
        if resolved is None:
            return None
        net, active_cols = resolved
        blocks = spl.constraint_jacobians(
            net, cfg.grid, patch, pose.p, pose.yaw, pose.tilt,
            lever_arm=cfg.lever_arm, degree=cfg.spline_degree,
        )
        h = np.zeros((3, self.dim))
        if state_slice is not None:
            h[:, state_slice] = np.hstack(
                [blocks.d_p, blocks.d_yaw[:, None], blocks.d_tilt]
            )
        base = self.control_offset
        for vec_q, active_idx in active_cols:
            h[:, base + active_idx] = blocks.d_c[:, vec_q]
        return blocks.residual, h

    def manifold_system(self):
        """Stack every available constraint row; None when nothing applies."""
        if self.control is None:
            return None
        residuals = []
        rows = []
        for j, clone in enumerate(self.clones):
            out = self._pose_rows(clone, self.clone_slice(j))
            if out is None:
                self.counters.skipped_rows += 3
                continue
            residuals.append(out[0])
            rows.append(out[1])
        for pose in self.static_poses:
            out = self._pose_rows(pose, None)
            if out is None:
                self.counters.skipped_rows += 3
                continue
            residuals.append(out[0])
            rows.append(out[1])
        if not residuals:
            return None
        return np.concatenate(residuals), np.vstack(rows)

    def update_manifold(self):
        """Zero-measurement soft-constraint update; no-op before control init."""
        if self.control is None or not self.cfg.manifold_enabled:
            return
        system = self.manifold_system()
        if system is None:
            return
        residual, h = system
        n_poses = len(residual) // 3
        s_diag = np.tile(self.cfg.sigma2_manifold * self.cfg.manifold_row_weights, n_poses)
        # measurement z = 0, so the innovation is -h(X)
        self._joseph_update(h, -residual, s_diag)
        self.counters.manifold_updates += 1

    # --- control initialization and sliding --------------------------------------

    def init_control(self, patch):
        """First-time least-squares fit of the active net over the clones
        located in ``patch``; extends P with an independent diagonal block."""
        cfg = self.cfg
        poses = []
        for clone in self.clones:
            pw = self.contact_point(clone.p, clone.yaw, clone.tilt)
            pc = spl.patch_coords(cfg.grid, pw[0], pw[1])
            if (pc.gx, pc.gy) == tuple(patch):
                poses.append((pw, clone.yaw, clone.tilt))
        if len(poses) < cfg.min_fit_poses:
            raise InsufficientPosesError(
                f"{len(poses)} poses in patch {tuple(patch)}, need {cfg.min_fit_poses}"
            )
        vec_c, _ = spl.ls_fit_control(
            poses, cfg.grid, patch, degree=cfg.spline_degree, ridge_scale=cfg.ridge_scale
        )
        self.control = vec_c
        self.active_patch = tuple(patch)
        old_dim = self.P.shape[0]
        new_p = np.zeros((old_dim + cfg.n_control, old_dim + cfg.n_control))
        new_p[:old_dim, :old_dim] = self.P
        new_p[old_dim:, old_dim:] = np.eye(cfg.n_control) * cfg.init_cov_control
        self.P = new_p

    def slide_and_marginalize(self, new_patch):
        """Advance the active patch: freeze departing clones and control
        points (their rows/columns are deleted from P), re-activate or
        initialize the points entering the new net, and discard static items
        that fell outside the influence region."""
        cfg = self.cfg
        new_patch = tuple(new_patch)
        keep_idx = list(range(9))
        surviving = []
        for j, clone in enumerate(self.clones):
            patch = self.contact_patch(clone.p, clone.yaw, clone.tilt)
            if patch == new_patch:
                surviving.append(clone)
                keep_idx.extend(range(self.clone_slice(j).start, self.clone_slice(j).stop))
            else:
                self.static_poses.append(clone)

        if self.control is not None:
            order = cfg.spline_degree + 1
            old_points = [
                (self.active_patch[0] + i, self.active_patch[1] + j)
                for j in range(order)
                for i in range(order)
            ]  # column-major: vec index == list position
            new_points = [
                (new_patch[0] + i, new_patch[1] + j)
                for j in range(order)
                for i in range(order)
            ]
            old_set, new_set = set(old_points), set(new_points)
            base = self.control_offset
            survivors_old_pos = {}
            for q, pt in enumerate(old_points):
                if pt in new_set:
                    survivors_old_pos[pt] = len(keep_idx)
                    keep_idx.append(base + q)
                else:
                    self.static_points[pt] = float(self.control[q])

            p_kept = self.P[np.ix_(keep_idx, keep_idx)]
            n_clone_dims = 6 * len(surviving)
            new_dim = 9 + n_clone_dims + cfg.n_control
            new_p = np.zeros((new_dim, new_dim))
            head = 9 + n_clone_dims
            new_p[:head, :head] = p_kept[:head, :head]

            old_control = self.control
            old_anchor = self.active_patch
            self.clones = surviving
            self.active_patch = new_patch
            self.current_patch = new_patch

            # classify incoming points
            fresh = []
            control_new = np.zeros(cfg.n_control)
            col_map = {}  # new vec position -> column in p_kept (for survivors)
            for q, pt in enumerate(new_points):
                if pt in old_set:
                    old_q = old_points.index(pt)
                    control_new[q] = old_control[old_q]
                    col_map[q] = survivors_old_pos[pt]
                elif pt in self.static_points:
                    control_new[q] = self.static_points.pop(pt)
                else:
                    fresh.append(pt)
            if fresh:
                fitted = self._fit_new_points(fresh, control_new, new_points)
                for pt, val in fitted.items():
                    control_new[new_points.index(pt)] = val

            for q in range(cfg.n_control):
                if q in col_map:
                    src = col_map[q]
                    new_p[head + q, :head] = p_kept[src, :head]
                    new_p[:head, head + q] = p_kept[:head, src]
                    for q2 in range(cfg.n_control):
                        if q2 in col_map:
                            new_p[head + q, head + q2] = p_kept[src, col_map[q2]]
                else:
                    new_p[head + q, head + q] = cfg.init_cov_control

            self.control = control_new
            self.P = 0.5 * (new_p + new_p.T)
        else:
            self.clones = surviving
            self.current_patch = new_patch
            self.P = self.P[np.ix_(keep_idx, keep_idx)]

        # discard static items that can no longer touch the influence region
        k = cfg.spline_degree
        cx, cy = new_patch
        self.static_poses = [
            pose
            for pose in self.static_poses
            if max(
                abs(self.contact_patch(pose.p, pose.yaw, pose.tilt)[0] - cx),
                abs(self.contact_patch(pose.p, pose.yaw, pose.tilt)[1] - cy),
            )
            <= k
        ]
        self.static_points = {
            pt: v
            for pt, v in self.static_points.items()
            if cx - k <= pt[0] <= cx + 2 * k and cy - k <= pt[1] <= cy + 2 * k
        }
        self.counters.slides += 1
        self._condition_covariance()

    def _fit_new_points(self, fresh, control_new, new_points):
        """Height initialization for never-seen control points: ridge fit over
        poses in the new active patch, regularized toward the mean of the
        already-known net values."""
        cfg = self.cfg
        known_vals = [control_new[q] for q, pt in enumerate(new_points) if pt not in fresh]
        center = float(np.mean(known_vals)) if known_vals else 0.0
        poses = []
        for pose in self.clones + self.static_poses:
            pw = self.contact_point(pose.p, pose.yaw, pose.tilt)
            pc = spl.patch_coords(cfg.grid, pw[0], pw[1])
            if (pc.gx, pc.gy) == self.active_patch:
                poses.append((pw, pose.yaw, pose.tilt))
        if not poses:
            return {pt: center for pt in fresh}
        order = cfg.spline_degree + 1
        k = 1.0 / cfg.grid.d
        fresh_cols = [new_points.index(pt) for pt in fresh]
        rows, rhs = [], []
        known_vec = np.array(
            [0.0 if pt in fresh else control_new[q] for q, pt in enumerate(new_points)]
        )
        for pw, yaw, tilt in poses:
            u = (pw[0] - cfg.grid.x0) * k - self.active_patch[0]
            v = (pw[1] - cfg.grid.y0) * k - self.active_patch[1]
            bu, dbu, _ = spl.basis_rows(u, cfg.spline_degree)
            bv, dbv, _ = spl.basis_rows(v, cfg.spline_degree)
            f2, f3, *_ = spl._tilt_terms(yaw, tilt)
            full_rows = np.vstack(
                [np.kron(bv, bu), np.kron(k * dbv, bu), np.kron(bv, k * dbu)]
            )
            full_rhs = np.array([pw[2], -f2, -f3]) - full_rows @ known_vec
            rows.append(full_rows[:, fresh_cols])
            rhs.extend(full_rhs)
        a = np.vstack(rows)
        b = np.array(rhs)
        m = a.shape[1]
        lam = cfg.ridge_scale * cfg.grid.d ** 2
        sol = np.linalg.solve(a.T @ a + lam * np.eye(m), a.T @ b + lam * center * np.ones(m))
        return dict(zip(fresh, sol))

    # --- estimated ground export ---------------------------------------------

    def estimated_spline(self) -> spl.GroundSpline:
        """Frozen plus active control points as a GroundSpline."""
        points = dict(self.static_points)
        if self.control is not None:
            order = self.cfg.spline_degree + 1
            for j in range(order):
                for i in range(order):
                    pt = (self.active_patch[0] + i, self.active_patch[1] + j)
                    points[pt] = float(self.control[j * order + i])
        return spl.GroundSpline(self.cfg.grid, points, self.cfg.spline_degree)


def init_filter(truth_state: ImuState, cfg: FilterConfig) -> SlidingWindowFilter:
    """Ground-truth initialization with a small diagonal covariance."""
    return SlidingWindowFilter(cfg, truth_state)


@dataclass
class RunResult:
    t: np.ndarray
    p: np.ndarray  # (N, 3)
    yaw: np.ndarray
    tilt: np.ndarray  # (N, 2)
    spline: spl.GroundSpline
    counters: Counters
    wall_time: float
    realtime_factor: float


def run_filter(
    samples,
    corrector,
    cfg: FilterConfig,
    init_state: ImuState,
    velocity_updates=True,
) -> RunResult:
    """Process a whole measurement log.

    Per sample: augment once the estimated travel exceeds the augmentation
    distance, otherwise propagate; apply the velocity update at the corrector
    cadence; on a patch crossing initialize the control vector if needed, run
    the manifold update, then slide and marginalize.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty measurement log")
    flt = init_filter(init_state, cfg)
    n = cfg.window_size
    bias_a = np.zeros(3)
    bias_w = np.zeros(3)
    sig_a, sig_w = scale_increment_covariance(
        np.full(3, cfg.initial_sigma2_v_inc),
        np.full(3, cfg.initial_sigma2_q_inc),
        n,
        cfg.dt,
    )
    w_noise = np.diag(np.concatenate([sig_a, sig_w]))

    t_out = np.empty(len(samples))
    p_out = np.empty((len(samples), 3))
    yaw_out = np.empty(len(samples))
    tilt_out = np.empty((len(samples), 2))

    dist = 0.0
    start = time.perf_counter()
    for k, sample in enumerate(samples):
        u = ImuInput(sample.accel - bias_a, sample.gyro - bias_w, cfg.dt)
        p_before = flt.imu.p.copy()
        try:
            if dist >= cfg.augment_distance:
                flt.augment(u, w_noise)
                dist = 0.0
            else:
                flt.propagate(u, w_noise)
        except Exception as exc:
            raise FilterError(f"sample {k} (t={sample.t:.3f}): {exc}") from exc
        dist += float(np.linalg.norm(flt.imu.p - p_before))

        did_velocity = False
        if velocity_updates and k + 1 >= n and (k + 1) % cfg.cadence == 0:
            window = SampleWindow(samples[k + 1 - n : k + 1], n)
            out = corrector.correct(window)
            try:
                flt.update_velocity(out)
            except InnovationGateError:
                flt.counters.gate_rejections += 1
            bias_a = np.asarray(out.bias_a, float)
            bias_w = np.asarray(out.bias_w, float)
            sig_a, sig_w = scale_increment_covariance(
                out.sigma2_v_inc, out.sigma2_q_inc, n, cfg.dt
            )
            w_noise = np.diag(np.concatenate([sig_a, sig_w]))
            did_velocity = True

        if not did_velocity:
            patch = flt.contact_patch(flt.imu.p, flt.imu.yaw, flt.imu.tilt)
            if patch != flt.current_patch:
                if flt.control is None:
                    try:
                        flt.init_control(flt.current_patch)
                    except InsufficientPosesError:
                        pass  # defer one more patch
                flt.update_manifold()
                flt.slide_and_marginalize(patch)

        t_out[k] = sample.t
        p_out[k] = flt.imu.p
        yaw_out[k] = flt.imu.yaw
        tilt_out[k] = flt.imu.tilt
    wall = time.perf_counter() - start
    duration = samples[-1].t - samples[0].t + cfg.dt
    return RunResult(
        t=t_out,
        p=p_out,
        yaw=yaw_out,
        tilt=tilt_out,
        spline=flt.estimated_spline(),
        counters=flt.counters,
        wall_time=wall,
        realtime_factor=duration / wall if wall > 0 else float("inf"),
    )


def dead_reckon(samples, cfg: FilterConfig, init_state: ImuState, bias_a=None, bias_w=None):
    """Propagation-only baseline: integrate the process model, no updates."""
    bias_a = np.zeros(3) if bias_a is None else np.asarray(bias_a, float)
    bias_w = np.zeros(3) if bias_w is None else np.asarray(bias_w, float)
    state = init_state.copy()
    t_out, p_out, yaw_out, tilt_out = [], [], [], []
    for sample in samples:
        u = ImuInput(sample.accel - bias_a, sample.gyro - bias_w, cfg.dt)
        state = propagate_state(state, u)
        t_out.append(sample.t)
        p_out.append(state.p.copy())
        yaw_out.append(state.yaw)
        tilt_out.append(state.tilt.copy())
    return (
        np.array(t_out),
        np.array(p_out),
        np.array(yaw_out),
        np.array(tilt_out),
    )
