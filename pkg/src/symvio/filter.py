"""Equivariant filter backend.

The observer state is a symmetry-group element Xhat together with a covariance
Sigma over the chart coordinates at a fixed origin.  The state estimate is the
group action of Xhat on the origin.  Propagation integrates the lifted IMU
dynamics on the group (ambient RK4, rotations re-projected) and runs a Riccati
step with analytic state/input matrices.  Updates apply a Kalman correction
through the group exponential, using the measured-bearing midpoint form of the
output matrix, which leaves only third-order residual error.

All step functions are pure: they take a FilterState value and return a new
one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .chart import Origin, coord_injection, local_coords, state_dim
from .core import (
    GRAVITY,
    BearingSet,
    ImuInput,
    VisGroupElement,
    VisState,
    frame_change,
    group_action,
    transporter,
)
from .errors import DivergenceError, GainConfigError, LandmarkMismatchError
from .groups import SE3, SE23, YawTranslation, se3_wedge, se23_wedge
from .landmarks import CHART_POINT_DIFF0, tangent_basis

E3 = so3.E3

# chi-square, 2 dof, 0.9973 mass: the 3-sigma analogue for planar residuals.
DEFAULT_GATE = 11.829158081900795


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class GainConfig:
    """Noise densities and priors; stds here, variances in the built matrices.

    The walk terms feed the additive state gain, the white-noise terms feed the
    input gain through the input matrix, and the sigma0/land fields build the
    initial and per-landmark covariance blocks.
    """

    gyro_noise: float = 1e-3
    accel_noise: float = 1e-2
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4
    bearing_noise: float = 2e-3
    nav_process: float = 1e-6
    ext_process: float = 1e-6
    land_process: float = 1e-6
    # Tight by default because runs are normally seeded from a known state;
    # widen these three for an uncertain start.
    sigma0_att: float = 1e-3
    sigma0_pos: float = 1e-3
    sigma0_vel: float = 1e-3
    sigma0_gyro_bias: float = 0.02
    sigma0_accel_bias: float = 0.1
    sigma0_ext_rot: float = 0.01
    sigma0_ext_pos: float = 0.01
    land_angle_std: float = 0.1
    land_depth_std: float = 0.5
    gate: float = DEFAULT_GATE
    second_order_transition: bool = True
    gravity: float = GRAVITY

    def __post_init__(self):
        positive = (
            "gyro_noise accel_noise gyro_bias_walk accel_bias_walk bearing_noise "
            "nav_process ext_process land_process sigma0_att sigma0_pos sigma0_vel "
            "sigma0_gyro_bias sigma0_accel_bias sigma0_ext_rot sigma0_ext_pos "
            "land_angle_std land_depth_std gate gravity"
        ).split()
        for name in positive:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise GainConfigError(f"{name} must be finite and positive, got {v}")

    def input_gain(self) -> np.ndarray:
        """6x6 white-noise covariance density of (gyro, accel)."""
        return np.diag([self.gyro_noise**2] * 3 + [self.accel_noise**2] * 3)

    def state_gain(self, n: int) -> np.ndarray:
        """Additive process covariance density on the chart coordinates."""
        d = (
            [self.nav_process**2] * 9
            + [self.gyro_bias_walk**2] * 3
            + [self.accel_bias_walk**2] * 3
            + [self.ext_process**2] * 6
            + [self.land_process**2] * 3 * n
        )
        return np.diag(d)

    def output_gain(self) -> float:
        """Per-axis bearing variance on the tangent plane."""
        return self.bearing_noise**2

    def landmark_block(self) -> np.ndarray:
        return np.diag(
            [self.land_angle_std**2, self.land_angle_std**2, self.land_depth_std**2]
        )

    def initial_sigma(self, n: int = 0) -> np.ndarray:
        d = (
            [self.sigma0_att**2] * 3
            + [self.sigma0_pos**2] * 3
            + [self.sigma0_vel**2] * 3
            + [self.sigma0_gyro_bias**2] * 3
            + [self.sigma0_accel_bias**2] * 3
            + [self.sigma0_ext_rot**2] * 3
            + [self.sigma0_ext_pos**2] * 3
            + [self.land_angle_std**2, self.land_angle_std**2, self.land_depth_std**2] * n
        )
        return np.diag(d)


@dataclass(frozen=True, eq=False)
class FilterState:
    """Observer group element, chart covariance, chart origin and clock."""

    Xhat: VisGroupElement
    Sigma: np.ndarray
    origin: Origin
    clock: float = 0.0

    def __post_init__(self):
        n = self.Xhat.n_landmarks
        if self.Xhat.land_ids != self.origin.ids:
            raise LandmarkMismatchError("observer and origin registries differ")
        S = np.asarray(self.Sigma, dtype=float)
        d = state_dim(n)
        if S.shape != (d, d):
            raise ValueError(f"Sigma must be {d}x{d}, got {S.shape}")
        if not np.all(np.isfinite(S)):
            raise DivergenceError("non-finite covariance")
        if np.max(np.abs(S - S.T)) > 1e-9:
            raise DivergenceError("covariance lost symmetry")
        S = _sym(S)
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise DivergenceError("covariance is not positive-definite") from exc
        S.flags.writeable = False
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "clock", float(self.clock))

    @property
    def registry(self) -> dict:
        return {lid: 21 + 3 * i for i, lid in enumerate(self.Xhat.land_ids)}

    @property
    def n_landmarks(self) -> int:
        return self.Xhat.n_landmarks


def initial_state(gains: GainConfig, estimate: VisState, clock: float = 0.0) -> FilterState:
    """Start the filter at a given state estimate (typically without landmarks).

    The chart origin copies the estimate's nav, bias and extrinsic components,
    so the observer starts at identity in those slots; landmark slots, if any,
    carry the scaled rotations mapping each estimated point onto the origin
    anchor.
    """
    origin = Origin.build(
        estimate.land_ids,
        pose=estimate.pose,
        vel=estimate.vel,
        bias=estimate.bias,
        cam=estimate.cam,
    )
    Xhat = transporter(origin.state, estimate)
    return FilterState(Xhat, gains.initial_sigma(estimate.n_landmarks), origin, clock)


def state_estimate(fs: FilterState) -> VisState:
    return group_action(fs.Xhat, fs.origin.state)


def landmark_depths(fs: FilterState) -> np.ndarray:
    """Estimated camera-frame depth per landmark, in registry order.

    Origin anchors are unit bearings, so each depth is the inverse of the
    observer's scale slot.
    """
    return 1.0 / np.asarray(fs.Xhat.land_scale, dtype=float)


# ---------------------------------------------------------------------------
# Propagation.


def _integrate_observer(
    X: VisGroupElement, origin: Origin, u: ImuInput, dt: float, g: float
) -> VisGroupElement:
    """One RK4 step of the observer flow dX/dt = X * lift(estimate, u).

    Stages work on raw matrices (the additive stage combinations leave the
    group); rotation blocks are projected back afterwards.  The homogeneous
    bottom rows have zero derivative, so only rotation blocks need care.
    """
    o = origin.state
    N0 = o.nav().as_matrix()
    C0 = origin.camera_pose().as_matrix()
    bhat = o.bias + X.beta
    n = X.n_landmarks

    def deriv(Nc, Bc, Rc, cc):
        Nhat = N0 @ Nc
        Chat = C0 @ Bc
        Rh = Nhat[:3, :3]
        mv = Rh.T @ Nhat[:3, 4]
        w = u.gyro - bhat[:3]
        nv = (u.accel - bhat[3:]) + g * (Rh.T @ E3)
        RT = Rh.T @ Chat[:3, :3]
        xT = Rh.T @ (Chat[:3, 3] - Nhat[:3, 3])
        wc = RT.T @ w
        vc = RT.T @ (mv - np.cross(xT, w))
        dN = Nc @ se23_wedge(np.concatenate([w, mv, nv]))
        dB = Bc @ se3_wedge(np.concatenate([wc, vc]))
        if n:
            q = Rc[:, 2, :] / cc[:, None]
            rho2 = np.sum(q * q, axis=1)
            om = wc[None, :] + np.cross(q, vc[None, :]) / rho2[:, None]
            dR = Rc @ so3.skew(om)
            dc = cc * ((q @ vc) / rho2)
        else:
            dR = np.zeros((0, 3, 3))
            dc = np.zeros(0)
        return dN, dB, dR, dc

    Nm = X.nav.as_matrix()
    Bm = X.cam.as_matrix()
    RQ = np.array(X.land_rot)
    cQ = np.array(X.land_scale)

    k1 = deriv(Nm, Bm, RQ, cQ)
    k2 = deriv(
        Nm + 0.5 * dt * k1[0], Bm + 0.5 * dt * k1[1], RQ + 0.5 * dt * k1[2], cQ + 0.5 * dt * k1[3]
    )
    k3 = deriv(
        Nm + 0.5 * dt * k2[0], Bm + 0.5 * dt * k2[1], RQ + 0.5 * dt * k2[2], cQ + 0.5 * dt * k2[3]
    )
    k4 = deriv(Nm + dt * k3[0], Bm + dt * k3[1], RQ + dt * k3[2], cQ + dt * k3[3])

    s = dt / 6.0
    Nn = Nm + s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    Bn = Bm + s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    Rn = RQ + s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    cn = cQ + s * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])

    if not (np.all(np.isfinite(Nn)) and np.all(np.isfinite(Bn)) and np.all(np.isfinite(cn))):
        raise DivergenceError("observer integration produced non-finite values")
    Nn[:3, :3] = so3.project_rotation(Nn[:3, :3])
    Bn[:3, :3] = so3.project_rotation(Bn[:3, :3])
    if n:
        if np.min(cn) <= 0.0:
            raise DivergenceError("landmark scale collapsed during propagation")
        Rn = so3.project_rotation_many(Rn)
    return VisGroupElement(
        SE23.from_matrix(Nn), X.beta, SE3.from_matrix(Bn), X.land_ids, Rn, cn
    )


def _landmark_geometry(X: VisGroupElement):
    """Shared per-landmark pieces for the linearized matrices.

    Returns the camera-frame landmark points of the current estimate, their
    squared norms, and the (n, 3, 6) map taking a camera-twist perturbation
    of the true state into chart-rate contributions of the pulled-back
    landmark error point.
    """
    RQ = X.land_rot
    c = X.land_scale
    q = RQ[:, 2, :] / c[:, None]
    rho2 = np.sum(q * q, axis=1)
    N0T = CHART_POINT_DIFF0.T
    M = np.empty((len(c), 3, 6))
    M[:, :, :3] = N0T @ (so3.skew(E3) @ RQ)
    M[:, :, 3:] = -c[:, None, None] * (N0T @ RQ)
    return q, rho2, M


def _linearized(fs: FilterState, u: ImuInput, g: float):
    """Error-state and input matrices, sharing the common intermediates."""
    X, o = fs.Xhat, fs.origin.state
    n = X.n_landmarks
    d = state_dim(n)
    navhat = o.nav() @ X.nav
    Rhat = navhat.rot.m
    bhat = o.bias + X.beta
    Chat = fs.origin.camera_pose() @ X.cam
    That = navhat.pose().inverse() @ Chat
    R0 = o.pose.rot.m

    w = u.gyro - bhat[:3]
    m = Rhat.T @ navhat.v
    AdTinv = That.inverse().adjoint()
    lamB = AdTinv @ np.concatenate([w, m])
    Wc, Vc = lamB[:3], lamB[3:]

    Dm = np.zeros((3, 9))
    Dm[:, 0:3] = Rhat.T @ so3.skew(o.vel) @ R0
    Dm[:, 6:9] = Rhat.T @ R0
    Dn = g * (Rhat.T @ so3.skew(E3) @ R0)

    DF = np.zeros((9, 21))
    DF[3:6, 0:9] = Dm
    DF[6:9, 0:3] = Dn
    DF[0:3, 9:12] = -np.eye(3)
    DF[6:9, 12:15] = -np.eye(3)

    A = np.zeros((d, d))
    AdAnav = X.nav.adjoint()
    A[0:9, 0:21] = AdAnav @ DF

    adLB = np.zeros((6, 6))
    adLB[:3, :3] = so3.skew(Wc)
    adLB[3:, :3] = so3.skew(Vc)
    adLB[3:, 3:] = so3.skew(Wc)

    sel = np.zeros((6, 9))
    sel[:3, :3] = np.eye(3)
    sel[3:, 3:6] = np.eye(3)
    twist = np.zeros((6, 9))
    twist[3:6] = Dm
    DLB = np.zeros((6, 21))
    DLB[:, 0:9] = AdTinv @ twist - adLB @ AdTinv @ X.nav.pose().inverse().adjoint() @ sel
    DLB[:, 9:12] = -AdTinv[:, 0:3]
    DLB[:, 15:21] = adLB @ X.cam.inverse().adjoint()

    AdB = X.cam.adjoint()
    A[15:21, 0:21] = AdB @ DLB

    # Input matrix under the measured = true + noise convention: positive
    # gyro noise makes the corrected rate overshoot, so every row is the
    # negative of the corresponding true-rate sensitivity.
    B = np.zeros((d, 6))
    nav_map = np.zeros((9, 6))
    nav_map[0:3, 0:3] = -np.eye(3)
    nav_map[6:9, 3:6] = -np.eye(3)
    B[0:9] = AdAnav @ nav_map
    B[15:21, 0:3] = -AdB @ AdTinv[:, 0:3]

    if n:
        q, rho2, M = _landmark_geometry(X)
        A[21:, 0:21] = (M @ DLB).reshape(3 * n, 21)
        B[21:, 0:3] = -(M @ AdTinv[:, 0:3]).reshape(3 * n, 3)
        # Own block: the twist seen by a landmark differs from the camera
        # twist by the parallax rotation q x v / rho^2 and the range rate.
        shat = (q @ Vc) / rho2
        par = np.cross(q, Vc[None, :]) / rho2[:, None]
        rot_par = np.einsum("nij,nj->ni", X.land_rot, par)
        N0 = CHART_POINT_DIFF0
        for i in range(n):
            own = N0.T @ (shat[i] * np.eye(3) + so3.skew(rot_par[i])) @ N0
            A[21 + 3 * i : 24 + 3 * i, 21 + 3 * i : 24 + 3 * i] = own
    return A, B


def state_matrix(fs: FilterState, u: ImuInput, g: float = GRAVITY) -> np.ndarray:
    """Error-state matrix: Jacobian at zero of the chart error dynamics."""
    return _linearized(fs, u, g)[0]


def input_matrix(fs: FilterState) -> np.ndarray:
    """Maps (gyro, accel) white noise into chart-coordinate error rates."""
    return _linearized(fs, ImuInput(np.zeros(3), np.zeros(3)), GRAVITY)[1]


def propagate(fs: FilterState, u: ImuInput, dt: float, gains: GainConfig) -> FilterState:
    """Advance observer and covariance by one zero-order-hold IMU interval."""
    if dt < 0.0 or not np.isfinite(dt):
        raise ValueError(f"dt must be non-negative and finite, got {dt}")
    if dt == 0.0:
        return fs
    if not (np.all(np.isfinite(u.gyro)) and np.all(np.isfinite(u.accel))):
        raise DivergenceError("non-finite IMU input")
    n = fs.n_landmarks
    X = _integrate_observer(fs.Xhat, fs.origin, u, dt, gains.gravity)
    A, B = _linearized(fs, u, gains.gravity)
    Phi = np.eye(state_dim(n)) + dt * A
    if gains.second_order_transition:
        Phi += 0.5 * dt * dt * (A @ A)
    Q = dt * (gains.state_gain(n) + B @ gains.input_gain() @ B.T)
    Sigma = Phi @ fs.Sigma @ Phi.T + Q
    return FilterState(X, _sym(Sigma), fs.origin, fs.clock + dt)


# ---------------------------------------------------------------------------
# Update.


def cstar_block(y_pulled: np.ndarray) -> np.ndarray:
    """Midpoint output block on one landmark's algebra coordinates, 3x4.

    ``y_pulled`` is the measured bearing carried into the origin output frame.
    First three columns act on the rotation coordinates through the midpoint
    lever ``(y + e3)/2``; the scale column is zero because depth does not move
    the bearing.
    """
    out = np.zeros((3, 4))
    out[:, :3] = 0.5 * so3.skew(y_pulled + E3)
    return out


def _chart_cstar(y_pulled: np.ndarray) -> np.ndarray:
    """3x3 output block on one landmark's chart coordinates."""
    return cstar_block(y_pulled)[:, (0, 1, 3)]


@dataclass(frozen=True, eq=False)
class UpdateReport:
    """Per-frame diagnostics of one measurement update."""

    used_ids: tuple
    rejected_ids: tuple
    residual: np.ndarray
    mahalanobis: dict
    correction: np.ndarray


def output_matrix(fs: FilterState, y: BearingSet) -> np.ndarray:
    """Stacked tangent-plane output matrix, 2m x (21+3n)."""
    C, _, _, _ = _output_pieces(fs, y)
    return C


def _output_pieces(fs: FilterState, y: BearingSet):
    """Rows, residuals and per-landmark Mahalanobis pieces for an update.

    The innovation for landmark i is the measured bearing pulled back to the
    origin output frame minus the reference bearing e3.  That difference is
    exactly orthogonal to the midpoint direction, so expressing it in a
    tangent basis at the midpoint loses nothing.
    """
    reg = fs.registry
    missing = [lid for lid in y.ids if lid not in reg]
    if missing:
        raise LandmarkMismatchError(f"bearings for unregistered landmarks {missing}")
    d = state_dim(fs.n_landmarks)
    index = {lid: i for i, lid in enumerate(fs.Xhat.land_ids)}
    rows = []
    resid = []
    cols = []
    antipodal = []
    for k, lid in enumerate(y.ids):
        i = index[lid]
        ypull = fs.Xhat.land_rot[i] @ y.vecs[k]
        if ypull[2] <= -1.0 + 1e-7:
            antipodal.append(lid)
            continue
        mid = ypull + E3
        basis = tangent_basis(mid / np.linalg.norm(mid))
        rows.append((lid, basis @ _chart_cstar(ypull)))
        resid.append(basis @ (ypull - E3))
        cols.append(reg[lid])
    C = np.zeros((2 * len(rows), d))
    for r, (_, blk) in enumerate(rows):
        C[2 * r : 2 * r + 2, cols[r] : cols[r] + 3] = blk
    r = np.concatenate(resid) if resid else np.zeros(0)
    ids = tuple(lid for lid, _ in rows)
    return C, r, ids, tuple(antipodal)


def update_with_report(fs: FilterState, y: BearingSet, gains: GainConfig):
    """Kalman-style correction; returns the new state and diagnostics."""
    C, r, ids, antipodal = _output_pieces(fs, y)
    nvar = gains.output_gain()
    Sigma = fs.Sigma
    # Per-landmark gate on its own 2x2 innovation covariance (the output
    # matrix has no cross-landmark columns, so the block is exact).
    keep = []
    mahal = {}
    for k, lid in enumerate(ids):
        Ck = C[2 * k : 2 * k + 2]
        rk = r[2 * k : 2 * k + 2]
        Sk = Ck @ Sigma @ Ck.T + nvar * np.eye(2)
        gam = float(rk @ np.linalg.solve(Sk, rk))
        mahal[lid] = gam
        if gam <= gains.gate:
            keep.append(k)
    rejected = tuple(lid for k, lid in enumerate(ids) if k not in keep) + antipodal
    if not keep:
        report = UpdateReport((), rejected, np.zeros(0), mahal, np.zeros(0))
        return fs, report
    sel = np.concatenate([[2 * k, 2 * k + 1] for k in keep])
    C = C[sel]
    r = r[sel]
    S = C @ Sigma @ C.T + nvar * np.eye(len(r))
    K = np.linalg.solve(S, C @ Sigma).T
    delta = K @ r
    if not np.all(np.isfinite(delta)):
        raise DivergenceError("non-finite correction")
    n = fs.n_landmarks
    Xnew = VisGroupElement.exp(fs.Xhat.land_ids, coord_injection(n) @ delta) @ fs.Xhat
    Sigma_new = _sym((np.eye(state_dim(n)) - K @ C) @ Sigma)
    used = tuple(ids[k] for k in keep)
    report = UpdateReport(used, rejected, r, mahal, delta)
    return FilterState(Xnew, Sigma_new, fs.origin, fs.clock), report


def update(fs: FilterState, y: BearingSet, gains: GainConfig) -> FilterState:
    return update_with_report(fs, y, gains)[0]


# ---------------------------------------------------------------------------
# Landmark lifecycle.


def add_landmark(
    fs: FilterState, lid: int, y0: np.ndarray, depth: float, gains: GainConfig
) -> FilterState:
    """Register a landmark seen along unit bearing y0 at a guessed depth.

    The new scaled rotation is chosen so the estimated camera-frame point is
    exactly depth * y0; the covariance gains a diagonal block with large
    log-depth uncertainty.
    """
    lid = int(lid)
    if lid in fs.Xhat.land_ids:
        raise LandmarkMismatchError(f"landmark {lid} already registered")
    if not depth > 0.0:
        raise ValueError("depth must be positive")
    y0 = np.asarray(y0, dtype=float).reshape(3)
    y0 = y0 / np.linalg.norm(y0)
    o = fs.origin.state
    ids = fs.Xhat.land_ids + (lid,)
    origin = Origin.build(ids, pose=o.pose, vel=o.vel, bias=o.bias, cam=o.cam)
    rot = np.concatenate([fs.Xhat.land_rot, so3.rotation_between(y0, E3)[None]], axis=0)
    scale = np.concatenate([fs.Xhat.land_scale, [1.0 / depth]])
    Xnew = VisGroupElement(fs.Xhat.nav, fs.Xhat.beta, fs.Xhat.cam, ids, rot, scale)
    n_old = fs.n_landmarks
    d_new = state_dim(n_old + 1)
    Sigma = np.zeros((d_new, d_new))
    d_old = state_dim(n_old)
    Sigma[:d_old, :d_old] = fs.Sigma
    Sigma[d_old:, d_old:] = gains.landmark_block()
    return FilterState(Xnew, Sigma, origin, fs.clock)


def remove_landmark(fs: FilterState, lid: int) -> FilterState:
    if lid not in fs.Xhat.land_ids:
        raise LandmarkMismatchError(f"landmark {lid} is not registered")
    i = fs.Xhat.land_ids.index(lid)
    ids = fs.Xhat.land_ids[:i] + fs.Xhat.land_ids[i + 1 :]
    o = fs.origin.state
    origin = Origin.build(ids, pose=o.pose, vel=o.vel, bias=o.bias, cam=o.cam)
    rot = np.delete(fs.Xhat.land_rot, i, axis=0)
    scale = np.delete(fs.Xhat.land_scale, i)
    Xnew = VisGroupElement(fs.Xhat.nav, fs.Xhat.beta, fs.Xhat.cam, ids, rot, scale)
    drop = slice(21 + 3 * i, 24 + 3 * i)
    keep = np.setdiff1d(np.arange(state_dim(fs.n_landmarks)), np.arange(drop.start, drop.stop))
    Sigma = fs.Sigma[np.ix_(keep, keep)]
    return FilterState(Xnew, Sigma, origin, fs.clock)


# ---------------------------------------------------------------------------
# Structural diagnostics.


def unobservable_directions(origin: Origin, h: float = 1e-6) -> np.ndarray:
    """Chart-coordinate tangents of the reference-frame orbit, (21+3n) x 4.

    Columns span the yaw and translation directions that no bearing or IMU
    measurement can pin down; the output matrix annihilates them exactly.
    """
    n = origin.state.n_landmarks
    out = np.zeros((state_dim(n), 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        plus = local_coords(origin, frame_change(YawTranslation.exp(e), origin.state))
        minus = local_coords(origin, frame_change(YawTranslation.exp(-e), origin.state))
        out[:, k] = (plus - minus) / (2.0 * h)
    return out
