"""State space, symmetry group and equivariant structure of the VIO problem.

The state gathers the IMU extended pose, IMU biases, camera extrinsics and a
set of point landmarks:

    xi = (pose P_B, velocity v_B, bias b, extrinsics T, points p_i).

Dynamics under an IMU input u = (gyro w, accel a) with gravity g e3:

    d/dt R_B = R_B (w - b_gyro)^,   d/dt x_B = v_B,
    d/dt v_B = R_B (a - b_acc) + g e3,   d/dt b = 0,  d/dt T = 0,  d/dt p_i = 0.

Each landmark is measured as a unit bearing in the camera frame,
y_i = (C^-1 p_i)/|C^-1 p_i| with C = P_B T.

Two compatible group actions organise everything:

* a reference-frame change by S (yaw + translation) acts on states and leaves
  both the inputs and the outputs untouched;
* the symmetry group (extended pose, bias offset, extrinsic pose, one scaled
  rotation per landmark) acts transitively on the state space and carries the
  lifted dynamics used by the filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import ExceptionSetError, GeometryError, LandmarkMismatchError
from .groups import SE3, SE23, SOT3, Rot3, YawTranslation
from .landmarks import CAMERA_COLLISION_TOL

GRAVITY = 9.81
E3 = so3.E3


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ImuInput:
    """One IMU sample: rad/s and m/s^2 in the body frame."""

    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gyro", _freeze(np.asarray(self.gyro, dtype=float).reshape(3)))
        object.__setattr__(self, "accel", _freeze(np.asarray(self.accel, dtype=float).reshape(3)))


@dataclass(frozen=True, eq=False)
class BearingSet:
    """Unit bearing per landmark id, stored as parallel arrays."""

    ids: tuple
    vecs: np.ndarray

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        vecs = np.asarray(self.vecs, dtype=float).reshape(len(ids), 3)
        if vecs.size and np.max(np.abs(np.linalg.norm(vecs, axis=1) - 1.0)) > 1e-9:
            raise GeometryError("bearings must be unit vectors")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vecs", _freeze(vecs))

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, ids) -> "BearingSet":
        index = {k: i for i, k in enumerate(self.ids)}
        rows = [index[k] for k in ids]
        return BearingSet(tuple(ids), self.vecs[rows])


@dataclass(frozen=True, eq=False)
class VisState:
    """Full VIO state; landmark coordinates are stacked in registry order."""

    pose: SE3
    vel: np.ndarray
    bias: np.ndarray
    cam: SE3
    land_ids: tuple
    land_pts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vel", _freeze(np.asarray(self.vel, dtype=float).reshape(3)))
        object.__setattr__(self, "bias", _freeze(np.asarray(self.bias, dtype=float).reshape(6)))
        ids = tuple(int(i) for i in self.land_ids)
        if len(set(ids)) != len(ids):
            raise LandmarkMismatchError("landmark ids must be unique")
        pts = np.asarray(self.land_pts, dtype=float).reshape(len(ids), 3)
        object.__setattr__(self, "land_ids", ids)
        object.__setattr__(self, "land_pts", _freeze(pts))
        q = self.cam_points()
        if q.size and np.min(np.linalg.norm(q, axis=1)) <= CAMERA_COLLISION_TOL:
            raise ExceptionSetError("a landmark coincides with the camera centre")

    @property
    def n_landmarks(self) -> int:
        return len(self.land_ids)

    def nav(self) -> SE23:
        """Extended pose (R_B, x_B, v_B)."""
        return SE23(self.pose.rot, self.pose.t, self.vel)

    def camera_pose(self) -> SE3:
        return self.pose @ self.cam

    def cam_points(self) -> np.ndarray:
        """Landmarks in the camera frame, shape (n, 3)."""
        C = self.camera_pose()
        return (self.land_pts - C.t) @ C.rot.m

    def with_nav(self, nav: SE23) -> "VisState":
        return VisState(nav.pose(), nav.v, self.bias, self.cam, self.land_ids, self.land_pts)


@dataclass(frozen=True, eq=False)
class VisTangent:
    """Ambient-coordinate derivative of a state; shapes mirror VisState."""

    rot_dot: np.ndarray
    pos_dot: np.ndarray
    vel_dot: np.ndarray
    bias_dot: np.ndarray
    cam_rot_dot: np.ndarray
    cam_pos_dot: np.ndarray
    land_dot: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [
                self.rot_dot.reshape(9),
                self.pos_dot,
                self.vel_dot,
                self.bias_dot,
                self.cam_rot_dot.reshape(9),
                self.cam_pos_dot,
                self.land_dot.reshape(-1),
            ]
        )


def flatten_state(xi: VisState) -> np.ndarray:
    """Ambient embedding used by finite-difference checks; layout matches VisTangent."""
    return np.concatenate(
        [
            xi.pose.rot.m.reshape(9),
            xi.pose.t,
            xi.vel,
            xi.bias,
            xi.cam.rot.m.reshape(9),
            xi.cam.t,
            xi.land_pts.reshape(-1),
        ]
    )


def dynamics(xi: VisState, u: ImuInput, g: float = GRAVITY) -> VisTangent:
    """Bias-corrected IMU dynamics; biases, extrinsics and landmarks are static."""
    R = xi.pose.rot.m
    w = u.gyro - xi.bias[:3]
    a = u.accel - xi.bias[3:]
    return VisTangent(
        rot_dot=R @ so3.skew(w),
        pos_dot=np.array(xi.vel),
        vel_dot=R @ a + g * E3,
        bias_dot=np.zeros(6),
        cam_rot_dot=np.zeros((3, 3)),
        cam_pos_dot=np.zeros(3),
        land_dot=np.zeros_like(xi.land_pts),
    )


def measure(xi: VisState) -> BearingSet:
    """Unit bearings of every landmark in the camera frame."""
    q = xi.cam_points()
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    if q.size and np.min(norms) <= CAMERA_COLLISION_TOL:
        raise ExceptionSetError("bearing undefined: landmark at camera centre")
    return BearingSet(xi.land_ids, q / norms)


def measure_subset(xi: VisState, ids) -> BearingSet:
    return measure(xi).subset(ids)


# ---------------------------------------------------------------------------
# Reference-frame invariance.


def frame_change(S: YawTranslation, xi: VisState) -> VisState:
    """Move the whole world by the inverse of S (a right action on states).

    Pose and landmarks are premultiplied by S^-1; velocity rotates; biases and
    extrinsics are body-frame quantities and do not move.
    """
    Sinv = S.inverse().as_se3()
    pose = Sinv @ xi.pose
    vel = Sinv.rot.act(xi.vel)
    pts = Sinv.act(xi.land_pts)
    return VisState(pose, vel, xi.bias, xi.cam, xi.land_ids, pts)


def frame_change_tangent(S: YawTranslation, tan: VisTangent) -> VisTangent:
    """Differential of :func:`frame_change` applied to an ambient tangent."""
    Rs = S.rot().T
    return VisTangent(
        rot_dot=Rs @ tan.rot_dot,
        pos_dot=Rs @ tan.pos_dot,
        vel_dot=Rs @ tan.vel_dot,
        bias_dot=np.array(tan.bias_dot),
        cam_rot_dot=np.array(tan.cam_rot_dot),
        cam_pos_dot=np.array(tan.cam_pos_dot),
        land_dot=tan.land_dot @ Rs.T,
    )


# ---------------------------------------------------------------------------
# Symmetry group.


@dataclass(frozen=True, eq=False)
class VisGroupElement:
    """Element of the VIO symmetry group.

    Components: extended pose ``nav`` acting on the IMU states, additive bias
    offset ``beta``, extrinsic pose ``cam``, and one scaled rotation per
    landmark stored as stacked rotations ``land_rot`` and scales
    ``land_scale``.  The algebra vector layout is
    [nav 9 | bias 6 | extrinsics 6 | 4 per landmark].
    """

    nav: SE23
    beta: np.ndarray
    cam: SE3
    land_ids: tuple
    land_rot: np.ndarray
    land_scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _freeze(np.asarray(self.beta, dtype=float).reshape(6)))
        ids = tuple(int(i) for i in self.land_ids)
        n = len(ids)
        rot = np.asarray(self.land_rot, dtype=float).reshape(n, 3, 3)
        scale = np.asarray(self.land_scale, dtype=float).reshape(n)
        if n and np.min(scale) <= 0.0:
            raise LandmarkMismatchError("landmark scales must be positive")
        object.__setattr__(self, "land_ids", ids)
        object.__setattr__(self, "land_rot", _freeze(rot))
        object.__setattr__(self, "land_scale", _freeze(scale))

    @property
    def n_landmarks(self) -> int:
        return len(self.land_ids)

    @staticmethod
    def identity(ids=()) -> "VisGroupElement":
        n = len(ids)
        return VisGroupElement(
            SE23.identity(),
            np.zeros(6),
            SE3.identity(),
            tuple(ids),
            np.broadcast_to(np.eye(3), (n, 3, 3)),
            np.ones(n),
        )

    @staticmethod
    def algebra_dim(n: int) -> int:
        return 21 + 4 * n

    @staticmethod
    def exp(ids, v: np.ndarray) -> "VisGroupElement":
        ids = tuple(ids)
        n = len(ids)
        v = np.asarray(v, dtype=float).reshape(21 + 4 * n)
        land = v[21:].reshape(n, 4)
        return VisGroupElement(
            SE23.exp(v[0:9]),
            v[9:15],
            SE3.exp(v[15:21]),
            ids,
            so3.rodrigues_many(land[:, :3]),
            np.exp(land[:, 3]),
        )

    def log(self) -> np.ndarray:
        land = np.zeros((self.n_landmarks, 4))
        if self.n_landmarks:
            land[:, :3] = so3.log_rotation_many(self.land_rot)
            land[:, 3] = np.log(self.land_scale)
        return np.concatenate([self.nav.log(), self.beta, self.cam.log(), land.reshape(-1)])

    def inverse(self) -> "VisGroupElement":
        return VisGroupElement(
            self.nav.inverse(),
            -self.beta,
            self.cam.inverse(),
            self.land_ids,
            self.land_rot.transpose(0, 2, 1),
            1.0 / self.land_scale,
        )

    def compose(self, other: "VisGroupElement") -> "VisGroupElement":
        if self.land_ids != other.land_ids:
            raise LandmarkMismatchError("composing group elements with different registries")
        return VisGroupElement(
            self.nav @ other.nav,
            self.beta + other.beta,
            self.cam @ other.cam,
            self.land_ids,
            self.land_rot @ other.land_rot,
            self.land_scale * other.land_scale,
        )

    __matmul__ = compose

    def adjoint(self) -> np.ndarray:
        """Block-diagonal adjoint on the stacked algebra vector."""
        n = self.n_landmarks
        d = 21 + 4 * n
        out = np.zeros((d, d))
        out[0:9, 0:9] = self.nav.adjoint()
        out[9:15, 9:15] = np.eye(6)
        out[15:21, 15:21] = self.cam.adjoint()
        for i in range(n):
            s = 21 + 4 * i
            out[s : s + 3, s : s + 3] = self.land_rot[i]
            out[s + 3, s + 3] = 1.0
        return out

    def landmark(self, i: int) -> SOT3:
        return SOT3(Rot3(self.land_rot[i]), float(self.land_scale[i]))


def group_action(X: VisGroupElement, xi: VisState) -> VisState:
    """Transitive right action of the symmetry group on states.

    Nav states move by right translation by the extended-pose component; biases
    shift; extrinsics become P_A^-1 T B; each landmark is carried through the
    camera frame by the inverse scaled rotation.
    """
    if X.land_ids != xi.land_ids:
        raise LandmarkMismatchError("group element and state have different registries")
    nav = xi.nav() @ X.nav
    bias = xi.bias + X.beta
    cam = X.nav.pose().inverse() @ xi.cam @ X.cam
    # Landmarks: p -> (C o B) applied to (1/c) R_Q^T (C^-1 p).
    q = xi.cam_points()
    q_new = np.einsum("nji,nj->ni", X.land_rot, q) / X.land_scale[:, None] if len(q) else q
    C_new = xi.camera_pose() @ X.cam
    pts = C_new.act(q_new)
    return VisState(nav.pose(), nav.v, bias, cam, xi.land_ids, pts)


def nav_action(A: SE23, nav: SE23) -> SE23:
    """Restriction of the group action to the extended pose: right translation."""
    return nav @ A


def output_action(X: VisGroupElement, y: BearingSet) -> BearingSet:
    """Right action on bearings matching :func:`group_action`: y_i -> R_Q_i^T y_i."""
    if X.land_ids != y.ids:
        raise LandmarkMismatchError("group element and bearings have different registries")
    return BearingSet(y.ids, np.einsum("nji,nj->ni", X.land_rot, y.vecs))


def transporter(a: VisState, b: VisState) -> VisGroupElement:
    """Group element X with group_action(X, a) == b.

    Built componentwise: the nav part is the extended-pose difference, the bias
    part the bias difference, the extrinsic part the camera-pose difference,
    and each landmark part the scaled rotation taking b's camera-frame point to
    a's camera-frame point.
    """
    if a.land_ids != b.land_ids:
        raise LandmarkMismatchError("transporter needs matching registries")
    nav = a.nav().inverse() @ b.nav()
    beta = b.bias - a.bias
    Ca, Cb = a.camera_pose(), b.camera_pose()
    cam = Ca.inverse() @ Cb
    qa = a.cam_points()
    qb = b.cam_points()
    n = a.n_landmarks
    rots = np.empty((n, 3, 3))
    scales = np.empty(n)
    for i in range(n):
        da, db = np.linalg.norm(qa[i]), np.linalg.norm(qb[i])
        rots[i] = so3.rotation_between(qb[i], qa[i])
        scales[i] = da / db
    return VisGroupElement(nav, beta, cam, a.land_ids, rots, scales)


# ---------------------------------------------------------------------------
# Lift: group-algebra velocity whose action reproduces the dynamics.


def lift(xi: VisState, u: ImuInput, g: float = GRAVITY) -> np.ndarray:
    """Algebra vector (dim 21 + 4n) solving the lift condition for (xi, u).

    Nav slot: bias-corrected body rates, body-frame velocity, bias-corrected
    specific force plus gravity seen in the body frame.  Extrinsic slot: the
    same rigid velocity moved into the camera frame.  Landmark slots: the
    scaled-rotation velocity that keeps a static point fixed under the moving
    camera.  The bias slot is zero.
    """
    R = xi.pose.rot.m
    w = u.gyro - xi.bias[:3]
    m = R.T @ xi.vel
    nvec = (u.accel - xi.bias[3:]) + g * (R.T @ E3)

    cam_twist = xi.cam.inverse().adjoint() @ np.concatenate([w, m])
    w_c, v_c = cam_twist[:3], cam_twist[3:]

    n = xi.n_landmarks
    land = np.zeros((n, 4))
    if n:
        q = xi.cam_points()
        r2 = np.sum(q * q, axis=1)
        land[:, :3] = w_c + np.cross(q, v_c[None, :]) / r2[:, None]
        land[:, 3] = (q @ v_c) / r2
    return np.concatenate([w, m, nvec, np.zeros(6), cam_twist, land.reshape(-1)])
