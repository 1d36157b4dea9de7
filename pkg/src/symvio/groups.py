"""Matrix Lie groups used by the filter.

Conventions fixed once here and relied on everywhere else:

* algebra coordinates are ordered (rotation, translation) for SE(3),
  (rotation, translation, velocity) for the extended poses, and
  (rotation, scale) for the scaled rotations;
* ``exp``/``log`` use closed forms with Taylor fallbacks below 1e-6 rad;
* rotation blocks are re-orthonormalised after 100 compositions or whenever
  the orthogonality defect exceeds 1e-7.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .errors import GeometryError

ORTHO_DRIFT_TOL = 1e-7
ORTHO_AGE_LIMIT = 100
CONSTRUCT_TOL = 1e-6


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


def sphere_project(v: np.ndarray) -> np.ndarray:
    """v / |v|, raising on vectors shorter than 1e-9."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n <= 1e-9):
        raise GeometryError("cannot project a near-zero vector to the sphere")
    return v / n


@dataclass(frozen=True, eq=False)
class Rot3:
    """Rotation matrix wrapper carrying a composition-age counter."""

    m: np.ndarray
    age: int = 0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise GeometryError("Rot3 expects a 3x3 matrix")
        defect = np.linalg.norm(m.T @ m - np.eye(3))
        if defect > CONSTRUCT_TOL or np.linalg.det(m) < 0.0:
            raise GeometryError(f"matrix is not a rotation (defect {defect:.2e})")
        object.__setattr__(self, "m", _freeze(m))

    @staticmethod
    def identity() -> "Rot3":
        return Rot3(np.eye(3))

    @staticmethod
    def exp(w: np.ndarray) -> "Rot3":
        return Rot3(so3.rodrigues(w))

    @staticmethod
    def from_quat(q: np.ndarray) -> "Rot3":
        return Rot3(so3.rotmat_from_quat(q))

    def log(self) -> np.ndarray:
        return so3.log_rotation(self.m)

    def quat(self) -> np.ndarray:
        return so3.quat_from_rotmat(self.m)

    def inverse(self) -> "Rot3":
        return Rot3(self.m.T, age=self.age)

    def compose(self, other: "Rot3") -> "Rot3":
        out = Rot3(self.m @ other.m, age=self.age + other.age + 1)
        return out._maybe_renormalize()

    __matmul__ = compose

    def act(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.m.T

    def _maybe_renormalize(self) -> "Rot3":
        defect = np.linalg.norm(self.m.T @ self.m - np.eye(3))
        if self.age >= ORTHO_AGE_LIMIT or defect > ORTHO_DRIFT_TOL:
            return Rot3(so3.project_rotation(self.m), age=0)
        return self


def se3_wedge(u: np.ndarray) -> np.ndarray:
    """(w, v) -> 4x4 algebra matrix."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = so3.skew(u[:3])
    out[:3, 3] = u[3:6]
    return out


def se3_vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.concatenate([so3.unskew(m[:3, :3]), m[:3, 3]])


@dataclass(frozen=True, eq=False)
class SE3:
    """Rigid transform (R, x) acting as p -> R p + x."""

    rot: Rot3
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        object.__setattr__(self, "t", _freeze(t))

    @staticmethod
    def identity() -> "SE3":
        return SE3(Rot3.identity(), np.zeros(3))

    @staticmethod
    def from_parts(R: np.ndarray, t: np.ndarray) -> "SE3":
        return SE3(Rot3(R), t)

    @staticmethod
    def exp(u: np.ndarray) -> "SE3":
        u = np.asarray(u, dtype=float).reshape(6)
        w = u[:3]
        return SE3(Rot3.exp(w), so3.left_jacobian(w) @ u[3:6])

    def log(self) -> np.ndarray:
        w = self.rot.log()
        return np.concatenate([w, so3.left_jacobian_inv(w) @ self.t])

    def inverse(self) -> "SE3":
        rinv = self.rot.inverse()
        return SE3(rinv, -rinv.act(self.t))

    def compose(self, other: "SE3") -> "SE3":
        return SE3(self.rot @ other.rot, self.rot.act(other.t) + self.t)

    __matmul__ = compose

    def act(self, p: np.ndarray) -> np.ndarray:
        return self.rot.act(p) + self.t

    def adjoint(self) -> np.ndarray:
        """6x6 matrix of Ad in (rotation, translation) coordinates."""
        R = self.rot.m
        out = np.zeros((6, 6))
        out[:3, :3] = R
        out[3:, 3:] = R
        out[3:, :3] = so3.skew(self.t) @ R
        return out

    def as_matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rot.m
        out[:3, 3] = self.t
        return out

    @staticmethod
    def from_matrix(m: np.ndarray) -> "SE3":
        m = np.asarray(m, dtype=float)
        return SE3(Rot3(m[:3, :3]), m[:3, 3])


def se23_wedge(u: np.ndarray) -> np.ndarray:
    """(w, tx, tv) -> 5x5 algebra matrix."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((5, 5))
    out[:3, :3] = so3.skew(u[:3])
    out[:3, 3] = u[3:6]
    out[:3, 4] = u[6:9]
    return out


def se23_vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.concatenate([so3.unskew(m[:3, :3]), m[:3, 3], m[:3, 4]])


@dataclass(frozen=True, eq=False)
class SE23:
    """Extended pose (R, x, v), one translation-like column per slot."""

    rot: Rot3
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _freeze(np.asarray(self.x, dtype=float).reshape(3)))
        object.__setattr__(self, "v", _freeze(np.asarray(self.v, dtype=float).reshape(3)))

    @staticmethod
    def identity() -> "SE23":
        return SE23(Rot3.identity(), np.zeros(3), np.zeros(3))

    @staticmethod
    def exp(u: np.ndarray) -> "SE23":
        u = np.asarray(u, dtype=float).reshape(9)
        w = u[:3]
        V = so3.left_jacobian(w)
        return SE23(Rot3.exp(w), V @ u[3:6], V @ u[6:9])

    def log(self) -> np.ndarray:
        w = self.rot.log()
        Vi = so3.left_jacobian_inv(w)
        return np.concatenate([w, Vi @ self.x, Vi @ self.v])

    def inverse(self) -> "SE23":
        rinv = self.rot.inverse()
        return SE23(rinv, -rinv.act(self.x), -rinv.act(self.v))

    def compose(self, other: "SE23") -> "SE23":
        return SE23(
            self.rot @ other.rot,
            self.rot.act(other.x) + self.x,
            self.rot.act(other.v) + self.v,
        )

    __matmul__ = compose

    def pose(self) -> SE3:
        """SE(3) part (R, x)."""
        return SE3(self.rot, self.x)

    def adjoint(self) -> np.ndarray:
        R = self.rot.m
        out = np.zeros((9, 9))
        out[:3, :3] = R
        out[3:6, 3:6] = R
        out[6:9, 6:9] = R
        out[3:6, :3] = so3.skew(self.x) @ R
        out[6:9, :3] = so3.skew(self.v) @ R
        return out

    def as_matrix(self) -> np.ndarray:
        out = np.eye(5)
        out[:3, :3] = self.rot.m
        out[:3, 3] = self.x
        out[:3, 4] = self.v
        return out

    @staticmethod
    def from_matrix(m: np.ndarray) -> "SE23":
        m = np.asarray(m, dtype=float)
        return SE23(Rot3(m[:3, :3]), m[:3, 3], m[:3, 4])


def sot3_wedge(u: np.ndarray) -> np.ndarray:
    """(w, s) -> 4x4 block-diagonal algebra matrix."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = so3.skew(u[:3])
    out[3, 3] = u[3]
    return out


def sot3_vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.concatenate([so3.unskew(m[:3, :3]), [m[3, 3]]])


@dataclass(frozen=True, eq=False)
class SOT3:
    """Rotation plus positive scale, acting as p -> c R p."""

    rot: Rot3
    scale: float

    def __post_init__(self):
        if not self.scale > 0.0:
            raise GeometryError("SOT3 scale must be positive")
        object.__setattr__(self, "scale", float(self.scale))

    @staticmethod
    def identity() -> "SOT3":
        return SOT3(Rot3.identity(), 1.0)

    @staticmethod
    def exp(u: np.ndarray) -> "SOT3":
        u = np.asarray(u, dtype=float).reshape(4)
        return SOT3(Rot3.exp(u[:3]), float(np.exp(u[3])))

    def log(self) -> np.ndarray:
        return np.concatenate([self.rot.log(), [np.log(self.scale)]])

    def inverse(self) -> "SOT3":
        return SOT3(self.rot.inverse(), 1.0 / self.scale)

    def compose(self, other: "SOT3") -> "SOT3":
        return SOT3(self.rot @ other.rot, self.scale * other.scale)

    __matmul__ = compose

    def act(self, p: np.ndarray) -> np.ndarray:
        return self.scale * self.rot.act(p)

    def adjoint(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rot.m
        return out

    def as_matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rot.m
        out[3, 3] = self.scale
        return out

    @staticmethod
    def from_matrix(m: np.ndarray) -> "SOT3":
        m = np.asarray(m, dtype=float)
        return SOT3(Rot3(m[:3, :3]), float(m[3, 3]))


@dataclass(frozen=True, eq=False)
class YawTranslation:
    """Yaw rotation about e3 together with a translation.

    Semi-direct product law: (a, x) (b, y) = (a + b, x + R_yaw(a) y).  This is
    the reference-frame gauge group of the visual-inertial problem.
    """

    theta: float
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "t", _freeze(np.asarray(self.t, dtype=float).reshape(3)))

    @staticmethod
    def identity() -> "YawTranslation":
        return YawTranslation(0.0, np.zeros(3))

    @staticmethod
    def exp(u: np.ndarray) -> "YawTranslation":
        """u = (theta, t); matches the SE(3) exponential of the embedded algebra."""
        u = np.asarray(u, dtype=float).reshape(4)
        th = u[0]
        return YawTranslation(th, so3.left_jacobian(np.array([0.0, 0.0, th])) @ u[1:4])

    def log(self) -> np.ndarray:
        w = np.array([0.0, 0.0, self.theta])
        return np.concatenate([[self.theta], so3.left_jacobian_inv(w) @ self.t])

    def rot(self) -> np.ndarray:
        return so3.yaw_matrix(self.theta)

    def inverse(self) -> "YawTranslation":
        return YawTranslation(-self.theta, -so3.yaw_matrix(-self.theta) @ self.t)

    def compose(self, other: "YawTranslation") -> "YawTranslation":
        return YawTranslation(self.theta + other.theta, self.t + self.rot() @ other.t)

    __matmul__ = compose

    def act(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.rot().T + self.t

    def as_se3(self) -> SE3:
        return SE3(Rot3(self.rot()), self.t)
