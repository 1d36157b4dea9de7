"""Camera-frame landmark subsystem and point parametrisations.

A landmark seen from a moving camera with body-frame angular velocity ``w_cam``
and linear velocity ``v_cam`` obeys

    qdot = -w_cam x q - v_cam,        bearing y = q / |q|.

The scaled-rotation group acts on points by q -> (1/c) R^T q and on bearings by
y -> R^T y, which makes the bearing output equivariant.

Three coordinate maps for a point q are provided:

* euclidean: z = q;
* inverse depth: z = (q/|q|, 1/|q|);
* polar: z = (axis-angle of the tilt away from e3, -log |q|), the normal
  coordinates of the group action anchored at e3.

The filter chart uses a 3-coordinate form of the polar map: the tilt vector is
always orthogonal to e3, so only its first two components are stored.
"""

from __future__ import annotations

import numpy as np

from . import so3
from .errors import ChartDomainError, ExceptionSetError
from .groups import SOT3, sphere_project

CAMERA_COLLISION_TOL = 1e-9
ANTIPODAL_TOL = 1e-7


def landmark_velocity(q: np.ndarray, w_cam: np.ndarray, v_cam: np.ndarray) -> np.ndarray:
    """Time derivative of a static point expressed in the moving camera frame."""
    q = np.asarray(q, dtype=float)
    return -np.cross(w_cam, q) - np.asarray(v_cam, dtype=float)


def landmark_bearing(q: np.ndarray) -> np.ndarray:
    """Unit bearing of a camera-frame point."""
    q = np.asarray(q, dtype=float)
    if np.linalg.norm(q) <= CAMERA_COLLISION_TOL:
        raise ExceptionSetError("bearing undefined: point at camera centre")
    return sphere_project(q)


def frame_action(Q: SOT3, q: np.ndarray) -> np.ndarray:
    """Right action of a scaled rotation on a camera-frame point: (1/c) R^T q."""
    return Q.rot.m.T @ np.asarray(q, dtype=float) / Q.scale


def bearing_action(Q: SOT3, y: np.ndarray) -> np.ndarray:
    """Matching right action on the bearing sphere: R^T y."""
    return Q.rot.m.T @ np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# Parametrisations.  Forward maps return ambient coordinates; inverse maps are
# defined on all of the ambient space so the linearisation-error sweeps can
# move freely.


def euclidean_coords(q: np.ndarray) -> np.ndarray:
    return np.array(q, dtype=float)


def euclidean_point(z: np.ndarray) -> np.ndarray:
    return np.array(z, dtype=float)


def euclidean_point_diff(z: np.ndarray) -> np.ndarray:
    """Jacobian of :func:`euclidean_point`."""
    return np.eye(3)


def inverse_depth_coords(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    d = np.linalg.norm(q)
    if d <= CAMERA_COLLISION_TOL:
        raise ExceptionSetError("inverse-depth coordinates undefined at the camera centre")
    return np.concatenate([q / d, [1.0 / d]])


def inverse_depth_point(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z[:3] / z[3]


def inverse_depth_point_diff(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros((3, 4))
    out[:, :3] = np.eye(3) / z[3]
    out[:, 3] = -z[:3] / (z[3] * z[3])
    return out


def polar_coords(q: np.ndarray) -> np.ndarray:
    """Tilt-from-e3 axis-angle (a vector orthogonal to e3) and -log depth.

    Continuous limit 0 on the positive e3 axis; within ``ANTIPODAL_TOL`` of the
    negative axis the tilt direction is ill defined and a chart error is raised.
    """
    q = np.asarray(q, dtype=float)
    d = np.linalg.norm(q)
    if d <= CAMERA_COLLISION_TOL:
        raise ExceptionSetError("polar coordinates undefined at the camera centre")
    u = q / d
    c = float(u[2])
    if c < -1.0 + ANTIPODAL_TOL:
        raise ChartDomainError("polar coordinates undefined near the antipodal bearing")
    # atan2 keeps full relative precision for tiny tilts, where the arccos of
    # the axial component would quantise at sqrt(eps) ~ 1e-8.
    axis = np.array([-u[1], u[0], 0.0])  # e3 x u, norm sin(theta)
    s = float(np.hypot(u[0], u[1]))
    ratio = np.arctan2(s, c) / s if s > 0.0 else 1.0
    w = -ratio * axis
    return np.concatenate([w, [-np.log(d)]])


def polar_point(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`polar_coords`: exp of the scaled rotation, inverted, at e3."""
    z = np.asarray(z, dtype=float)
    return np.exp(-z[3]) * so3.rodrigues(z[:3]).T @ so3.E3


def polar_point_diff(z: np.ndarray) -> np.ndarray:
    """Jacobian of :func:`polar_point` with respect to the 4 coordinates."""
    z = np.asarray(z, dtype=float)
    w = z[:3]
    Rt = so3.rodrigues(w).T
    scale = np.exp(-z[3])
    out = np.zeros((3, 4))
    # d/dw [R(w)^T e3] = R(w)^T e3x J_r(-w)
    out[:, :3] = scale * Rt @ so3.skew(so3.E3) @ so3.right_jacobian(-w)
    out[:, 3] = -scale * Rt @ so3.E3
    return out


# 3-coordinate chart form: (tilt_1, tilt_2, -log depth).


def chart_coords(q: np.ndarray) -> np.ndarray:
    z = polar_coords(q)
    return np.array([z[0], z[1], z[3]])


def chart_point(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    return polar_point(np.array([e[0], e[1], 0.0, e[2]]))


# Jacobian of chart_point at 0: used when assembling the filter matrices.
CHART_POINT_DIFF0 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])


def tangent_basis(y: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the tangent plane at unit vector y.

    Returns a (2, 3) array with rows b1, b2 such that (b1, b2, y) is a
    right-handed frame.  The seed axis is e1 unless y is nearly parallel to it.
    """
    y = np.asarray(y, dtype=float)
    seed = np.array([1.0, 0.0, 0.0])
    if abs(y[0]) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    b1 = np.cross(y, seed)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(y, b1)
    return np.stack([b1, b2])
