"""Rotation-group helpers on raw 3x3 arrays.

Everything here is written against plain numpy arrays so that the batched
variants (suffix ``_many``) can be used in hot loops.  Closed forms switch to
truncated Taylor series below an angle of 1e-6 rad, keeping every map smooth
through zero.
"""

from __future__ import annotations

import numpy as np

from .errors import CutLocusError, GeometryError

# Angle below which Rodrigues-style closed forms switch to Taylor series.
SMALL_ANGLE = 1e-6
# Distance from pi at which the rotation logarithm refuses to answer.
CUT_LOCUS_TOL = 1e-6

E3 = np.array([0.0, 0.0, 1.0])


def skew(w: np.ndarray) -> np.ndarray:
    """Map a vector (or batch of vectors) to the matching antisymmetric matrix."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def unskew(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew`; averages the off-diagonal pairs."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [
            m[..., 2, 1] - m[..., 1, 2],
            m[..., 0, 2] - m[..., 2, 0],
            m[..., 1, 0] - m[..., 0, 1],
        ],
        axis=-1,
    )


def rodrigues(w: np.ndarray) -> np.ndarray:
    """Exponential of a rotation vector, R = I + sin|w|/|w| wx + (1-cos|w|)/|w|^2 wx^2."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    wx = skew(w)
    if th < SMALL_ANGLE:
        # sin th / th ~ 1 - th^2/6, (1 - cos th)/th^2 ~ 1/2 - th^2/24
        a = 1.0 - th * th / 6.0
        b = 0.5 - th * th / 24.0
    else:
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + a * wx + b * (wx @ wx)


def rodrigues_many(w: np.ndarray) -> np.ndarray:
    """Batched :func:`rodrigues` over the leading axes of ``w``."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w, axis=-1)
    wx = skew(w)
    small = th < SMALL_ANGLE
    th_safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th * th / 6.0, np.sin(th_safe) / th_safe)
    b = np.where(small, 0.5 - th * th / 24.0, (1.0 - np.cos(th_safe)) / (th_safe * th_safe))
    eye = np.broadcast_to(np.eye(3), wx.shape)
    return eye + a[..., None, None] * wx + b[..., None, None] * (wx @ wx)


def quat_from_rotmat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (scalar first, Hamilton) from a rotation matrix.

    Uses Shepperd's branch selection, stable for every angle including pi.
    """
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def rotmat_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a (scalar-first Hamilton) quaternion, normalising first."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    r = np.array([x, y, z])
    return (w * w - r @ r) * np.eye(3) + 2.0 * np.outer(r, r) + 2.0 * w * skew(r)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b, scalar-first components."""
    aw, av = a[0], a[1:]
    bw, bv = b[0], b[1:]
    return np.concatenate([[aw * bw - av @ bv], aw * bv + bw * av + np.cross(av, bv)])


def quat_from_rotvec(w: np.ndarray) -> np.ndarray:
    """exp(w/2) as a quaternion."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    if th < SMALL_ANGLE:
        half = 0.5 - th * th / 48.0
    else:
        half = np.sin(0.5 * th) / th
    return np.concatenate([[np.cos(0.5 * th)], half * w])


def log_rotation(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R.  Raises :class:`CutLocusError` within 1e-6 of angle pi.

    Routed through the quaternion form, which stays well conditioned at large
    angles where the trace formula loses digits.
    """
    q = quat_from_rotmat(R)
    w, r = q[0], q[1:]
    nr = np.linalg.norm(r)
    th = 2.0 * np.arctan2(nr, w)
    if th > np.pi - CUT_LOCUS_TOL:
        raise CutLocusError(f"rotation angle {th:.9f} within {CUT_LOCUS_TOL} of pi")
    if nr < 0.5 * SMALL_ANGLE:
        # r = sin(th/2) axis ~ (th/2) axis, so w-division Taylor suffices.
        return 2.0 * r / w * (1.0 - nr * nr / (3.0 * w * w))
    return th * r / nr


def log_rotation_many(R: np.ndarray) -> np.ndarray:
    """Batched rotation logarithm; same cut-locus guard as :func:`log_rotation`."""
    R = np.asarray(R, dtype=float)
    out = np.empty(R.shape[:-2] + (3,))
    flat = R.reshape((-1, 3, 3))
    res = out.reshape((-1, 3))
    for i in range(flat.shape[0]):
        res[i] = log_rotation(flat[i])
    return out


def left_jacobian(w: np.ndarray) -> np.ndarray:
    """Left Jacobian of the rotation exponential (the V matrix of SE(3) exp)."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    wx = skew(w)
    if th < SMALL_ANGLE:
        return np.eye(3) + 0.5 * wx + (wx @ wx) / 6.0
    a = (1.0 - np.cos(th)) / (th * th)
    b = (th - np.sin(th)) / (th ** 3)
    return np.eye(3) + a * wx + b * (wx @ wx)


def left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    """Inverse left Jacobian; valid away from the cut locus."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    wx = skew(w)
    if th < SMALL_ANGLE:
        return np.eye(3) - 0.5 * wx + (wx @ wx) / 12.0
    c = (1.0 / (th * th)) - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) - 0.5 * wx + c * (wx @ wx)


def right_jacobian(w: np.ndarray) -> np.ndarray:
    """Right Jacobian, J_r(w) = J_l(-w)."""
    return left_jacobian(-np.asarray(w, dtype=float))


def left_jacobian_many(w: np.ndarray) -> np.ndarray:
    """Batched left Jacobian."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w, axis=-1)
    wx = skew(w)
    small = th < SMALL_ANGLE
    th_safe = np.where(small, 1.0, th)
    a = np.where(small, 0.5 - th * th / 24.0, (1.0 - np.cos(th_safe)) / (th_safe * th_safe))
    b = np.where(small, 1.0 / 6.0 - th * th / 120.0, (th_safe - np.sin(th_safe)) / th_safe ** 3)
    eye = np.broadcast_to(np.eye(3), wx.shape)
    return eye + a[..., None, None] * wx + b[..., None, None] * (wx @ wx)


def left_jacobian_inv_many(w: np.ndarray) -> np.ndarray:
    """Batched inverse left Jacobian."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w, axis=-1)
    wx = skew(w)
    small = th < SMALL_ANGLE
    th_safe = np.where(small, 1.0, th)
    c = np.where(
        small,
        1.0 / 12.0 + th * th / 720.0,
        1.0 / (th_safe * th_safe)
        - (1.0 + np.cos(th_safe)) / (2.0 * th_safe * np.sin(th_safe)),
    )
    eye = np.broadcast_to(np.eye(3), wx.shape)
    return eye - 0.5 * wx + c[..., None, None] * (wx @ wx)


def project_rotation(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (special orthogonal Procrustes)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def project_rotation_many(m: np.ndarray) -> np.ndarray:
    """Batched :func:`project_rotation` over the leading axes."""
    m = np.asarray(m, dtype=float)
    u, _, vt = np.linalg.svd(m)
    uv = u @ vt
    d = np.sign(np.linalg.det(uv))
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    return u @ vt


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation R with R a/|a| = b/|b|.

    The axis is a x b; antiparallel inputs have no minimal choice and raise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise GeometryError("rotation_between needs nonzero directions")
    ua, ub = a / na, b / nb
    c = np.cross(ua, ub)
    d = float(ua @ ub)
    if d < -1.0 + 1e-9:
        raise GeometryError("rotation_between undefined for antiparallel directions")
    s = np.linalg.norm(c)
    if s < SMALL_ANGLE:
        # Angle ~ |c|; c already has magnitude sin(theta).
        return rodrigues(c)
    th = np.arctan2(s, d)
    return rodrigues(c * (th / s))


def yaw_matrix(theta: float) -> np.ndarray:
    """Rotation by ``theta`` about the gravity axis e3."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
