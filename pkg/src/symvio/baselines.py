"""Covariance propagation baselines for the cloud-vs-filter experiment.

Three linearized propagators share one scenario: a constant body-frame input
applied from an uncertain initial extended pose, with no process noise.

* total-state quaternion EKF, 10-D error (quaternion difference, position,
  velocity),
* multiplicative EKF, 9-D error (right attitude log, ambient position and
  velocity differences),
* equivariant filter restricted to the navigation block, 9-D log coordinates.

Each comes with an extractor that maps truth particles into that filter's
error coordinates so empirical and predicted covariances are comparable.
"""

from __future__ import annotations

import numpy as np

from . import so3
from .core import GRAVITY
from .sim import ParticleCloud

E3 = so3.E3


def _quat_rate_matrix(omega: np.ndarray) -> np.ndarray:
    """d/dt q = Q q for body rate omega, scalar-first Hamilton convention."""
    wx, wy, wz = omega
    return 0.5 * np.array(
        [
            [0.0, -wx, -wy, -wz],
            [wx, 0.0, wz, -wy],
            [wy, -wz, 0.0, wx],
            [wz, wy, -wx, 0.0],
        ]
    )


def _rot_times_vec_jacobian(q: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Jacobian of R(q) a with respect to q, shape (3, 4)."""
    w, v = q[0], q[1:]
    # R(q) a = a + 2 w (v x a) + 2 v x (v x a)
    col_w = 2.0 * np.cross(v, a)
    J_v = -2.0 * w * so3.skew(a) + 2.0 * (
        np.dot(v, a) * np.eye(3) + np.outer(v, a) - 2.0 * np.outer(a, v)
    )
    return np.hstack([col_w[:, None], J_v])


def ekf_initial_covariance(Sigma0: np.ndarray) -> np.ndarray:
    """Push the 9-D log-coordinate covariance into 10-D quaternion-EKF coords."""
    J = np.zeros((10, 9))
    J[1:4, 0:3] = 0.5 * np.eye(3)
    J[4:7, 3:6] = np.eye(3)
    J[7:10, 6:9] = np.eye(3)
    return J @ Sigma0 @ J.T


def ekf_covariance(
    Sigma0: np.ndarray,
    omega: np.ndarray,
    accel: np.ndarray,
    times: np.ndarray,
    step: float = 0.05,
    g: float = GRAVITY,
) -> np.ndarray:
    """Propagate the 10-D quaternion-EKF covariance along the nominal motion."""
    omega = np.asarray(omega, dtype=float)
    accel = np.asarray(accel, dtype=float)
    Fq = _quat_rate_matrix(omega)

    def F_of(t):
        q = so3.quat_from_rotvec(t * omega)
        F = np.zeros((10, 10))
        F[0:4, 0:4] = Fq
        F[4:7, 7:10] = np.eye(3)
        F[7:10, 0:4] = _rot_times_vec_jacobian(q, accel)
        return F

    return _propagate_lyapunov(ekf_initial_covariance(Sigma0), F_of, times, step)


def mekf_covariance(
    Sigma0: np.ndarray,
    omega: np.ndarray,
    accel: np.ndarray,
    times: np.ndarray,
    step: float = 0.05,
    g: float = GRAVITY,
) -> np.ndarray:
    """Propagate the 9-D multiplicative-EKF covariance.

    With a shared true body rate the right attitude error is constant, so the
    only coupling is acceleration leaking attitude error into velocity.
    """
    omega = np.asarray(omega, dtype=float)
    accel = np.asarray(accel, dtype=float)

    def F_of(t):
        R = so3.rodrigues(t * omega)
        F = np.zeros((9, 9))
        F[3:6, 6:9] = np.eye(3)
        F[6:9, 0:3] = -so3.skew(R @ accel)
        return F

    return _propagate_lyapunov(np.array(Sigma0, dtype=float), F_of, times, step)


def _propagate_lyapunov(Sigma, F_of, times, step):
    """RK4 on d/dt Sigma = F Sigma + Sigma F^T between requested times."""
    times = np.asarray(times, dtype=float)
    out = []
    S = Sigma.copy()
    t = 0.0
    for target in times:
        while t < target - 1e-12:
            dt = min(step, target - t)
            S = _lyapunov_rk4(S, F_of, t, dt)
            t += dt
        out.append(0.5 * (S + S.T))
    return np.array(out)


def _lyapunov_rk4(S, F_of, t, dt):
    def deriv(Sc, tc):
        F = F_of(tc)
        return F @ Sc + Sc @ F.T

    k1 = deriv(S, t)
    k2 = deriv(S + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = deriv(S + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = deriv(S + dt * k3, t + dt)
    return S + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def eqf_state_matrix(g: float = GRAVITY) -> np.ndarray:
    """Error dynamics in extended-pose log coordinates: constant and nilpotent."""
    A = np.zeros((9, 9))
    A[3:6, 6:9] = np.eye(3)
    A[6:9, 0:3] = g * so3.skew(E3)
    return A


def eqf_transition(t: float, g: float = GRAVITY) -> np.ndarray:
    """Exact transition matrix exp(t A); the series stops because A^3 = 0."""
    A = eqf_state_matrix(g)
    return np.eye(9) + t * A + 0.5 * t * t * (A @ A)


def eqf_covariance(Sigma0: np.ndarray, times: np.ndarray, g: float = GRAVITY) -> np.ndarray:
    out = []
    for t in np.asarray(times, dtype=float):
        Phi = eqf_transition(t, g)
        out.append(Phi @ np.asarray(Sigma0, dtype=float) @ Phi.T)
    return np.array(out)


# ---------------------------------------------------------------------------
# Error-coordinate extractors, particles -> each filter's error space.


def eqf_coords(cloud: ParticleCloud, index: int) -> np.ndarray:
    """Extended-pose log coordinates of the right error particle * nominal^-1."""
    Rh = cloud.nom_rot[index]
    xh = cloud.nom_pos[index]
    vh = cloud.nom_vel[index]
    Zr = cloud.rot[index] @ Rh.T
    Zx = cloud.pos[index] - Zr @ xh
    Zv = cloud.vel[index] - Zr @ vh
    th = so3.log_rotation_many(Zr)
    Vinv = so3.left_jacobian_inv_many(th)
    ex = np.einsum("nij,nj->ni", Vinv, Zx)
    ev = np.einsum("nij,nj->ni", Vinv, Zv)
    return np.hstack([th, ex, ev])


def mekf_coords(cloud: ParticleCloud, index: int) -> np.ndarray:
    """Right attitude log plus ambient position and velocity differences."""
    Rh = cloud.nom_rot[index]
    th = so3.log_rotation_many(cloud.rot[index] @ Rh.T)
    dx = cloud.pos[index] - cloud.nom_pos[index]
    dv = cloud.vel[index] - cloud.nom_vel[index]
    return np.hstack([th, dx, dv])


def ekf_coords(cloud: ParticleCloud, index: int) -> np.ndarray:
    """Hemisphere-aligned quaternion difference plus ambient differences."""
    qh = so3.quat_from_rotmat(cloud.nom_rot[index])
    P = cloud.n_particles
    dq = np.empty((P, 4))
    for i in range(P):
        q = so3.quat_from_rotmat(cloud.rot[index][i])
        if np.dot(q, qh) < 0.0:
            q = -q
        dq[i] = q - qh
    dx = cloud.pos[index] - cloud.nom_pos[index]
    dv = cloud.vel[index] - cloud.nom_vel[index]
    return np.hstack([dq, dx, dv])
