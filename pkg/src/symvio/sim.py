"""Synthetic worlds: analytic trajectories, IMU/bearing synthesis, particles.

Conventions: gravity points along +e3 (z down), so level flight at constant
altitude needs a specific force with a -g vertical component.  The camera
looks along body +z, i.e. at the ground, and landmarks are scattered in a box
below the vehicle.

Trajectories are closed-form, so the emitted IMU is an exact inversion of the
dynamics at the sample instant.  For the circle the body-frame rates and
specific force are constant, which makes zero-order-hold integration of the
emitted stream exact; the other families carry an O(dt) hold error like any
real sampled system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .core import GRAVITY, BearingSet, ImuInput, VisState, frame_change
from .errors import ConfigError
from .groups import SE3, YawTranslation
from .landmarks import tangent_basis

E3 = so3.E3

TRAJECTORY_FAMILIES = ("circle", "figure8", "twist")


def _freeze(a):
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TrajectorySpec:
    """Analytic trajectory family plus sampling rates."""

    family: str = "circle"
    radius: float = 5.0
    period: float = 20.0
    altitude: float = 0.0
    duration: float = 60.0
    imu_rate: float = 200.0
    frame_rate: float = 20.0

    def __post_init__(self):
        if self.family not in TRAJECTORY_FAMILIES:
            raise ConfigError(f"unknown trajectory family {self.family!r}")
        for name in ("radius", "period", "duration", "imu_rate", "frame_rate"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        if self.imu_rate < self.frame_rate:
            raise ConfigError("imu_rate must be at least frame_rate")


@dataclass(frozen=True)
class NoiseSpec:
    """White-noise densities, constant biases and the master seed."""

    gyro_density: float = 0.0
    accel_density: float = 0.0
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bearing_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gyro_density", "accel_density", "bearing_std"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        object.__setattr__(self, "gyro_bias", _freeze(np.reshape(self.gyro_bias, 3)))
        object.__setattr__(self, "accel_bias", _freeze(np.reshape(self.accel_bias, 3)))
        object.__setattr__(self, "seed", int(self.seed))

    def bias6(self) -> np.ndarray:
        return np.concatenate([self.gyro_bias, self.accel_bias])


@dataclass(frozen=True, eq=False)
class SimSample:
    """One IMU tick: ground truth, noisy IMU, and bearings on frame ticks."""

    t: float
    truth: VisState
    imu: ImuInput
    bearings: BearingSet | None


def _twist_axis(spec: TrajectorySpec):
    axis = np.array([0.1, 0.0, 1.0])
    axis /= np.linalg.norm(axis)
    w = (2.0 * math.pi / spec.period) * axis
    nu = np.array([2.0 * math.pi * spec.radius / spec.period, 0.0, 0.0])
    return w, nu


def trajectory_state(spec: TrajectorySpec, t: float):
    """Pose, velocity, acceleration and body rates at time t, all closed-form.

    Returns (R, x, v, vdot, omega_body).
    """
    if spec.family == "circle":
        w = 2.0 * math.pi / spec.period
        r = spec.radius
        c, s = math.cos(w * t), math.sin(w * t)
        x = np.array([r * c, r * s, spec.altitude])
        v = np.array([-r * w * s, r * w * c, 0.0])
        vdot = np.array([-r * w * w * c, -r * w * w * s, 0.0])
        R = so3.yaw_matrix(w * t + 0.5 * math.pi)
        om = np.array([0.0, 0.0, w])
        return R, x, v, vdot, om
    if spec.family == "figure8":
        ud = 2.0 * math.pi / spec.period
        u = ud * t
        r = spec.radius
        x = np.array([r * math.sin(u), 0.5 * r * math.sin(2 * u), spec.altitude])
        v = ud * np.array([r * math.cos(u), r * math.cos(2 * u), 0.0])
        vdot = ud * ud * np.array([-r * math.sin(u), -2 * r * math.sin(2 * u), 0.0])
        psi = math.atan2(v[1], v[0])
        speed2 = v[0] * v[0] + v[1] * v[1]
        psidot = (v[0] * vdot[1] - v[1] * vdot[0]) / speed2
        R = so3.yaw_matrix(psi)
        om = np.array([0.0, 0.0, psidot])
        return R, x, v, vdot, om
    w, nu = _twist_axis(spec)
    R = so3.rodrigues(t * w)
    x = np.array([0.0, 0.0, spec.altitude]) + t * (so3.left_jacobian(t * w) @ nu)
    v = R @ nu
    vdot = R @ np.cross(w, nu)
    return R, x, v, vdot, w


def imu_of(spec: TrajectorySpec, t: float, g: float = GRAVITY) -> ImuInput:
    """Noise-free, bias-free IMU inversion of the analytic trajectory."""
    R, _, _, vdot, om = trajectory_state(spec, t)
    return ImuInput(om, R.T @ (vdot - g * E3))


def default_landmark_box(spec: TrajectorySpec):
    """Axis-aligned box under the whole trajectory, in the camera's view."""
    half = spec.radius + 2.0
    lo = np.array([-half, -half, spec.altitude + 3.0])
    hi = np.array([half, half, spec.altitude + 7.0])
    return lo, hi


def generate_world(
    spec: TrajectorySpec,
    n_landmarks: int,
    noise: NoiseSpec,
    cam: SE3 = None,
    fov_half_angle_deg: float = 45.0,
    box=None,
    g: float = GRAVITY,
) -> list:
    """Sampled ground truth with noisy IMU at IMU rate and bearings at frame rate.

    All randomness comes from one counter-based generator seeded by the noise
    spec; identical seeds give bit-identical sample sequences.  Bearing noise
    is drawn for every landmark on every frame, whether visible or not, so the
    stream does not depend on the visibility pattern.
    """
    if n_landmarks < 0:
        raise ConfigError("n_landmarks must be non-negative")
    cam = SE3.identity() if cam is None else cam
    rng = np.random.Generator(np.random.Philox(noise.seed))
    lo, hi = default_landmark_box(spec) if box is None else box
    lands = rng.uniform(lo, hi, size=(n_landmarks, 3))
    ids = tuple(range(n_landmarks))
    bias = noise.bias6()
    cos_fov = math.cos(math.radians(fov_half_angle_deg))

    stride = int(round(spec.imu_rate / spec.frame_rate))
    n_steps = int(round(spec.duration * spec.imu_rate))
    sqrt_rate = math.sqrt(spec.imu_rate)
    gyro_sig = noise.gyro_density * sqrt_rate
    accel_sig = noise.accel_density * sqrt_rate

    samples = []
    for k in range(n_steps):
        t = k / spec.imu_rate
        R, x, v, vdot, om = trajectory_state(spec, t)
        truth = VisState(SE3.from_parts(R, x), v, bias, cam, ids, lands)
        gyro = om + noise.gyro_bias + gyro_sig * rng.standard_normal(3)
        accel = R.T @ (vdot - g * E3) + noise.accel_bias + accel_sig * rng.standard_normal(3)
        bearings = None
        if k % stride == 0:
            q = truth.cam_points()
            depth = np.linalg.norm(q, axis=1)
            y = q / depth[:, None]
            draws = rng.standard_normal((n_landmarks, 2))
            if noise.bearing_std > 0.0:
                y = np.array(
                    [
                        _perturb_bearing(y[i], noise.bearing_std * draws[i])
                        for i in range(n_landmarks)
                    ]
                )
            visible = (y[:, 2] >= cos_fov) & (depth > 1e-6)
            bearings = BearingSet(
                tuple(int(i) for i in np.nonzero(visible)[0]), y[visible]
            )
        samples.append(SimSample(t, truth, ImuInput(gyro, accel), bearings))
    return samples


def _perturb_bearing(y: np.ndarray, tangent_noise: np.ndarray) -> np.ndarray:
    b = tangent_basis(y)
    out = y + tangent_noise[0] * b[0] + tangent_noise[1] * b[1]
    return out / np.linalg.norm(out)


def transform_world(S: YawTranslation, samples: list) -> list:
    """Move the ground truth to another reference frame; IMU and bearings stay."""
    return [
        SimSample(s.t, frame_change(S, s.truth), s.imu, s.bearings) for s in samples
    ]


def reintegrate_imu(samples: list, g: float = GRAVITY, bias: np.ndarray = None):
    """RK4 the nav dynamics through the emitted IMU stream (hold per interval).

    Oracle for round-trip checks and threshold registration: starts from the
    first sample's truth and returns stacked (rot, pos, vel) at every tick.
    """
    bias = np.zeros(6) if bias is None else np.asarray(bias, dtype=float)
    first = samples[0].truth
    R = first.pose.rot.m.copy()
    x = np.array(first.pose.t)
    v = np.array(first.vel)
    rots = [R.copy()]
    poss = [x.copy()]
    vels = [v.copy()]
    for k in range(len(samples) - 1):
        dt = samples[k + 1].t - samples[k].t
        u = samples[k].imu
        w = u.gyro - bias[:3]
        a = u.accel - bias[3:]
        R, x, v = _rk4_nav(R, x, v, w, a, dt, g)
        rots.append(R.copy())
        poss.append(x.copy())
        vels.append(v.copy())
    return np.array(rots), np.array(poss), np.array(vels)


def _rk4_nav(R, x, v, w, a, dt, g):
    def deriv(Rc, xc, vc):
        return Rc @ so3.skew(w), vc, Rc @ a + g * E3

    k1 = deriv(R, x, v)
    k2 = deriv(R + 0.5 * dt * k1[0], x + 0.5 * dt * k1[1], v + 0.5 * dt * k1[2])
    k3 = deriv(R + 0.5 * dt * k2[0], x + 0.5 * dt * k2[1], v + 0.5 * dt * k2[2])
    k4 = deriv(R + dt * k3[0], x + dt * k3[1], v + dt * k3[2])
    s = dt / 6.0
    Rn = R + s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    xn = x + s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    vn = v + s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return so3.project_rotation(Rn), xn, vn


# ---------------------------------------------------------------------------
# Particle clouds for the distribution-propagation experiment.


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    """Truth particles and the nominal trajectory at the recorded times."""

    times: np.ndarray
    rot: np.ndarray  # (T, P, 3, 3)
    pos: np.ndarray  # (T, P, 3)
    vel: np.ndarray  # (T, P, 3)
    nom_rot: np.ndarray  # (T, 3, 3)
    nom_pos: np.ndarray
    nom_vel: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.rot.shape[1]


def sample_particles(
    Sigma0: np.ndarray,
    n_particles: int,
    omega: np.ndarray,
    accel: np.ndarray,
    horizon: float,
    step: float = 0.05,
    seed: int = 0,
    g: float = GRAVITY,
    record_every: float = 5.0,
) -> ParticleCloud:
    """Integrate an initial extended-pose cloud through the bias-free dynamics.

    Particles start at the group exponential of draws from N(0, Sigma0) and
    see the same constant body-frame input; each is integrated by vectorized
    RK4 with one orthonormalisation pass per step.
    """
    Sigma0 = np.asarray(Sigma0, dtype=float)
    if Sigma0.shape != (9, 9):
        raise ValueError("Sigma0 must be 9x9")
    omega = np.asarray(omega, dtype=float).reshape(3)
    accel = np.asarray(accel, dtype=float).reshape(3)
    rng = np.random.Generator(np.random.Philox(seed))
    L = np.linalg.cholesky(Sigma0 + 0.0)
    eta = rng.standard_normal((n_particles, 9)) @ L.T

    w = eta[:, :3]
    V = so3.left_jacobian_many(w)
    R = so3.rodrigues_many(w)
    x = np.einsum("nij,nj->ni", V, eta[:, 3:6])
    v = np.einsum("nij,nj->ni", V, eta[:, 6:9])

    nR = np.eye(3)[None]
    nx = np.zeros((1, 3))
    nv = np.zeros((1, 3))

    times = [0.0]
    recs = [(R.copy(), x.copy(), v.copy(), nR.copy(), nx.copy(), nv.copy())]
    t = 0.0
    next_rec = record_every
    wx = so3.skew(omega)
    while t < horizon - 1e-12:
        dt = min(step, horizon - t, next_rec - t)
        R, x, v = _rk4_cloud(R, x, v, wx, accel, dt, g)
        nR, nx, nv = _rk4_cloud(nR, nx, nv, wx, accel, dt, g)
        t += dt
        if abs(t - next_rec) < 1e-9 or t >= horizon - 1e-12:
            times.append(t)
            recs.append((R.copy(), x.copy(), v.copy(), nR.copy(), nx.copy(), nv.copy()))
            next_rec += record_every
    return ParticleCloud(
        np.array(times),
        np.array([r[0] for r in recs]),
        np.array([r[1] for r in recs]),
        np.array([r[2] for r in recs]),
        np.array([r[3][0] for r in recs]),
        np.array([r[4][0] for r in recs]),
        np.array([r[5][0] for r in recs]),
    )


def _rk4_cloud(R, x, v, wx, accel, dt, g):
    grav = g * E3

    def deriv(Rc, xc, vc):
        return Rc @ wx, vc, Rc @ accel + grav

    k1 = deriv(R, x, v)
    k2 = deriv(R + 0.5 * dt * k1[0], x + 0.5 * dt * k1[1], v + 0.5 * dt * k1[2])
    k3 = deriv(R + 0.5 * dt * k2[0], x + 0.5 * dt * k2[1], v + 0.5 * dt * k2[2])
    k4 = deriv(R + dt * k3[0], x + dt * k3[1], v + dt * k3[2])
    s = dt / 6.0
    Rn = R + s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    xn = x + s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    vn = v + s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    # One symmetric orthonormalisation pass; drift per step is O(dt^5).
    Rn = 1.5 * Rn - 0.5 * (Rn @ np.swapaxes(Rn, -1, -2) @ Rn)
    return Rn, xn, vn
