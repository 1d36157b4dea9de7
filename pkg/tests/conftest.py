"""Shared random-object builders and small oracles for the test suite.

Everything takes an explicit numpy Generator so each test controls its own
seed.  States built here stay clear of the chart singularities: camera-frame
landmarks sit in a forward cone at depths between 1 and 8 metres.
"""

import numpy as np

from symvio.core import ImuInput, VisGroupElement, VisState
from symvio.groups import SE3, SE23, Rot3, YawTranslation
from symvio.io import DatasetBundle


def random_rotvec(rng, scale=1.0):
    return scale * rng.uniform(-1.0, 1.0, 3)


def random_rot(rng, scale=1.0):
    return Rot3.exp(random_rotvec(rng, scale))


def random_se3(rng, rot_scale=1.0, t_scale=1.0):
    return SE3(random_rot(rng, rot_scale), t_scale * rng.uniform(-1.0, 1.0, 3))


def random_se23(rng, rot_scale=1.0, t_scale=1.0):
    return SE23(
        random_rot(rng, rot_scale),
        t_scale * rng.uniform(-1.0, 1.0, 3),
        t_scale * rng.uniform(-1.0, 1.0, 3),
    )


def random_yawtrans(rng, angle=2.0, t_scale=2.0):
    return YawTranslation(rng.uniform(-angle, angle), t_scale * rng.uniform(-1.0, 1.0, 3))


def random_state(rng, n_land=3, rot_scale=0.4):
    """A well-conditioned full state with landmarks in front of the camera."""
    pose = random_se3(rng, rot_scale=rot_scale, t_scale=2.0)
    cam = random_se3(rng, rot_scale=0.2, t_scale=0.1)
    vel = rng.uniform(-1.0, 1.0, 3)
    bias = 0.05 * rng.uniform(-1.0, 1.0, 6)
    ids = tuple(range(n_land))
    C = pose @ cam
    pts = np.empty((n_land, 3))
    for i in range(n_land):
        d = np.array([0.5 * rng.uniform(-1, 1), 0.5 * rng.uniform(-1, 1), 1.0])
        pts[i] = C.act(rng.uniform(1.0, 8.0) * d / np.linalg.norm(d))
    return VisState(pose, vel, bias, cam, ids, pts)


def random_group_element(rng, ids, scale=0.4):
    n = len(ids)
    return VisGroupElement.exp(tuple(ids), scale * rng.uniform(-1.0, 1.0, 21 + 4 * n))


def random_imu(rng, gyro_scale=1.0, accel_scale=5.0):
    return ImuInput(
        gyro_scale * rng.uniform(-1.0, 1.0, 3), accel_scale * rng.uniform(-1.0, 1.0, 3)
    )


def samples_to_bundle(samples):
    """Package a generate_world sample list the way load_dataset would."""
    t = np.array([s.t for s in samples])
    gyro = np.array([s.imu.gyro for s in samples])
    accel = np.array([s.imu.accel for s in samples])
    frames = [(s.t, s.bearings) for s in samples if s.bearings is not None]
    truth_pos = np.array([s.truth.pose.t for s in samples])
    truth_rot = np.array([s.truth.pose.rot.m for s in samples])
    truth_vel = np.array([s.truth.vel for s in samples])
    return DatasetBundle(t, gyro, accel, frames, t.copy(), truth_pos, truth_rot, truth_vel)


def flat_diff(a: VisState, b: VisState) -> float:
    """Largest ambient-coordinate difference between two states."""
    from symvio.core import flatten_state

    return float(np.max(np.abs(flatten_state(a) - flatten_state(b))))
