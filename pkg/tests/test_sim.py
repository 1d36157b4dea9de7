"""Tests for the trajectory generator, world sampling and particle clouds."""

import math

import numpy as np
import pytest

from conftest import random_yawtrans

from symvio import sim, so3
from symvio.core import measure
from symvio.errors import ConfigError
from symvio.groups import SE3, Rot3

GRAVITY = 9.81
E3 = np.array([0.0, 0.0, 1.0])
FAMILIES = ("circle", "figure8", "twist")


# ---------------------------------------------------------------------------
# Specs


def test_trajectory_spec_validation():
    with pytest.raises(ConfigError):
        sim.TrajectorySpec(family="spiral")
    with pytest.raises(ConfigError):
        sim.TrajectorySpec(radius=0.0)
    with pytest.raises(ConfigError):
        sim.TrajectorySpec(imu_rate=10.0, frame_rate=20.0)


def test_noise_spec_validation():
    with pytest.raises(ConfigError):
        sim.NoiseSpec(gyro_density=-1.0)
    assert np.allclose(sim.NoiseSpec(gyro_bias=(1, 2, 3)).bias6(), [1, 2, 3, 0, 0, 0])


# ---------------------------------------------------------------------------
# Analytic trajectories


@pytest.mark.parametrize("family", FAMILIES)
def test_trajectory_derivatives_consistent(family):
    """Closed-form velocity, acceleration and body rates match time differences."""
    spec = sim.TrajectorySpec(family=family)
    h = 1e-6
    for t in (0.0, 1.3, 7.9, 16.4):
        R, x, v, vdot, om = sim.trajectory_state(spec, t)
        Rp, xp, vp, _, _ = sim.trajectory_state(spec, t + h)
        Rm, xm, vm, _, _ = sim.trajectory_state(spec, t - h)
        assert np.allclose((xp - xm) / (2 * h), v, atol=1e-6)
        assert np.allclose((vp - vm) / (2 * h), vdot, atol=1e-5)
        om_fd = so3.unskew(R.T @ (Rp - Rm) / (2 * h))
        assert np.allclose(om_fd, om, atol=1e-6)


@pytest.mark.parametrize("family", FAMILIES)
def test_imu_inversion_reproduces_acceleration(family):
    """Feeding the exact IMU back through the motion model returns vdot."""
    spec = sim.TrajectorySpec(family=family)
    for t in (0.2, 4.7, 11.0):
        R, x, v, vdot, om = sim.trajectory_state(spec, t)
        u = sim.imu_of(spec, t)
        assert np.allclose(u.gyro, om, atol=1e-12)
        assert np.allclose(R @ u.accel + GRAVITY * E3, vdot, atol=1e-12)


def test_trajectory_rotation_is_orthonormal():
    spec = sim.TrajectorySpec(family="twist")
    for t in (0.0, 3.3, 9.1):
        R, *_ = sim.trajectory_state(spec, t)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)


# ---------------------------------------------------------------------------
# World generation


def test_generate_world_is_deterministic():
    spec = sim.TrajectorySpec(duration=3.0)
    noise = sim.NoiseSpec(gyro_density=1e-3, accel_density=1e-2, bearing_std=2e-3, seed=11)
    a = sim.generate_world(spec, 8, noise)
    b = sim.generate_world(spec, 8, noise)
    for sa, sb in zip(a, b):
        assert sa.t == sb.t
        assert np.array_equal(sa.imu.gyro, sb.imu.gyro)
        assert np.array_equal(sa.imu.accel, sb.imu.accel)
        assert (sa.bearings is None) == (sb.bearings is None)
        if sa.bearings is not None:
            assert sa.bearings.ids == sb.bearings.ids
            assert np.array_equal(sa.bearings.vecs, sb.bearings.vecs)


def test_generate_world_seed_changes_draws():
    spec = sim.TrajectorySpec(duration=1.0)
    a = sim.generate_world(spec, 8, sim.NoiseSpec(gyro_density=1e-3, seed=0))
    b = sim.generate_world(spec, 8, sim.NoiseSpec(gyro_density=1e-3, seed=1))
    assert not np.array_equal(a[0].imu.gyro, b[0].imu.gyro)


def test_generate_world_row_counts_and_stride():
    spec = sim.TrajectorySpec(duration=2.0, imu_rate=100.0, frame_rate=10.0)
    samples = sim.generate_world(spec, 4, sim.NoiseSpec())
    assert len(samples) == 200
    frame_idx = [k for k, s in enumerate(samples) if s.bearings is not None]
    assert frame_idx[0] == 0
    assert all(b - a == 10 for a, b in zip(frame_idx, frame_idx[1:]))


def test_generate_world_noise_free_bearings_match_truth():
    spec = sim.TrajectorySpec(duration=1.0)
    samples = sim.generate_world(spec, 12, sim.NoiseSpec())
    for s in samples:
        if s.bearings is None:
            continue
        full = measure(s.truth)
        index = {i: k for k, i in enumerate(full.ids)}
        for i, vec in zip(s.bearings.ids, s.bearings.vecs):
            assert np.allclose(vec, full.vecs[index[i]], atol=1e-12)


def test_generate_world_respects_field_of_view():
    spec = sim.TrajectorySpec(duration=2.0)
    fov = 30.0
    samples = sim.generate_world(spec, 20, sim.NoiseSpec(), fov_half_angle_deg=fov)
    cos_fov = math.cos(math.radians(fov))
    seen = 0
    for s in samples:
        if s.bearings is None:
            continue
        seen += len(s.bearings.ids)
        if len(s.bearings):
            assert np.min(s.bearings.vecs[:, 2]) >= cos_fov - 1e-12
    assert seen > 0


def test_generate_world_landmarks_inside_box():
    spec = sim.TrajectorySpec()
    lo, hi = sim.default_landmark_box(spec)
    samples = sim.generate_world(spec, 30, sim.NoiseSpec())
    pts = samples[0].truth.land_pts
    assert pts.shape == (30, 3)
    assert np.all(pts >= lo) and np.all(pts <= hi)


def test_generate_world_applies_constant_bias():
    spec = sim.TrajectorySpec(duration=0.5)
    bias = sim.NoiseSpec(gyro_bias=(0.01, -0.02, 0.03))
    clean = sim.generate_world(spec, 0, sim.NoiseSpec())
    off = sim.generate_world(spec, 0, bias)
    for sc, so_ in zip(clean, off):
        assert np.allclose(so_.imu.gyro - sc.imu.gyro, [0.01, -0.02, 0.03], atol=1e-12)


def test_truth_carries_bias_from_noise_spec():
    spec = sim.TrajectorySpec(duration=0.2)
    noise = sim.NoiseSpec(gyro_bias=(0.01, 0.0, 0.0), accel_bias=(0.0, 0.05, 0.0))
    samples = sim.generate_world(spec, 0, noise)
    assert np.allclose(samples[0].truth.bias, noise.bias6())


# ---------------------------------------------------------------------------
# Reintegration oracle


def test_reintegrate_circle_recovers_truth():
    """Constant body rates make the held IMU exact at the sample times."""
    spec = sim.TrajectorySpec(duration=10.0)
    samples = sim.generate_world(spec, 5, sim.NoiseSpec())
    rots, poss, vels = sim.reintegrate_imu(samples)
    for k in (0, len(samples) // 2, len(samples) - 1):
        assert np.linalg.norm(poss[k] - samples[k].truth.pose.t) < 1e-6
        assert np.linalg.norm(vels[k] - samples[k].truth.vel) < 1e-6
        assert np.linalg.norm(rots[k] - samples[k].truth.pose.rot.m) < 1e-6


def test_reintegrate_figure8_stays_close():
    """Varying body rates leave only the zero-order-hold discretisation error."""
    spec = sim.TrajectorySpec(family="figure8", duration=10.0)
    samples = sim.generate_world(spec, 5, sim.NoiseSpec())
    _, poss, _ = sim.reintegrate_imu(samples)
    err = max(np.linalg.norm(poss[k] - samples[k].truth.pose.t) for k in range(len(samples)))
    assert err < 0.05, f"reintegration drift {err:.3e}"


def test_reintegrate_uses_supplied_bias():
    spec = sim.TrajectorySpec(duration=2.0)
    noise = sim.NoiseSpec(gyro_bias=(0.005, 0.0, 0.0), accel_bias=(0.0, 0.0, 0.02))
    samples = sim.generate_world(spec, 0, noise)
    _, pos_bad, _ = sim.reintegrate_imu(samples)
    _, pos_ok, _ = sim.reintegrate_imu(samples, bias=noise.bias6())
    err_bad = np.linalg.norm(pos_bad[-1] - samples[-1].truth.pose.t)
    err_ok = np.linalg.norm(pos_ok[-1] - samples[-1].truth.pose.t)
    assert err_ok < 1e-6 < err_bad


# ---------------------------------------------------------------------------
# Frame transport


def test_transform_world_moves_truth_only():
    rng = np.random.default_rng(0)
    spec = sim.TrajectorySpec(duration=1.0)
    noise = sim.NoiseSpec(gyro_density=1e-3, bearing_std=2e-3, seed=2)
    samples = sim.generate_world(spec, 6, noise)
    S = random_yawtrans(rng)
    moved = sim.transform_world(S, samples)
    for a, b in zip(samples, moved):
        assert np.array_equal(a.imu.gyro, b.imu.gyro)
        assert np.array_equal(a.imu.accel, b.imu.accel)
        if a.bearings is not None:
            assert np.array_equal(a.bearings.vecs, b.bearings.vecs)
        # frame_change carries states into the frame described by S, which
        # premultiplies the pose by the inverse transform
        assert np.allclose(b.truth.pose.t, S.inverse().act(a.truth.pose.t), atol=1e-12)


# ---------------------------------------------------------------------------
# Particle clouds


def test_sample_particles_shapes_and_times():
    cloud = sim.sample_particles(
        1e-4 * np.eye(9), 50, np.array([0.0, 0.2, 0.0]), np.array([0.0, 0.0, -9.0]),
        horizon=15.0, record_every=5.0, seed=3,
    )
    assert np.allclose(cloud.times, [0.0, 5.0, 10.0, 15.0])
    assert cloud.rot.shape == (4, 50, 3, 3)
    assert cloud.pos.shape == (4, 50, 3)
    assert cloud.vel.shape == (4, 50, 3)
    assert cloud.nom_rot.shape == (4, 3, 3)


def test_sample_particles_deterministic():
    args = dict(
        Sigma0=1e-4 * np.eye(9), n_particles=40, omega=np.array([0.0, 0.2, 0.0]),
        accel=np.array([0.0, 0.0, -9.0]), horizon=5.0, seed=9,
    )
    a = sim.sample_particles(**args)
    b = sim.sample_particles(**args)
    assert np.array_equal(a.pos, b.pos)
    assert np.array_equal(a.rot, b.rot)


def test_sample_particles_tiny_spread_follows_nominal():
    cloud = sim.sample_particles(
        1e-20 * np.eye(9), 20, np.array([0.1, 0.0, 0.0]), np.array([0.0, 0.0, -9.5]),
        horizon=5.0, seed=4,
    )
    for k in range(len(cloud.times)):
        assert np.max(np.abs(cloud.pos[k] - cloud.nom_pos[k])) < 1e-6
        assert np.max(np.abs(cloud.rot[k] - cloud.nom_rot[k])) < 1e-6


def test_sample_particles_mean_near_nominal():
    """With a modest spread the cloud mean stays within sampling error."""
    P = 4000
    cloud = sim.sample_particles(
        np.diag([1e-4] * 3 + [1e-2] * 3 + [1e-2] * 3), P,
        np.array([0.0, 0.2, 0.0]), np.array([0.0, 0.0, -9.0]),
        horizon=5.0, seed=5,
    )
    spread = np.std(cloud.pos[-1], axis=0)
    mean_err = np.abs(np.mean(cloud.pos[-1], axis=0) - cloud.nom_pos[-1])
    assert np.all(mean_err < 5.0 * spread / math.sqrt(P) + 1e-3)


def test_sample_particles_rejects_bad_sigma():
    with pytest.raises(ValueError):
        sim.sample_particles(np.eye(3), 10, np.zeros(3), np.zeros(3), 1.0)
