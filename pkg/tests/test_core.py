"""Tests for the state space, symmetry group, actions and the lift."""

import numpy as np
import pytest

from conftest import (
    flat_diff,
    random_group_element,
    random_imu,
    random_se23,
    random_state,
    random_yawtrans,
)

from symvio.core import (
    BearingSet,
    ImuInput,
    VisGroupElement,
    VisState,
    dynamics,
    flatten_state,
    frame_change,
    frame_change_tangent,
    group_action,
    lift,
    measure,
    measure_subset,
    nav_action,
    output_action,
    transporter,
)
from symvio.errors import ExceptionSetError, GeometryError, LandmarkMismatchError
from symvio.groups import SE3, SE23, SOT3

GRAVITY = 9.81
E3 = np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# Group structure


def test_group_identity_action():
    rng = np.random.default_rng(0)
    xi = random_state(rng)
    assert flat_diff(group_action(VisGroupElement.identity(xi.land_ids), xi), xi) < 1e-14


def test_group_action_is_right_action():
    """Acting by X then Y equals acting by the product X @ Y."""
    rng = np.random.default_rng(1)
    for _ in range(10):
        xi = random_state(rng)
        X = random_group_element(rng, xi.land_ids)
        Y = random_group_element(rng, xi.land_ids)
        once = group_action(X @ Y, xi)
        twice = group_action(Y, group_action(X, xi))
        assert flat_diff(once, twice) < 1e-10


def test_group_inverse_undoes_action():
    rng = np.random.default_rng(2)
    xi = random_state(rng)
    X = random_group_element(rng, xi.land_ids)
    back = group_action(X.inverse(), group_action(X, xi))
    assert flat_diff(back, xi) < 1e-10


def test_group_compose_associative():
    rng = np.random.default_rng(3)
    ids = (0, 1)
    A, B, C = (random_group_element(rng, ids) for _ in range(3))
    left = (A @ B) @ C
    right = A @ (B @ C)
    assert np.max(np.abs(left.log() - right.log())) < 1e-9


def test_group_exp_log_roundtrip():
    rng = np.random.default_rng(4)
    ids = (2, 5, 9)
    v = 0.6 * rng.uniform(-1.0, 1.0, VisGroupElement.algebra_dim(3))
    assert np.max(np.abs(VisGroupElement.exp(ids, v).log() - v)) < 1e-9


def test_group_exp_is_componentwise():
    """The product-group exponential splits over the four factors."""
    rng = np.random.default_rng(5)
    ids = (1, 4)
    v = 0.5 * rng.uniform(-1.0, 1.0, 29)
    X = VisGroupElement.exp(ids, v)
    assert np.allclose(X.nav.as_matrix(), SE23.exp(v[0:9]).as_matrix(), atol=1e-12)
    assert np.allclose(X.beta, v[9:15])
    assert np.allclose(X.cam.as_matrix(), SE3.exp(v[15:21]).as_matrix(), atol=1e-12)
    for i in range(2):
        Qi = SOT3.exp(v[21 + 4 * i : 25 + 4 * i])
        assert np.allclose(X.landmark(i).as_matrix(), Qi.as_matrix(), atol=1e-12)


def test_group_adjoint_conjugation():
    rng = np.random.default_rng(6)
    ids = (0, 7)
    X = random_group_element(rng, ids)
    u = 0.3 * rng.uniform(-1.0, 1.0, 29)
    left = (X @ VisGroupElement.exp(ids, u)) @ X.inverse()
    right = VisGroupElement.exp(ids, X.adjoint() @ u)
    assert np.max(np.abs(left.log() - right.log())) < 1e-9


def test_group_compose_rejects_registry_mismatch():
    rng = np.random.default_rng(7)
    with pytest.raises(LandmarkMismatchError):
        random_group_element(rng, (0, 1)) @ random_group_element(rng, (0, 2))


def test_action_rejects_registry_mismatch():
    rng = np.random.default_rng(8)
    xi = random_state(rng, n_land=2)
    with pytest.raises(LandmarkMismatchError):
        group_action(random_group_element(rng, (5, 6)), xi)


# ---------------------------------------------------------------------------
# Transporter and transitivity


def test_transporter_connects_states():
    rng = np.random.default_rng(9)
    for _ in range(10):
        a = random_state(rng)
        b = random_state(rng)
        assert flat_diff(group_action(transporter(a, b), a), b) < 1e-9


def test_transporter_at_same_state_is_identity():
    rng = np.random.default_rng(10)
    a = random_state(rng)
    X = transporter(a, a)
    assert np.max(np.abs(X.log())) < 1e-9


def test_transporter_through_action_recovers_element():
    """transporter(xi, phi(X, xi)) acts the same way X does at xi."""
    rng = np.random.default_rng(11)
    xi = random_state(rng)
    X = random_group_element(rng, xi.land_ids)
    Y = transporter(xi, group_action(X, xi))
    assert flat_diff(group_action(Y, xi), group_action(X, xi)) < 1e-9


# ---------------------------------------------------------------------------
# Reference frame changes


def test_frame_change_is_right_action():
    rng = np.random.default_rng(12)
    xi = random_state(rng)
    S1 = random_yawtrans(rng)
    S2 = random_yawtrans(rng)
    once = frame_change(S1 @ S2, xi)
    twice = frame_change(S2, frame_change(S1, xi))
    assert flat_diff(once, twice) < 1e-10


def test_frame_change_preserves_bearings():
    rng = np.random.default_rng(13)
    xi = random_state(rng)
    y0 = measure(xi)
    y1 = measure(frame_change(random_yawtrans(rng), xi))
    assert y0.ids == y1.ids
    assert np.max(np.abs(y0.vecs - y1.vecs)) < 1e-10


def test_frame_change_leaves_bias_and_extrinsics():
    rng = np.random.default_rng(14)
    xi = random_state(rng)
    moved = frame_change(random_yawtrans(rng), xi)
    assert np.allclose(moved.bias, xi.bias)
    assert np.allclose(moved.cam.as_matrix(), xi.cam.as_matrix())


def test_dynamics_equivariant_under_frame_change():
    """Moving the world frame commutes with taking the state derivative."""
    rng = np.random.default_rng(15)
    for _ in range(5):
        xi = random_state(rng)
        u = random_imu(rng)
        S = random_yawtrans(rng)
        lhs = dynamics(frame_change(S, xi), u).flatten()
        rhs = frame_change_tangent(S, dynamics(xi, u)).flatten()
        assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_frame_change_commutes_with_group_action():
    rng = np.random.default_rng(16)
    xi = random_state(rng)
    X = random_group_element(rng, xi.land_ids)
    S = random_yawtrans(rng)
    lhs = frame_change(S, group_action(X, xi))
    rhs = group_action(X, frame_change(S, xi))
    assert flat_diff(lhs, rhs) < 1e-9


# ---------------------------------------------------------------------------
# Measurements


def test_measure_trivial_geometry():
    """A landmark straight ahead of an untransformed camera reads e3."""
    xi = VisState(
        SE3.identity(), np.zeros(3), np.zeros(6), SE3.identity(), (0,),
        np.array([[0.0, 0.0, 5.0]]),
    )
    y = measure(xi)
    assert y.ids == (0,)
    assert np.allclose(y.vecs[0], E3, atol=1e-14)


def test_state_rejects_landmark_at_camera_centre():
    """The exception set of the bearing map is excluded at construction."""
    with pytest.raises(ExceptionSetError):
        VisState(
            SE3.identity(), np.zeros(3), np.zeros(6), SE3.identity(), (0,),
            np.zeros((1, 3)),
        )


def test_measure_subset_picks_requested_ids():
    rng = np.random.default_rng(17)
    xi = random_state(rng, n_land=4)
    want = (xi.land_ids[2], xi.land_ids[0])
    y = measure_subset(xi, want)
    assert y.ids == want
    full = measure(xi)
    assert np.allclose(y.vecs[0], full.vecs[2])
    assert np.allclose(y.vecs[1], full.vecs[0])


def test_output_equivariance():
    """measure(phi(X, xi)) equals the output action of X on measure(xi)."""
    rng = np.random.default_rng(18)
    for _ in range(10):
        xi = random_state(rng)
        X = random_group_element(rng, xi.land_ids)
        lhs = measure(group_action(X, xi))
        rhs = output_action(X, measure(xi))
        assert np.max(np.abs(lhs.vecs - rhs.vecs)) < 1e-10


def test_output_action_ignores_scale():
    rng = np.random.default_rng(19)
    xi = random_state(rng, n_land=2)
    X = random_group_element(rng, xi.land_ids)
    doubled = VisGroupElement(
        X.nav, X.beta, X.cam, X.land_ids, X.land_rot, 2.0 * X.land_scale
    )
    y = measure(xi)
    assert np.allclose(output_action(X, y).vecs, output_action(doubled, y).vecs)


def test_output_action_rejects_registry_mismatch():
    rng = np.random.default_rng(20)
    xi = random_state(rng, n_land=2)
    X = random_group_element(rng, (8, 9))
    with pytest.raises(LandmarkMismatchError):
        output_action(X, measure(xi))


def test_bearing_set_rejects_non_unit_vectors():
    with pytest.raises(GeometryError):
        BearingSet((0,), np.array([[0.0, 0.0, 2.0]]))


def test_state_rejects_duplicate_landmark_ids():
    with pytest.raises(LandmarkMismatchError):
        VisState(
            SE3.identity(), np.zeros(3), np.zeros(6), SE3.identity(), (3, 3),
            np.zeros((2, 3)) + np.array([0.0, 0.0, 1.0]),
        )


def test_nav_action_matches_full_action():
    rng = np.random.default_rng(21)
    xi = random_state(rng)
    X = random_group_element(rng, xi.land_ids)
    lhs = group_action(X, xi).nav()
    rhs = nav_action(X.nav, xi.nav())
    assert np.max(np.abs(lhs.as_matrix() - rhs.as_matrix())) < 1e-12


# ---------------------------------------------------------------------------
# Dynamics and lift


def test_dynamics_stationary_gravity_only():
    """At rest with zero input only gravity shows up, in the velocity slot."""
    xi = VisState(
        SE3.identity(), np.zeros(3), np.zeros(6), SE3.identity(), (0,),
        np.array([[0.0, 0.0, 5.0]]),
    )
    tan = dynamics(xi, ImuInput(np.zeros(3), np.zeros(3)))
    assert np.allclose(tan.vel_dot, GRAVITY * E3)
    assert np.allclose(tan.rot_dot, 0.0)
    assert np.allclose(tan.pos_dot, 0.0)
    assert np.allclose(tan.land_dot, 0.0)


def test_dynamics_subtracts_bias():
    rng = np.random.default_rng(22)
    xi = random_state(rng)
    u = random_imu(rng)
    corrected = ImuInput(u.gyro - xi.bias[:3], u.accel - xi.bias[3:])
    unbiased = VisState(xi.pose, xi.vel, np.zeros(6), xi.cam, xi.land_ids, xi.land_pts)
    lhs = dynamics(xi, u).flatten()
    rhs = dynamics(unbiased, corrected).flatten()
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_lift_generates_dynamics():
    """Flowing along exp(h * lift) through the action reproduces the dynamics.

    Central difference through the flattened state with h = 1e-6, checked on a
    batch of random states with nonzero bias.
    """
    rng = np.random.default_rng(23)
    h = 1e-6
    for _ in range(30):
        xi = random_state(rng)
        u = random_imu(rng)
        lam = lift(xi, u)
        plus = flatten_state(group_action(VisGroupElement.exp(xi.land_ids, h * lam), xi))
        minus = flatten_state(group_action(VisGroupElement.exp(xi.land_ids, -h * lam), xi))
        fd = (plus - minus) / (2.0 * h)
        truth = dynamics(xi, u).flatten()
        err = np.max(np.abs(fd - truth))
        scale = max(1.0, np.max(np.abs(truth)))
        assert err / scale < 1e-5, f"lift defect {err:.3e} against scale {scale:.3e}"


def test_lift_invariant_under_frame_change():
    rng = np.random.default_rng(24)
    for _ in range(10):
        xi = random_state(rng)
        u = random_imu(rng)
        S = random_yawtrans(rng)
        diff = np.max(np.abs(lift(frame_change(S, xi), u) - lift(xi, u)))
        assert diff < 1e-9, f"lift moved by {diff:.3e} under a frame change"


def test_lift_vanishes_in_hover():
    """Zero velocity and gravity-compensating thrust produce a zero lift."""
    rng = np.random.default_rng(25)
    xi0 = random_state(rng)
    xi = VisState(xi0.pose, np.zeros(3), xi0.bias, xi0.cam, xi0.land_ids, xi0.land_pts)
    R = xi.pose.rot.m
    u = ImuInput(xi.bias[:3], xi.bias[3:] - GRAVITY * (R.T @ E3))
    assert np.max(np.abs(lift(xi, u))) < 1e-12


def test_lift_forward_motion_landmark_slot():
    """Pure forward motion toward a centred landmark only changes its depth."""
    xi = VisState(
        SE3.identity(), E3.copy(), np.zeros(6), SE3.identity(), (0,),
        np.array([[0.0, 0.0, 5.0]]),
    )
    lam = lift(xi, ImuInput(np.zeros(3), np.zeros(3)))
    assert np.allclose(lam[21:25], [0.0, 0.0, 0.0, 0.2], atol=1e-12)


def test_lift_bias_slot_is_zero():
    rng = np.random.default_rng(26)
    xi = random_state(rng)
    assert np.allclose(lift(xi, random_imu(rng))[9:15], 0.0)


# ---------------------------------------------------------------------------
# State helpers


def test_camera_pose_composes_extrinsics():
    rng = np.random.default_rng(27)
    xi = random_state(rng)
    expected = xi.pose @ xi.cam
    assert np.allclose(xi.camera_pose().as_matrix(), expected.as_matrix(), atol=1e-12)


def test_cam_points_are_camera_frame_landmarks():
    rng = np.random.default_rng(28)
    xi = random_state(rng)
    C = xi.camera_pose()
    for i in range(xi.n_landmarks):
        assert np.allclose(xi.cam_points()[i], C.inverse().act(xi.land_pts[i]), atol=1e-12)


def test_with_nav_replaces_only_nav_states():
    rng = np.random.default_rng(29)
    xi = random_state(rng)
    nav = random_se23(rng)
    out = xi.with_nav(nav)
    assert np.allclose(out.pose.as_matrix(), nav.pose().as_matrix())
    assert np.allclose(out.vel, nav.v)
    assert np.allclose(out.bias, xi.bias)
    assert np.allclose(out.land_pts, xi.land_pts)
