"""Tests for landmark parametrisations and the filter's local chart."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flat_diff, random_group_element, random_state

from symvio import landmarks as lm
from symvio.chart import (
    Origin,
    coord_injection,
    coord_projection,
    local_coords,
    state_dim,
    state_from_coords,
)
from symvio.core import VisGroupElement, VisState, group_action
from symvio.errors import (
    ChartDomainError,
    CutLocusError,
    ExceptionSetError,
    LandmarkMismatchError,
)
from symvio.groups import SE3, Rot3

E3 = np.array([0.0, 0.0, 1.0])

# Points kept away from the camera centre and from the negative optical axis,
# where the polar chart is undefined.
front_points = st.tuples(
    st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.floats(0.3, 9.0)
).map(np.array)


# ---------------------------------------------------------------------------
# Parametrisation forward/inverse pairs


@given(front_points)
def test_euclidean_roundtrip(q):
    assert np.allclose(lm.euclidean_point(lm.euclidean_coords(q)), q)


@given(front_points)
def test_inverse_depth_roundtrip(q):
    assert np.allclose(lm.inverse_depth_point(lm.inverse_depth_coords(q)), q, atol=1e-10)


@given(front_points)
@settings(max_examples=200)
def test_polar_roundtrip(q):
    assert np.allclose(lm.polar_point(lm.polar_coords(q)), q, rtol=1e-9, atol=1e-12)


@given(
    st.floats(-1.2, 1.2), st.floats(-1.2, 1.2), st.floats(-1.5, 1.5)
)
def test_polar_coords_inverts_polar_point(w1, w2, logd):
    """On the slice with tilt orthogonal to e3 the maps are mutually inverse."""
    z = np.array([w1, w2, 0.0, logd])
    back = lm.polar_coords(lm.polar_point(z))
    assert np.allclose(back, z, atol=1e-9)


def test_inverse_depth_coords_example():
    assert np.allclose(lm.inverse_depth_coords(np.array([0.0, 0.0, 5.0])), [0.0, 0.0, 1.0, 0.2])


def test_polar_coords_example():
    z = lm.polar_coords(np.array([0.0, 0.0, 5.0]))
    assert np.allclose(z, [0.0, 0.0, 0.0, -np.log(5.0)], atol=1e-14)


def test_polar_coords_keeps_precision_for_tiny_tilts():
    """A nanoradian tilt survives the chart with full relative accuracy."""
    tilt = 1e-9
    q = np.array([5.0 * np.sin(tilt), 0.0, 5.0 * np.cos(tilt)])
    z = lm.polar_coords(q)
    assert abs(z[1] - (-tilt)) < 1e-6 * tilt
    assert np.allclose(lm.polar_point(z), q, rtol=1e-12)


def test_polar_coords_near_antipode_raises():
    with pytest.raises(ChartDomainError):
        lm.polar_coords(np.array([1e-9, 0.0, -4.0]))


def test_parametrisations_reject_camera_centre():
    with pytest.raises(ExceptionSetError):
        lm.inverse_depth_coords(np.zeros(3))
    with pytest.raises(ExceptionSetError):
        lm.polar_coords(np.zeros(3))


# ---------------------------------------------------------------------------
# Jacobians of the inverse maps


def _fd_jacobian(fn, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    cols = []
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = h
        cols.append((fn(z + e) - fn(z - e)) / (2.0 * h))
    return np.stack(cols, axis=1)


def test_euclidean_point_diff():
    assert np.allclose(lm.euclidean_point_diff(np.array([1.0, 2.0, 3.0])), np.eye(3))


def test_inverse_depth_point_diff_matches_fd():
    rng = np.random.default_rng(0)
    for _ in range(10):
        z = np.concatenate([rng.uniform(-1.0, 1.0, 3), [rng.uniform(0.2, 2.0)]])
        fd = _fd_jacobian(lm.inverse_depth_point, z)
        assert np.allclose(lm.inverse_depth_point_diff(z), fd, atol=1e-6)


def test_polar_point_diff_matches_fd():
    rng = np.random.default_rng(1)
    for _ in range(10):
        z = np.concatenate([rng.uniform(-1.0, 1.0, 3), [rng.uniform(-1.0, 1.0)]])
        fd = _fd_jacobian(lm.polar_point, z)
        assert np.allclose(lm.polar_point_diff(z), fd, atol=1e-6)


def test_chart_point_diff_constant_matches_fd():
    fd = _fd_jacobian(lm.chart_point, np.zeros(3))
    assert np.allclose(lm.CHART_POINT_DIFF0, fd, atol=1e-9)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-1.5, 1.5))
def test_chart_point_roundtrip(e1, e2, e3):
    e = np.array([e1, e2, e3])
    assert np.allclose(lm.chart_coords(lm.chart_point(e)), e, atol=1e-9)


# ---------------------------------------------------------------------------
# Tangent basis


def test_tangent_basis_orthonormal_right_handed():
    rng = np.random.default_rng(2)
    for _ in range(20):
        y = rng.normal(size=3)
        y /= np.linalg.norm(y)
        B = lm.tangent_basis(y)
        assert np.allclose(B @ B.T, np.eye(2), atol=1e-12)
        assert np.allclose(B @ y, 0.0, atol=1e-12)
        assert np.allclose(np.cross(B[0], B[1]), y, atol=1e-12)


def test_tangent_basis_near_seed_axis():
    y = np.array([0.999, 0.02, 0.0])
    y /= np.linalg.norm(y)
    B = lm.tangent_basis(y)
    assert np.allclose(B @ B.T, np.eye(2), atol=1e-12)
    assert np.allclose(np.cross(B[0], B[1]), y, atol=1e-12)


# ---------------------------------------------------------------------------
# Chart origin and local coordinates


def _origin_for(rng, n=3):
    xi = random_state(rng, n_land=n)
    return Origin.build(xi.land_ids, xi.pose, xi.vel, xi.bias, xi.cam)


def test_origin_state_maps_to_zero():
    rng = np.random.default_rng(3)
    origin = _origin_for(rng)
    eps = local_coords(origin, origin.state)
    assert eps.shape == (state_dim(3),)
    assert np.max(np.abs(eps)) < 1e-12


def test_origin_anchors_landmarks_at_unit_depth():
    """Origin landmarks sit on the optical axis one unit ahead of the camera."""
    rng = np.random.default_rng(4)
    origin = _origin_for(rng)
    q = origin.state.cam_points()
    assert np.allclose(q, np.tile(E3, (3, 1)), atol=1e-12)


def test_chart_roundtrip_state_to_coords():
    rng = np.random.default_rng(5)
    origin = _origin_for(rng)
    for _ in range(10):
        X = random_group_element(rng, origin.ids, scale=0.3)
        xi = group_action(X, origin.state)
        eps = local_coords(origin, xi)
        back = state_from_coords(origin, eps)
        assert np.max(np.abs(local_coords(origin, back) - eps)) < 1e-12
        assert flat_diff(back, xi) < 1e-9


def test_chart_roundtrip_coords_to_state():
    rng = np.random.default_rng(6)
    origin = _origin_for(rng)
    for _ in range(10):
        eps = 0.4 * rng.uniform(-1.0, 1.0, state_dim(3))
        back = local_coords(origin, state_from_coords(origin, eps))
        assert np.max(np.abs(back - eps)) < 1e-9


def test_chart_slope_matches_coordinate_projection():
    """First-order motion of the chart along exp(t u) is the algebra projection."""
    rng = np.random.default_rng(7)
    origin = _origin_for(rng)
    proj = coord_projection(3)
    h = 1e-6
    for _ in range(5):
        u = rng.uniform(-1.0, 1.0, VisGroupElement.algebra_dim(3))
        plus = local_coords(origin, group_action(VisGroupElement.exp(origin.ids, h * u), origin.state))
        minus = local_coords(origin, group_action(VisGroupElement.exp(origin.ids, -h * u), origin.state))
        fd = (plus - minus) / (2.0 * h)
        assert np.max(np.abs(fd - proj @ u)) < 1e-6


def test_projection_inverts_injection():
    for n in (0, 1, 4):
        P = coord_projection(n)
        J = coord_injection(n)
        assert P.shape == (21 + 3 * n, 21 + 4 * n)
        assert np.allclose(P @ J, np.eye(21 + 3 * n))


def test_local_coords_cut_locus():
    rng = np.random.default_rng(8)
    origin = _origin_for(rng)
    flip = Rot3.exp((np.pi - 1e-8) * np.array([1.0, 0.0, 0.0]))
    xi = origin.state
    far = VisState(
        SE3(xi.pose.rot @ flip, xi.pose.t), xi.vel, xi.bias, xi.cam,
        xi.land_ids, xi.land_pts,
    )
    with pytest.raises(CutLocusError):
        local_coords(origin, far)


def test_local_coords_registry_mismatch():
    rng = np.random.default_rng(9)
    origin = _origin_for(rng, n=2)
    other = random_state(rng, n_land=3)
    with pytest.raises(LandmarkMismatchError):
        local_coords(origin, other)


def test_origin_default_build_is_identity():
    origin = Origin.build()
    assert np.allclose(origin.state.pose.as_matrix(), np.eye(4))
    assert np.allclose(origin.state.vel, 0.0)
    assert np.allclose(origin.state.bias, 0.0)
    assert origin.ids == ()
