"""Local coordinates about a fixed origin state.

The filter's covariance lives in a chart centred at an arbitrary but fixed
origin state.  The chart splits by component:

* extended pose: left-invariant log at the origin nav state (9 coords);
* bias: plain difference (6);
* extrinsics: SE(3) log of the camera-pose difference (6);
* landmark i: bearing-angle/log-depth coordinates of the point expressed in
  the state's own camera frame (3 each).

The origin places every registered landmark at unit depth on the camera axis,
so the origin itself maps to zero.  The chart dimension 21 + 3n is one short
per landmark of the group dimension 21 + 4n; the constant matrices returned by
:func:`coord_projection` and :func:`coord_injection` convert between algebra
directions and chart directions at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import VisState
from .errors import LandmarkMismatchError
from .groups import SE3, SE23
from .landmarks import chart_coords, chart_point

STATE_DIM_FIXED = 21
LAND_DIM = 3
GROUP_LAND_DIM = 4


def state_dim(n: int) -> int:
    return STATE_DIM_FIXED + LAND_DIM * n


def group_dim(n: int) -> int:
    return STATE_DIM_FIXED + GROUP_LAND_DIM * n


@dataclass(frozen=True, eq=False)
class Origin:
    """Chart origin; wraps a state whose landmarks sit at unit depth on axis."""

    state: VisState

    @staticmethod
    def build(ids=(), pose: SE3 = None, vel=None, bias=None, cam: SE3 = None) -> "Origin":
        pose = SE3.identity() if pose is None else pose
        cam = SE3.identity() if cam is None else cam
        vel = np.zeros(3) if vel is None else vel
        bias = np.zeros(6) if bias is None else bias
        anchor = (pose @ cam).act(np.array([0.0, 0.0, 1.0]))
        pts = np.tile(anchor, (len(ids), 1))
        return Origin(VisState(pose, vel, bias, cam, tuple(ids), pts))

    @property
    def ids(self) -> tuple:
        return self.state.land_ids

    def camera_pose(self) -> SE3:
        return self.state.camera_pose()


def local_coords(origin: Origin, xi: VisState) -> np.ndarray:
    """Chart value of ``xi``; zero exactly at the origin state."""
    o = origin.state
    if o.land_ids != xi.land_ids:
        raise LandmarkMismatchError("state and chart origin have different registries")
    eps_nav = (o.nav().inverse() @ xi.nav()).log()
    eps_bias = xi.bias - o.bias
    eps_ext = (o.camera_pose().inverse() @ xi.camera_pose()).log()
    q = xi.cam_points()
    eps_land = np.array([chart_coords(qi) for qi in q]).reshape(-1)
    return np.concatenate([eps_nav, eps_bias, eps_ext, eps_land])


def state_from_coords(origin: Origin, eps: np.ndarray) -> VisState:
    """Inverse chart: rebuild the state from its coordinates."""
    o = origin.state
    n = o.n_landmarks
    eps = np.asarray(eps, dtype=float).reshape(state_dim(n))
    nav = o.nav() @ SE23.exp(eps[0:9])
    bias = o.bias + eps[9:15]
    C = o.camera_pose() @ SE3.exp(eps[15:21])
    cam = nav.pose().inverse() @ C
    land = eps[21:].reshape(n, LAND_DIM)
    pts = C.act(np.array([chart_point(z) for z in land]).reshape(n, 3))
    return VisState(nav.pose(), nav.v, bias, cam, o.land_ids, pts)


def coord_projection(n: int) -> np.ndarray:
    """Differential at zero of (algebra direction -> chart direction).

    Identity on the nav, bias and extrinsic slots.  For each landmark slot the
    first two rotation coordinates drive the bearing angles, the scale
    coordinate drives log depth, and the rotation about the bearing axis is
    dropped: it fixes the on-axis origin point, so the chart cannot see it.
    """
    d_in, d_out = group_dim(n), state_dim(n)
    out = np.zeros((d_out, d_in))
    out[:21, :21] = np.eye(21)
    block = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 0, 1.0]])
    for i in range(n):
        out[21 + 3 * i : 24 + 3 * i, 21 + 4 * i : 25 + 4 * i] = block
    return out


def coord_injection(n: int) -> np.ndarray:
    """Right inverse of :func:`coord_projection` (zero third rotation coord)."""
    d_out, d_in = group_dim(n), state_dim(n)
    out = np.zeros((d_out, d_in))
    out[:21, :21] = np.eye(21)
    block = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0], [0, 0, 1.0]])
    for i in range(n):
        out[21 + 4 * i : 25 + 4 * i, 21 + 3 * i : 24 + 3 * i] = block
    return out
