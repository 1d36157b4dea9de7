"""File formats: CSV streams, flat key = value configs, metric reports.

All floats are written with 17 significant digits so write -> read -> write
is byte-identical, and quaternions only exist here at the file boundary;
everything in memory is a rotation matrix.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import so3
from .core import BearingSet, VisState
from .errors import ConfigError, ParseError
from .filter import DEFAULT_GATE, GainConfig
from .groups import SE3, Rot3
from .sim import NoiseSpec, TrajectorySpec

IMU_HEADER = "t,wx,wy,wz,ax,ay,az"
FEATURES_HEADER = "t,id,bx,by,bz"
TRUTH_HEADER = "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz"
ESTIMATE_HEADER = (
    "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,"
    "bgx,bgy,bgz,bax,bay,baz,eqw,eqx,eqy,eqz,epx,epy,epz"
)


def fmt_float(x: float) -> str:
    """Text that parses back to the exact same double and reformats stably."""
    return "%.17g" % float(x)


_fmt = fmt_float


def _fmt_row(values) -> str:
    return ",".join(_fmt(v) for v in values)


def _read_rows(path: str, header: str, n_cols: int):
    """Yield (line_number, fields) after validating the header line."""
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != header:
        raise ParseError(f"{path}:1: expected header {header!r}")
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise ParseError(f"{path}:{ln}: expected {n_cols} columns, got {len(parts)}")
        yield ln, parts


def _floats(path: str, ln: int, parts):
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"{path}:{ln}: {exc}") from None


# ---------------------------------------------------------------------------
# IMU stream.


def write_imu_csv(path: str, t: np.ndarray, gyro: np.ndarray, accel: np.ndarray):
    with open(path, "w") as fh:
        fh.write(IMU_HEADER + "\n")
        for k in range(len(t)):
            fh.write(_fmt_row([t[k], *gyro[k], *accel[k]]) + "\n")


def read_imu_csv(path: str):
    ts, gy, ac = [], [], []
    for ln, parts in _read_rows(path, IMU_HEADER, 7):
        vals = _floats(path, ln, parts)
        ts.append(vals[0])
        gy.append(vals[1:4])
        ac.append(vals[4:7])
    t = np.array(ts)
    if t.size > 1 and np.any(np.diff(t) <= 0.0):
        raise ParseError(f"{path}: IMU timestamps must be strictly increasing")
    return t, np.array(gy).reshape(-1, 3), np.array(ac).reshape(-1, 3)


# ---------------------------------------------------------------------------
# Feature-track stream: one row per observed bearing, grouped by frame time.


def write_features_csv(path: str, frames):
    """frames: iterable of (t, BearingSet)."""
    with open(path, "w") as fh:
        fh.write(FEATURES_HEADER + "\n")
        for t, bs in frames:
            for i, lid in enumerate(bs.ids):
                fh.write(_fmt(t) + "," + str(int(lid)) + "," + _fmt_row(bs.vecs[i]) + "\n")


def read_features_csv(path: str):
    frames = []
    cur_t = None
    cur_ids, cur_vecs = [], []

    def flush():
        if cur_t is not None:
            frames.append((cur_t, BearingSet(tuple(cur_ids), np.array(cur_vecs))))

    for ln, parts in _read_rows(path, FEATURES_HEADER, 5):
        t = _floats(path, ln, parts[:1])[0]
        try:
            lid = int(parts[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{ln}: {exc}") from None
        if lid < 0:
            raise ParseError(f"{path}:{ln}: negative feature id")
        vec = _floats(path, ln, parts[2:])
        if cur_t is None or t != cur_t:
            if cur_t is not None and t <= cur_t:
                raise ParseError(f"{path}:{ln}: frame timestamps must increase")
            flush()
            cur_t, cur_ids, cur_vecs = t, [], []
        if lid in cur_ids:
            raise ParseError(f"{path}:{ln}: duplicate feature id {lid} in frame")
        cur_ids.append(lid)
        cur_vecs.append(vec)
    flush()
    return frames


# ---------------------------------------------------------------------------
# Trajectory streams.  Quaternions are scalar-first Hamilton.


def write_truth_csv(path: str, t: np.ndarray, states):
    with open(path, "w") as fh:
        fh.write(TRUTH_HEADER + "\n")
        for k, s in enumerate(states):
            q = so3.quat_from_rotmat(s.pose.rot.m)
            fh.write(_fmt_row([t[k], *s.pose.t, *q, *s.vel]) + "\n")


def read_truth_csv(path: str):
    """Returns (t, positions, rotations, velocities) as stacked arrays."""
    ts, pos, rot, vel = [], [], [], []
    for ln, parts in _read_rows(path, TRUTH_HEADER, 11):
        vals = _floats(path, ln, parts)
        ts.append(vals[0])
        pos.append(vals[1:4])
        rot.append(so3.rotmat_from_quat(np.array(vals[4:8])))
        vel.append(vals[8:11])
    t = np.array(ts)
    if t.size > 1 and np.any(np.diff(t) <= 0.0):
        raise ParseError(f"{path}: truth timestamps must be strictly increasing")
    return t, np.array(pos).reshape(-1, 3), np.array(rot).reshape(-1, 3, 3), np.array(vel).reshape(-1, 3)


def write_estimate_csv(path: str, t: np.ndarray, states):
    with open(path, "w") as fh:
        fh.write(ESTIMATE_HEADER + "\n")
        for k, s in enumerate(states):
            q = so3.quat_from_rotmat(s.pose.rot.m)
            eq = so3.quat_from_rotmat(s.cam.rot.m)
            fh.write(
                _fmt_row([t[k], *s.pose.t, *q, *s.vel, *s.bias, *eq, *s.cam.t]) + "\n"
            )


def read_estimate_csv(path: str):
    """Returns (t, list of landmark-free VisState)."""
    ts, states = [], []
    for ln, parts in _read_rows(path, ESTIMATE_HEADER, 24):
        vals = _floats(path, ln, parts)
        ts.append(vals[0])
        pose = SE3(Rot3(so3.rotmat_from_quat(np.array(vals[4:8]))), np.array(vals[1:4]))
        cam = SE3(Rot3(so3.rotmat_from_quat(np.array(vals[17:21]))), np.array(vals[21:24]))
        states.append(
            VisState(pose, np.array(vals[8:11]), np.array(vals[11:17]), cam, (), np.zeros((0, 3)))
        )
    return np.array(ts), states


# ---------------------------------------------------------------------------
# Key = value reports.


def write_key_values(path: str, items: dict):
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, float):
                fh.write(f"{k} = {_fmt(v)}\n")
            else:
                fh.write(f"{k} = {v}\n")


def read_key_values(path: str) -> dict:
    out = {}
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{ln}: expected key = value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------------
# Run configuration.


def _vec(text: str, n: int):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ValueError(f"expected {n} comma-separated values")
    return tuple(float(p) for p in parts)


@dataclass(frozen=True)
class RunConfig:
    """Flat configuration shared by every subcommand."""

    # trajectory / world
    family: str = "circle"
    radius: float = 5.0
    period: float = 20.0
    altitude: float = 0.0
    duration: float = 60.0
    imu_rate: float = 200.0
    frame_rate: float = 20.0
    n_landmarks: int = 20
    fov_half_angle_deg: float = 45.0
    # noise
    gyro_density: float = 1e-3
    accel_density: float = 1e-2
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    accel_bias: tuple = (0.0, 0.0, 0.0)
    bearing_std: float = 2e-3
    seed: int = 0
    # filter gains
    gyro_noise: float = 1e-3
    accel_noise: float = 1e-2
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4
    bearing_noise: float = 2e-3
    nav_process: float = 1e-6
    ext_process: float = 1e-6
    land_process: float = 1e-6
    # The filter seeds its pose and velocity from the first truth row when one
    # is available, so the default initial spread is tight.  Raise these three
    # when the starting state is only roughly known.
    sigma0_att: float = 1e-3
    sigma0_pos: float = 1e-3
    sigma0_vel: float = 1e-3
    sigma0_gyro_bias: float = 0.02
    sigma0_accel_bias: float = 0.1
    sigma0_ext_rot: float = 0.01
    sigma0_ext_pos: float = 0.01
    land_angle_std: float = 0.1
    land_depth_std: float = 0.5
    gate: float = DEFAULT_GATE
    second_order_transition: bool = True
    gravity: float = 9.81
    # filter frontend / pipeline
    max_landmarks: int = 50
    track_timeout: float = 0.5
    depth_init: str = "auto"
    max_imu_gap: float = 0.5
    cam_quat: tuple = (1.0, 0.0, 0.0, 0.0)
    cam_pos: tuple = (0.0, 0.0, 0.0)
    # paths (relative paths resolve against the output directory)
    imu_file: str = "imu.csv"
    features_file: str = "features.csv"
    truth_file: str = "truth.csv"
    estimate_file: str = "estimate.csv"
    timing_file: str = "timing.txt"
    metrics_file: str = "metrics.txt"

    def __post_init__(self):
        if self.depth_init not in ("auto", "median"):
            try:
                d = float(self.depth_init)
            except ValueError:
                raise ConfigError(
                    "depth_init must be 'auto', 'median' or a positive number, "
                    f"got {self.depth_init!r}"
                ) from None
            if not d > 0.0:
                raise ConfigError("depth_init must be positive")

    def trajectory_spec(self) -> TrajectorySpec:
        return TrajectorySpec(
            self.family, self.radius, self.period, self.altitude,
            self.duration, self.imu_rate, self.frame_rate,
        )

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(
            self.gyro_density, self.accel_density,
            np.array(self.gyro_bias), np.array(self.accel_bias),
            self.bearing_std, self.seed,
        )

    def gain_config(self) -> GainConfig:
        return GainConfig(
            gyro_noise=self.gyro_noise,
            accel_noise=self.accel_noise,
            gyro_bias_walk=self.gyro_bias_walk,
            accel_bias_walk=self.accel_bias_walk,
            bearing_noise=self.bearing_noise,
            nav_process=self.nav_process,
            ext_process=self.ext_process,
            land_process=self.land_process,
            sigma0_att=self.sigma0_att,
            sigma0_pos=self.sigma0_pos,
            sigma0_vel=self.sigma0_vel,
            sigma0_gyro_bias=self.sigma0_gyro_bias,
            sigma0_accel_bias=self.sigma0_accel_bias,
            sigma0_ext_rot=self.sigma0_ext_rot,
            sigma0_ext_pos=self.sigma0_ext_pos,
            land_angle_std=self.land_angle_std,
            land_depth_std=self.land_depth_std,
            gate=self.gate,
            second_order_transition=self.second_order_transition,
            gravity=self.gravity,
        )

    def cam_pose(self) -> SE3:
        q = np.array(self.cam_quat, dtype=float)
        q = q / np.linalg.norm(q)
        return SE3(Rot3(so3.rotmat_from_quat(q)), np.array(self.cam_pos, dtype=float))

    def depth_value(self):
        """Fixed landmark seed depth, or None for the auto/median policies."""
        if self.depth_init in ("auto", "median"):
            return None
        return float(self.depth_init)


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_config_value(name: str, text: str):
    f = _CONFIG_FIELDS[name]
    if isinstance(f.default, tuple):
        return _vec(text, len(f.default))
    if isinstance(f.default, bool):
        low = text.lower()
        if low not in ("true", "false"):
            raise ValueError("expected true or false")
        return low == "true"
    if isinstance(f.default, int) and not isinstance(f.default, bool):
        return int(text)
    if isinstance(f.default, float):
        return float(text)
    return text


def read_config(path: str) -> RunConfig:
    """Parse a flat key = value file; every key must be a known setting."""
    values = {}
    try:
        with open(path, "r") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for ln, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value")
        key, text = (p.strip() for p in line.split("=", 1))
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
        try:
            values[key] = _parse_config_value(key, text)
        except ValueError as exc:
            raise ConfigError(f"{path}:{ln}: bad value for {key}: {exc}") from None
    try:
        return RunConfig(**values)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def write_config(path: str, config: RunConfig):
    with open(path, "w") as fh:
        for f in dataclasses.fields(RunConfig):
            v = getattr(config, f.name)
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, tuple):
                text = ",".join(_fmt(x) for x in v)
            elif isinstance(v, float):
                text = _fmt(v)
            else:
                text = str(v)
            fh.write(f"{f.name} = {text}\n")


# ---------------------------------------------------------------------------
# Scalar fields over a (z, theta) grid, row-major.

GRID_HEADER = "z,theta,mu"


def write_grid_csv(path: str, z_vals, theta_vals, field):
    field = np.asarray(field)
    with open(path, "w") as fh:
        fh.write(GRID_HEADER + "\n")
        for i, z in enumerate(z_vals):
            for j, th in enumerate(theta_vals):
                fh.write(_fmt_row([z, th, field[i, j]]) + "\n")


def read_grid_csv(path: str):
    rows = []
    for ln, parts in _read_rows(path, GRID_HEADER, 3):
        rows.append(_floats(path, ln, parts))
    return np.array(rows).reshape(-1, 3)


# ---------------------------------------------------------------------------
# Dataset bundling for the filter pipeline.


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """IMU and feature streams plus optional ground truth, timestamp-sorted."""

    imu_t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    frames: list  # (t, BearingSet)
    truth_t: np.ndarray = None
    truth_pos: np.ndarray = None
    truth_rot: np.ndarray = None
    truth_vel: np.ndarray = None

    @property
    def has_truth(self) -> bool:
        return self.truth_t is not None


def load_dataset(imu_path: str, features_path: str, truth_path: str = None) -> DatasetBundle:
    t, gyro, accel = read_imu_csv(imu_path)
    frames = read_features_csv(features_path)
    if truth_path is None:
        return DatasetBundle(t, gyro, accel, frames)
    tt, tp, tr, tv = read_truth_csv(truth_path)
    return DatasetBundle(t, gyro, accel, frames, tt, tp, tr, tv)
