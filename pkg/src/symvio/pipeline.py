"""Closed-loop filter driver: streams in, estimate trajectory out.

The driver owns everything the backend deliberately does not: timestamp
merging of the two input streams, deciding when a feature track becomes a
filter landmark, dropping stale tracks, and collecting innovation and timing
records for later analysis.

Landmark bootstrap is two-view: the first sighting of an id only stores the
estimated camera ray, and the landmark joins the filter once a later sighting
subtends enough parallax to triangulate a depth.  A fixed-depth mode is
available through the configuration for experiments that want immediate
initialisation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import filter as eqf
from .core import ImuInput, VisState
from .errors import ParseError
from .groups import SE3, Rot3
from .io import DatasetBundle, RunConfig

MIN_PARALLAX_DEG = 0.5
MIN_TRIANGULATED_DEPTH = 0.05


@dataclass(frozen=True, eq=False)
class InnovationRecord:
    t: float
    ids: tuple
    residual: np.ndarray  # stacked tangent-plane residuals of accepted bearings
    mahalanobis: np.ndarray  # per-landmark gate statistic, accepted ones only


@dataclass(frozen=True, eq=False)
class RunResult:
    times: np.ndarray
    estimates: list  # landmark-free VisState per IMU tick, post-update
    innovations: list  # InnovationRecord per frame that produced an update
    frame_ms: list
    n_updates: int
    n_rejected: int
    n_adds: int
    n_removes: int
    skipped_frames: int

    def timing(self) -> dict:
        if not self.frame_ms:
            return {"frames": 0, "mean_ms": 0.0, "max_ms": 0.0}
        arr = np.asarray(self.frame_ms)
        return {
            "frames": int(arr.size),
            "mean_ms": float(arr.mean()),
            "max_ms": float(arr.max()),
        }


class _Candidate:
    __slots__ = ("origin", "ray", "last_seen")

    def __init__(self, origin, ray, t):
        self.origin = origin
        self.ray = ray
        self.last_seen = t


def _light_estimate(fs: eqf.FilterState) -> VisState:
    """State estimate without reconstructing landmark points."""
    org = fs.origin.state
    nav = org.nav() @ fs.Xhat.nav
    pose = nav.pose()
    cam = pose.inverse() @ org.camera_pose() @ fs.Xhat.cam
    return VisState(pose, nav.v, org.bias + fs.Xhat.beta, cam, (), np.zeros((0, 3)))


def _ray_depth(o1, d1, o2, d2):
    """Least-squares crossing of two unit rays: depth along the second ray."""
    b = o2 - o1
    d12 = float(np.dot(d1, d2))
    denom = 1.0 - d12 * d12
    if denom < 1e-12:
        return -1.0
    return (d12 * float(np.dot(b, d1)) - float(np.dot(b, d2))) / denom


def run_filter(dataset: DatasetBundle, config: RunConfig) -> RunResult:
    gains = config.gain_config()
    imu_t = dataset.imu_t
    if imu_t.size == 0:
        raise ParseError("empty IMU stream")

    pose0 = SE3.identity()
    vel0 = np.zeros(3)
    if dataset.has_truth:
        pose0 = SE3(Rot3(dataset.truth_rot[0]), dataset.truth_pos[0])
        vel0 = dataset.truth_vel[0]
    start = VisState(pose0, vel0, np.zeros(6), config.cam_pose(), (), np.zeros((0, 3)))
    fs = eqf.initial_state(gains, start, clock=float(imu_t[0]))

    t_first, t_last = float(imu_t[0]), float(imu_t[-1])
    frames = [f for f in dataset.frames if t_first - 1e-12 <= f[0] <= t_last + 1e-12]
    skipped = len(dataset.frames) - len(frames)

    fixed_depth = config.depth_value()
    median_mode = config.depth_init == "median"
    cos_parallax = math.cos(math.radians(MIN_PARALLAX_DEG))
    candidates = {}
    last_obs = {}
    counts = {"updates": 0, "rejected": 0, "adds": 0, "removes": 0}

    times_out = []
    estimates = []
    innovations = []
    frame_ms = []
    prop_accum = 0.0

    def process_frame(ft, bs):
        nonlocal fs
        reg = fs.registry
        known = tuple(i for i in bs.ids if i in reg)
        if known:
            fs, rep = eqf.update_with_report(fs, bs.subset(known), gains)
            innovations.append(
                InnovationRecord(ft, rep.used_ids, rep.residual.copy(), rep.mahalanobis.copy())
            )
            counts["updates"] += 1
            counts["rejected"] += len(rep.rejected_ids)
            for lid in known:
                last_obs[lid] = ft

        est = _light_estimate(fs)
        C = est.pose @ est.cam
        have = set(fs.registry)
        seed_depth = fixed_depth
        if median_mode:
            depths = eqf.landmark_depths(fs)
            seed_depth = float(np.median(depths)) if depths.size else 1.0
        for idx, lid in enumerate(bs.ids):
            if lid in have:
                continue
            y = bs.vecs[idx]
            ray = C.rot.m @ y
            if seed_depth is not None:
                if len(have) < config.max_landmarks:
                    fs = eqf.add_landmark(fs, lid, y, seed_depth, gains)
                    have.add(lid)
                    last_obs[lid] = ft
                    counts["adds"] += 1
                continue
            cand = candidates.get(lid)
            if cand is None:
                candidates[lid] = _Candidate(np.array(C.t), ray, ft)
                continue
            cand.last_seen = ft
            if float(np.dot(cand.ray, ray)) >= cos_parallax:
                continue  # not enough baseline yet; keep the first ray
            depth = _ray_depth(cand.origin, cand.ray, C.t, ray)
            if not np.isfinite(depth) or depth <= MIN_TRIANGULATED_DEPTH:
                continue
            if len(have) < config.max_landmarks:
                fs = eqf.add_landmark(fs, lid, y, depth, gains)
                have.add(lid)
                last_obs[lid] = ft
                counts["adds"] += 1
                del candidates[lid]

        for lid in list(fs.registry):
            if ft - last_obs.get(lid, ft) > config.track_timeout:
                fs = eqf.remove_landmark(fs, lid)
                last_obs.pop(lid, None)
                counts["removes"] += 1
        for lid in list(candidates):
            if ft - candidates[lid].last_seen > config.track_timeout:
                del candidates[lid]

    fi = 0
    n = imu_t.size
    for k in range(n):
        tk = float(imu_t[k])
        while fi < len(frames) and frames[fi][0] <= tk + 1e-12:
            ft, bs = frames[fi]
            fi += 1
            tic = time.perf_counter()
            process_frame(ft, bs)
            frame_ms.append((prop_accum + time.perf_counter() - tic) * 1000.0)
            prop_accum = 0.0
        times_out.append(tk)
        estimates.append(_light_estimate(fs))
        if k + 1 == n:
            break
        t_next = float(imu_t[k + 1])
        if t_next - tk > config.max_imu_gap:
            raise ParseError(
                f"IMU gap of {t_next - tk:.6g} s at t={tk:.6g} exceeds max_imu_gap"
            )
        u = ImuInput(dataset.gyro[k], dataset.accel[k])
        seg = tk
        while fi < len(frames) and frames[fi][0] < t_next - 1e-12:
            ft, bs = frames[fi]
            fi += 1
            tic = time.perf_counter()
            fs = eqf.propagate(fs, u, ft - seg, gains)
            prop_accum += time.perf_counter() - tic
            seg = ft
            tic = time.perf_counter()
            process_frame(ft, bs)
            frame_ms.append((prop_accum + time.perf_counter() - tic) * 1000.0)
            prop_accum = 0.0
        tic = time.perf_counter()
        fs = eqf.propagate(fs, u, t_next - seg, gains)
        prop_accum += time.perf_counter() - tic

    return RunResult(
        np.array(times_out),
        estimates,
        innovations,
        frame_ms,
        counts["updates"],
        counts["rejected"],
        counts["adds"],
        counts["removes"],
        skipped,
    )
