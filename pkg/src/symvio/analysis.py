"""Experiment-grade diagnostics: linearisation grids, cloud statistics, metrics.

Everything here consumes library objects and produces plain arrays or small
dataclasses, so the CLI layer can serialize results without touching any
filter internals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from . import baselines, so3
from .core import GRAVITY
from .groups import YawTranslation
from .landmarks import (
    euclidean_coords,
    euclidean_point,
    euclidean_point_diff,
    inverse_depth_coords,
    inverse_depth_point,
    inverse_depth_point_diff,
    polar_coords,
    polar_point,
    polar_point_diff,
)
from .errors import GeometryError
from .sim import sample_particles

PARAMETRISATIONS = {
    "euclidean": (euclidean_coords, euclidean_point, euclidean_point_diff),
    "inverse_depth": (inverse_depth_coords, inverse_depth_point, inverse_depth_point_diff),
    "polar": (polar_coords, polar_point, polar_point_diff),
}

DEFAULT_QHAT = np.array([0.0, 0.0, 5.0])
DEFAULT_OMEGA_C = np.array([0.0, 0.2, 0.0])
DEFAULT_V_C = np.array([0.0, 0.0, 0.1])


def landmark_flow(q, omega_c, v_c):
    """Camera-frame landmark velocity under the ego-motion twist."""
    return -np.cross(omega_c, q) - v_c


def _bearing(q):
    return q / np.linalg.norm(q)


def _bearing_diff(q):
    y = _bearing(q)
    return (np.eye(3) - np.outer(y, y)) / np.linalg.norm(q)


def measured_output_matrix(y, yhat, dim):
    """Output matrix built from the measured bearing rather than the estimate.

    Pairs with the polar coordinates: the first three columns act on the
    rotation-vector part and the depth column is zero because bearings carry
    no range information.
    """
    C = np.zeros((3, dim))
    C[:, :3] = 0.5 * so3.skew(y + yhat)
    return C


@dataclass(frozen=True, eq=False)
class LinErrGrid:
    """Flow and output linearisation residual norms over a (z, theta) grid."""

    param: str
    z: np.ndarray
    theta: np.ndarray
    mu_f: np.ndarray  # (nz, ntheta)
    mu_h: np.ndarray
    mu_h_star: np.ndarray | None
    qhat: np.ndarray
    omega_c: np.ndarray
    v_c: np.ndarray

    def max_f(self) -> float:
        return float(np.nanmax(self.mu_f))

    def max_h(self) -> float:
        return float(np.nanmax(self.mu_h))

    def max_h_star(self) -> float:
        return float(np.nanmax(self.mu_h_star))


def linearisation_errors(
    param: str,
    qhat: np.ndarray = DEFAULT_QHAT,
    omega_c: np.ndarray = DEFAULT_OMEGA_C,
    v_c: np.ndarray = DEFAULT_V_C,
    nz: int = 200,
    ntheta: int = 200,
    z_range=(0.1, 10.0),
    theta_range=(-math.pi / 6.0, math.pi / 6.0),
) -> LinErrGrid:
    """Residuals of the linearized flow and output over a cone of test points.

    Test points are q = (z tan(theta), 0, z).  The linear model predicts both
    rates through the chosen parametrisation's chart at qhat; residuals are
    measured in the ambient space so parametrisations are comparable.  Cells
    where the chart is singular come back as NaN.
    """
    if param not in PARAMETRISATIONS:
        raise ValueError(f"unknown parametrisation {param!r}")
    coords, _, point_diff = PARAMETRISATIONS[param]
    qhat = np.asarray(qhat, dtype=float)

    eps_hat = coords(qhat)
    Dinv = point_diff(eps_hat)  # ambient change per coordinate change
    Df = -so3.skew(omega_c)  # flow is linear in the ambient point
    Dh = _bearing_diff(qhat)
    f_hat = landmark_flow(qhat, omega_c, v_c)
    y_hat = _bearing(qhat)
    Cstar_dim = eps_hat.shape[0]

    # Cell centers keep every sample strictly inside the open domain.
    z_vals = z_range[0] + (np.arange(nz) + 0.5) * (z_range[1] - z_range[0]) / nz
    t_vals = theta_range[0] + (np.arange(ntheta) + 0.5) * (
        theta_range[1] - theta_range[0]
    ) / ntheta

    mu_f = np.full((nz, ntheta), np.nan)
    mu_h = np.full((nz, ntheta), np.nan)
    mu_star = np.full((nz, ntheta), np.nan) if param == "polar" else None
    for i, z in enumerate(z_vals):
        for j, th in enumerate(t_vals):
            q = np.array([z * math.tan(th), 0.0, z])
            try:
                eps = coords(q) - eps_hat
            except GeometryError:
                continue
            f_err = landmark_flow(q, omega_c, v_c) - f_hat - Df @ (Dinv @ eps)
            y = _bearing(q)
            h_err = y - y_hat - Dh @ (Dinv @ eps)
            mu_f[i, j] = np.linalg.norm(f_err)
            mu_h[i, j] = np.linalg.norm(h_err)
            if mu_star is not None:
                Cs = measured_output_matrix(y, y_hat, Cstar_dim)
                mu_star[i, j] = np.linalg.norm(y - y_hat - Cs @ eps)
    return LinErrGrid(
        param, z_vals, t_vals, mu_f, mu_h, mu_star, qhat, np.asarray(omega_c), np.asarray(v_c)
    )


def output_residual_slope(
    param: str,
    qhat: np.ndarray = DEFAULT_QHAT,
    use_measured_matrix: bool = False,
    lo: float = 1e-3,
    hi: float = 1e-1,
    n: int = 25,
    direction: np.ndarray = None,
) -> float:
    """Log-log slope of the output residual along a coordinate-space ray.

    Second-order-accurate linearisations give a slope near 2; the
    measured-bearing matrix cancels the quadratic term and decays cubically.
    """
    coords, point, point_diff = PARAMETRISATIONS[param]
    qhat = np.asarray(qhat, dtype=float)
    eps_hat = coords(qhat)
    dim = eps_hat.shape[0]
    if direction is None:
        # Mix the axes; the rotation-about-bearing slot of the polar chart
        # stays zero so the ray remains in the canonical coordinate range.
        direction = (
            np.array([0.55, 0.65, 0.0, 0.45]) if dim == 4 else np.array([0.55, 0.65, 0.45])
        )
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)

    y_hat = _bearing(qhat)
    C_plain = _bearing_diff(qhat) @ point_diff(eps_hat)
    scales = np.geomspace(lo, hi, n)
    resid = np.empty(n)
    for k, s in enumerate(scales):
        q = point(eps_hat + s * d)
        y = _bearing(q)
        if use_measured_matrix:
            C = measured_output_matrix(y, y_hat, dim)
        else:
            C = C_plain
        resid[k] = np.linalg.norm(y - y_hat - C @ (s * d))
    good = resid > 1e-300
    slope, _ = np.polyfit(np.log(scales[good]), np.log(resid[good]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Distribution propagation comparison.

SIGMA0_CLOUD = np.diag([0.2**2] * 3 + [0.01**2] * 3 + [0.01**2] * 3)
OMEGA_CLOUD = np.array([0.0, 0.0, 0.1])
ACCEL_CLOUD = np.array([0.1, 0.0, 0.0])


def mardia_skewness(X: np.ndarray):
    """Mardia's multivariate skewness test statistic and its chi-square dof."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    Y = X - X.mean(axis=0)
    S = (Y.T @ Y) / n
    G = Y @ np.linalg.solve(S, Y.T)
    b1 = float(np.sum(G**3)) / (n * n)
    dof = d * (d + 1) * (d + 2) // 6
    return n * b1 / 6.0, dof


def _cov_sqrt(S):
    vals, vecs = np.linalg.eigh(S)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True, eq=False)
class FilterCloudStats:
    """Per-filter agreement between the truth cloud and the propagated belief."""

    name: str
    frob_ratio: np.ndarray  # (T,)
    mean_disc: np.ndarray
    mardia_stat: np.ndarray
    mardia_dof: int
    mardia_threshold: float
    mardia_pass: np.ndarray  # (T,) bool
    cov_pred: np.ndarray  # (T, d, d)
    cov_emp: np.ndarray


@dataclass(frozen=True, eq=False)
class DistributionReport:
    times: np.ndarray
    filters: dict
    seed: int
    n_particles: int


def distribution_compare(
    n_particles: int = 2000,
    seed: int = 0,
    horizon: float = 15.0,
    step: float = 0.05,
    record_every: float = 5.0,
    sigma0: np.ndarray = None,
    omega: np.ndarray = None,
    accel: np.ndarray = None,
    g: float = GRAVITY,
    mardia_quantile: float = 0.999,
) -> DistributionReport:
    """Push one truth cloud through three error parametrisations and compare.

    For each filter convention the truth particles are expressed in that
    filter's error coordinates and held against the covariance the filter
    itself would have propagated from the same start.
    """
    sigma0 = SIGMA0_CLOUD if sigma0 is None else np.asarray(sigma0, dtype=float)
    omega = OMEGA_CLOUD if omega is None else np.asarray(omega, dtype=float)
    accel = ACCEL_CLOUD if accel is None else np.asarray(accel, dtype=float)

    cloud = sample_particles(
        sigma0, n_particles, omega, accel, horizon, step=step, seed=seed, g=g,
        record_every=record_every,
    )
    times = cloud.times
    preds = {
        "eqf": baselines.eqf_covariance(sigma0, times, g),
        "mekf": baselines.mekf_covariance(sigma0, omega, accel, times, step, g),
        "ekf": baselines.ekf_covariance(sigma0, omega, accel, times, step, g),
    }
    extractors = {
        "eqf": baselines.eqf_coords,
        "mekf": baselines.mekf_coords,
        "ekf": baselines.ekf_coords,
    }
    out = {}
    for name, extract in extractors.items():
        T = len(times)
        frob = np.empty(T)
        mean_disc = np.empty(T)
        stat = np.empty(T)
        cov_pred = preds[name]
        cov_emp = np.empty_like(cov_pred)
        dof = 0
        for k in range(T):
            X = extract(cloud, k)
            mu = X.mean(axis=0)
            Yc = X - mu
            C_emp = (Yc.T @ Yc) / (X.shape[0] - 1)
            cov_emp[k] = C_emp
            mean_disc[k] = float(np.linalg.norm(mu))
            frob[k] = float(
                np.linalg.norm(C_emp - cov_pred[k]) / np.linalg.norm(cov_pred[k])
            )
            stat[k], dof = mardia_skewness(X)
        thresh = float(chi2.ppf(mardia_quantile, dof))
        out[name] = FilterCloudStats(
            name, frob, mean_disc, stat, dof, thresh, stat <= thresh, cov_pred, cov_emp
        )
    return DistributionReport(times, out, seed, n_particles)


def sample_filter_cloud(stats: FilterCloudStats, index: int, n: int, seed: int = 0):
    """Draw the belief cloud a filter would report at one of the record times."""
    rng = np.random.Generator(np.random.Philox(seed))
    A = _cov_sqrt(stats.cov_pred[index])
    return rng.standard_normal((n, A.shape[0])) @ A.T


# ---------------------------------------------------------------------------
# Trajectory alignment and drift metrics.


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    transform: YawTranslation
    errors: np.ndarray  # per-sample position error after alignment
    rmse: float


def align_yaw_translation(est_pos: np.ndarray, truth_pos: np.ndarray) -> AlignmentResult:
    """Closed-form least-squares yaw + translation fit of estimate onto truth.

    Only the four unobservable degrees of freedom are fitted; roll and pitch
    misalignment stays in the residual by construction.
    """
    est = np.asarray(est_pos, dtype=float)
    tru = np.asarray(truth_pos, dtype=float)
    if est.shape != tru.shape or est.ndim != 2 or est.shape[1] != 3:
        raise ValueError("trajectories must be matching (n, 3) arrays")
    if est.shape[0] < 2:
        raise ValueError("need at least 2 samples to align")
    eb = est.mean(axis=0)
    tb = tru.mean(axis=0)
    N = (est - eb).T @ (tru - tb)
    theta = math.atan2(N[0, 1] - N[1, 0], N[0, 0] + N[1, 1])
    R = so3.yaw_matrix(theta)
    t = tb - R @ eb
    aligned = est @ R.T + t
    errors = np.linalg.norm(aligned - tru, axis=1)
    rmse = float(np.sqrt(np.mean(errors**2)))
    return AlignmentResult(YawTranslation(theta, t), errors, rmse)


@dataclass(frozen=True, eq=False)
class DriftMetrics:
    times: np.ndarray
    vel_err: np.ndarray  # body-frame velocity error magnitude
    gravity_err_deg: np.ndarray
    tail_max_vel: float
    tail_max_gravity_deg: float


def drift_metrics(times, estimates, truths) -> DriftMetrics:
    """Errors in the two drift-free observables, with tail maxima.

    Both quantities compare body-frame resolutions, so they are untouched by
    any yaw + translation offset of either trajectory.  The tail is the last
    half of the run.
    """
    times = np.asarray(times, dtype=float)
    n = len(times)
    if not (len(estimates) == len(truths) == n):
        raise ValueError("times, estimates and truths must have equal length")
    vel = np.empty(n)
    grav = np.empty(n)
    for k in range(n):
        e, t = estimates[k], truths[k]
        ve = e.pose.rot.m.T @ e.vel - t.pose.rot.m.T @ t.vel
        vel[k] = np.linalg.norm(ve)
        ge = e.pose.rot.m.T @ so3.E3
        gt = t.pose.rot.m.T @ so3.E3
        grav[k] = math.degrees(
            math.atan2(np.linalg.norm(np.cross(ge, gt)), float(np.dot(ge, gt)))
        )
    tail = slice(n // 2, None)
    return DriftMetrics(
        times, vel, grav, float(vel[tail].max()), float(grav[tail].max())
    )


def trend_slope(times, values, max_points: int = 40):
    """OLS slope and its standard error on an evenly decimated series.

    Decimation keeps the points far enough apart that the usual independence
    assumption behind the standard error is not wildly wrong for smooth
    filter error traces.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size > max_points:
        idx = np.linspace(0, t.size - 1, max_points).round().astype(int)
        t, y = t[idx], y[idx]
    tc = t - t.mean()
    denom = float(np.dot(tc, tc))
    slope = float(np.dot(tc, y) / denom)
    resid = y - y.mean() - slope * tc
    dof = max(t.size - 2, 1)
    stderr = float(np.sqrt(np.dot(resid, resid) / dof / denom))
    return slope, stderr


def trajectory_metrics(times, estimates, truths) -> dict:
    """Scalar summary used by the evaluation command: RMSE, drift, trends."""
    est_pos = np.array([s.pose.t for s in estimates])
    tru_pos = np.array([s.pose.t for s in truths])
    align = align_yaw_translation(est_pos, tru_pos)
    drift = drift_metrics(times, estimates, truths)
    n = len(times)
    tail = slice(n // 2, None)
    vslope, vse = trend_slope(drift.times[tail], drift.vel_err[tail])
    gslope, gse = trend_slope(drift.times[tail], drift.gravity_err_deg[tail])
    return {
        "rmse": align.rmse,
        "align_yaw": align.transform.theta,
        "align_tx": float(align.transform.t[0]),
        "align_ty": float(align.transform.t[1]),
        "align_tz": float(align.transform.t[2]),
        "tail_max_vel_err": drift.tail_max_vel,
        "tail_max_gravity_err_deg": drift.tail_max_gravity_deg,
        "tail_vel_trend": vslope,
        "tail_vel_trend_stderr": vse,
        "tail_gravity_trend": gslope,
        "tail_gravity_trend_stderr": gse,
    }
