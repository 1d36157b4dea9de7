"""Command-line shell: simulate, filter, evaluate, linerr, distcompare.

Exit codes: 0 success, 2 parse/stream error, 3 filter divergence, 4 bad
configuration.  Verbosity comes from the SYMVIO_LOG environment variable
(debug | info | warning | error).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import analysis, pipeline, sim
from . import io as fio
from .core import VisState
from .errors import ConfigError, DivergenceError, ParseError
from .groups import SE3, Rot3

log = logging.getLogger("symvio")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DIVERGED = 3
EXIT_CONFIG = 4


def _setup_logging():
    level_name = os.environ.get("SYMVIO_LOG", "warning").lower()
    levels = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "error": logging.ERROR,
    }
    logging.basicConfig(level=levels.get(level_name, logging.WARNING))


def _resolve(output: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(output, path)


def _load_config(args) -> fio.RunConfig:
    config = fio.read_config(args.config) if args.config else fio.RunConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def cmd_simulate(config: fio.RunConfig, output: str) -> int:
    spec = config.trajectory_spec()
    noise = config.noise_spec()
    samples = sim.generate_world(
        spec,
        config.n_landmarks,
        noise,
        cam=config.cam_pose(),
        fov_half_angle_deg=config.fov_half_angle_deg,
        g=config.gravity,
    )
    t = np.array([s.t for s in samples])
    gyro = np.array([s.imu.gyro for s in samples])
    accel = np.array([s.imu.accel for s in samples])
    fio.write_imu_csv(_resolve(output, config.imu_file), t, gyro, accel)
    frames = [(s.t, s.bearings) for s in samples if s.bearings is not None]
    fio.write_features_csv(_resolve(output, config.features_file), frames)
    fio.write_truth_csv(_resolve(output, config.truth_file), t, [s.truth for s in samples])
    print(
        f"simulate: {len(samples)} IMU rows, {len(frames)} frames, "
        f"{config.n_landmarks} landmarks, seed {noise.seed}"
    )
    return EXIT_OK


def cmd_filter(config: fio.RunConfig, output: str) -> int:
    truth_path = _resolve(output, config.truth_file)
    dataset = fio.load_dataset(
        _resolve(output, config.imu_file),
        _resolve(output, config.features_file),
        truth_path if os.path.exists(truth_path) else None,
    )
    result = pipeline.run_filter(dataset, config)
    fio.write_estimate_csv(_resolve(output, config.estimate_file), result.times, result.estimates)
    timing = result.timing()
    timing.update(
        n_updates=result.n_updates,
        n_rejected=result.n_rejected,
        n_adds=result.n_adds,
        n_removes=result.n_removes,
        skipped_frames=result.skipped_frames,
    )
    fio.write_key_values(_resolve(output, config.timing_file), timing)
    print(
        f"filter: {result.times.size} rows, {timing['frames']} frames, "
        f"mean {timing['mean_ms']:.3f} ms/frame, max {timing['max_ms']:.3f} ms"
    )
    return EXIT_OK


def cmd_evaluate(config: fio.RunConfig, output: str) -> int:
    et, est_states = fio.read_estimate_csv(_resolve(output, config.estimate_file))
    tt, tp, tr, tv = fio.read_truth_csv(_resolve(output, config.truth_file))
    n = min(et.size, tt.size)
    if n < 2:
        raise ParseError("need at least 2 matched samples to evaluate")
    if not np.allclose(et[:n], tt[:n], atol=1e-9, rtol=0.0):
        raise ParseError("estimate and truth timestamps do not match")
    truth_states = [
        VisState(
            SE3(Rot3(tr[k]), tp[k]), tv[k], np.zeros(6), SE3.identity(), (), np.zeros((0, 3))
        )
        for k in range(n)
    ]
    metrics = analysis.trajectory_metrics(et[:n], est_states[:n], truth_states)
    fio.write_key_values(_resolve(output, config.metrics_file), metrics)
    for k, v in metrics.items():
        print(f"{k} = {fio.fmt_float(v)}")
    return EXIT_OK


def cmd_linerr(config: fio.RunConfig, output: str) -> int:
    for param in ("euclidean", "inverse_depth", "polar"):
        grid = analysis.linearisation_errors(param)
        fio.write_grid_csv(
            _resolve(output, f"linerr_{param}_f.csv"), grid.z, grid.theta, grid.mu_f
        )
        fio.write_grid_csv(
            _resolve(output, f"linerr_{param}_h.csv"), grid.z, grid.theta, grid.mu_h
        )
        line = f"linerr {param}: max_f {grid.max_f():.6g} max_h {grid.max_h():.6g}"
        if grid.mu_h_star is not None:
            fio.write_grid_csv(
                _resolve(output, f"linerr_{param}_star_h.csv"),
                grid.z,
                grid.theta,
                grid.mu_h_star,
            )
            line += f" max_h_star {grid.max_h_star():.6g}"
        print(line)
    return EXIT_OK


def cmd_distcompare(config: fio.RunConfig, output: str) -> int:
    report = analysis.distribution_compare(seed=config.seed)
    path = _resolve(output, "distcompare.csv")
    with open(path, "w") as fh:
        fh.write("t,filter,frob_ratio,mean_disc,mardia_stat,mardia_threshold,mardia_pass\n")
        for name, st in report.filters.items():
            for k, t in enumerate(report.times):
                fh.write(
                    ",".join(
                        [
                            fio.fmt_float(t),
                            name,
                            fio.fmt_float(st.frob_ratio[k]),
                            fio.fmt_float(st.mean_disc[k]),
                            fio.fmt_float(st.mardia_stat[k]),
                            fio.fmt_float(st.mardia_threshold),
                            "true" if st.mardia_pass[k] else "false",
                        ]
                    )
                    + "\n"
                )
    for name, st in report.filters.items():
        last = len(report.times) - 1
        print(
            f"distcompare {name}: frob {st.frob_ratio[last]:.4f} "
            f"mardia {st.mardia_stat[last]:.1f}/{st.mardia_threshold:.1f} "
            f"{'pass' if st.mardia_pass[last] else 'fail'}"
        )
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "evaluate": cmd_evaluate,
    "linerr": cmd_linerr,
    "distcompare": cmd_distcompare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symvio", description="Equivariant visual-inertial odometry toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument("--output", default=".", help="directory for outputs and inputs")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        os.makedirs(args.output, exist_ok=True)
        return _COMMANDS[args.command](config, args.output)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DivergenceError as exc:
        print(f"filter diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
