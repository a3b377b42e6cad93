"""Command-line front end: simulate, run, verify, eval.

Exit codes are contractual so CI can triage: 0 ok, 1 configuration error,
2 I/O error, 3 filter failure, 4 verification failure.  Every command that
writes an output directory drops a ``manifest.json`` recording the exact
configuration, seeds, paths, and wall-clock stats of the run; identical
config and seed reproduce data files byte for byte (manifests carry timing
and are exempt).
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, evalkit
from .config import Scenario
from .errors import ConfigError, FilterError, ParseError, WioError
from .evalkit import Trajectory
from .filter import run_filter
from .models import ImuState
from .spline import write_control_points
from .synth import make_trajectory, synthesize_measurements
from .verify import SUITES

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_FILTER = 3
EXIT_VERIFY = 4


def _version_string():
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if described.returncode == 0:
            return f"wio-{__version__}+{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"wio-{__version__}"


def _write_manifest(out_dir, scenario, inputs, outputs, wall, extra=None):
    manifest = {
        "version": _version_string(),
        "config": scenario.values,
        "seed": scenario.seed,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "wall_seconds": wall,
    }
    if extra:
        manifest.update(extra)
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_simulate(args):
    started = time.perf_counter()
    scenario = Scenario.from_file(args.config)
    scenario.filter_config()  # validates d_s < d_m and friends up front
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ground = scenario.ground()
    truth = make_trajectory(
        ground,
        scenario.waypoints(),
        speed=float(scenario.values["speed"]),
        rate=scenario.rate,
        lever_arm=np.array([float(x) for x in scenario.values["lever_arm"].split()]),
    )
    samples, truth = synthesize_measurements(
        truth, scenario.noise_model(), scenario.wheels(), seed=scenario.seed,
        lever_arm=np.array([float(x) for x in scenario.values["lever_arm"].split()]),
    )
    paths = {
        "log": out / "log.csv",
        "truth": out / "truth.csv",
        "ground": out / "ground.tsv",
    }
    evalkit.write_log(paths["log"], samples)
    evalkit.write_truth(paths["truth"], truth)
    write_control_points(ground, paths["ground"])
    _write_manifest(
        out, scenario, {"config": args.config}, paths, time.perf_counter() - started
    )
    print(f"simulated {len(samples)} samples -> {out}")
    return EXIT_OK


def cmd_run(args):
    started = time.perf_counter()
    scenario = Scenario.from_file(args.config)
    cfg = scenario.filter_config(
        manifold=False if args.no_manifold else None,
        spline_degree=args.spline_degree,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    samples = list(evalkit.read_log(args.log))
    truth_path = Path(args.truth) if args.truth else Path(args.log).parent / "truth.csv"
    if not truth_path.exists():
        print(f"error: truth side channel not found: {truth_path}", file=sys.stderr)
        return EXIT_IO
    truth = evalkit.read_truth(truth_path)
    corrector = scenario.make_corrector(truth, kind=args.corrector)
    init_state = ImuState(
        p=truth.p[0].copy(),
        v=truth.v_imu[0].copy(),
        yaw=float(truth.yaw[0]),
        tilt=truth.tilt[0].copy(),
    )
    result = run_filter(samples, corrector, cfg, init_state)

    est = Trajectory(result.t, result.p, result.yaw, result.tilt)
    paths = {
        "trajectory": out / "trajectory.csv",
        "trajectory_quat": out / "trajectory_quat.csv",
        "spline": out / "spline.tsv",
    }
    evalkit.write_trajectory(paths["trajectory"], est)
    evalkit.write_trajectory_quat(paths["trajectory_quat"], est)
    write_control_points(result.spline, paths["spline"])

    ate_m = evalkit.ate(est, Trajectory.from_truth(truth))
    are_deg = evalkit.are(est, Trajectory.from_truth(truth))
    print(f"ate_m={ate_m:.6g} are_deg={are_deg:.6g}")
    print(f"realtime_factor={result.realtime_factor:.2f}")
    print(
        json.dumps(
            {
                "ate_m": ate_m,
                "are_deg": are_deg,
                "realtime_factor": result.realtime_factor,
                "samples": len(samples),
                "manifold_updates": result.counters.manifold_updates,
                "slides": result.counters.slides,
                "skipped_rows": result.counters.skipped_rows,
            }
        )
    )
    _write_manifest(
        out,
        scenario,
        {"config": args.config, "log": args.log, "truth": truth_path},
        paths,
        time.perf_counter() - started,
        extra={"ate_m": ate_m, "are_deg": are_deg, "realtime_factor": result.realtime_factor},
    )
    return EXIT_OK


def cmd_verify(args):
    results = SUITES[args.suite](seed=args.seed, **({"cases": args.cases} if args.suite != "covariance" else {}))
    failed = [r for r in results if not r.passed]
    for r in results:
        print(r)
    if failed:
        print(f"FAILED: {failed[0].name}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_eval(args):
    est = evalkit.read_trajectory(args.est)
    truth = evalkit.read_truth(args.truth)
    ate_m = evalkit.ate(est, Trajectory.from_truth(truth))
    are_deg = evalkit.are(est, Trajectory.from_truth(truth))
    print(f"ate_m={ate_m:.6g} are_deg={are_deg:.6g}")
    print(json.dumps({"ate_m": ate_m, "are_deg": are_deg}))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wio",
        description="wheel-inertial odometry with B-spline ground constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic world and log")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="run the filter over a measurement log")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--log", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--truth", default=None, help="truth side channel (default: next to log)")
    p_run.add_argument(
        "--corrector", default=None, choices=["passthrough", "oracle", "constant_fit"]
    )
    p_run.add_argument("--no-manifold", action="store_true")
    p_run.add_argument("--spline-degree", type=int, default=None, choices=[1, 2, 3])
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run the numerical oracle suites")
    p_ver.add_argument("--suite", required=True, choices=sorted(SUITES))
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--cases", type=int, default=100)
    p_ver.set_defaults(func=cmd_verify)

    p_eval = sub.add_parser("eval", help="compare a trajectory against truth")
    p_eval.add_argument("--est", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FilterError, WioError) as exc:
        print(f"filter error: {exc}", file=sys.stderr)
        return EXIT_FILTER


if __name__ == "__main__":
    sys.exit(main())
