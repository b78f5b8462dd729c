"""Command-line front end.

Exit codes: 0 success, 2 invalid arguments or scenario, 3 pose-log parse
failure, 4 insufficient motion for a full calibration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from pathlib import Path

from .experiments import STAT_FIELDS, compare, monte_carlo, summarize
from .poselog import PoseLogError, read_pose_log, session_inputs, write_pose_log
from .scenario import ScenarioError, load_scenario
from .session import RobotKinematics, transitions_from_samples
from .simulator import pose_records, run_script, shake_experiment
from .solver import (
    CalibrationSession,
    InsufficientMotion,
    NoConvergence,
    SolveConfig,
    calibrate,
    refine_nonlinear,
    result_to_dict,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INSUFFICIENT = 4

log = logging.getLogger("robocal")

TRIAL_COLUMNS = ["trial", "seed", "pos_error_m", "x_axis_angle_error_rad", "y_axis_angle_error_rad",
                 "z_axis_angle_error_rad", "rotation_error_rad"]
SHAKE_COLUMNS = ["time_s", "uncorrected_error_m", "corrected_error_m", "correction_angle_rad"]


def _f(v: float) -> str:
    return f"{v:.9g}"


def _seed(args, scenario) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ROBOCAL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ScenarioError(f"ROBOCAL_SEED must be an integer, got {env!r}") from None
    return scenario.sim.rng_seed


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_result(path: Path, result) -> None:
    path.write_text(json.dumps(result_to_dict(result), indent=2) + "\n", encoding="utf-8")


def _print_result(result) -> None:
    d = result_to_dict(result)
    t = d["translation_m"]
    aa = d["rotation_axis_angle"]
    print(f"translation_m: {_f(t[0])} {_f(t[1])} {_f(t[2])}")
    print(f"rotation: angle_rad={_f(aa['angle_rad'])} axis={' '.join(_f(a) for a in aa['axis'])}")
    print(f"rotation_residual_rad: {_f(result.rotation_residual)}")
    print(f"translation_residual_m: {_f(result.translation_residual)}")
    mask = " ".join(f"{k}={'yes' if v else 'no'}" for k, v in d["observability"].items())
    print(f"observability: {mask}")


def _solve(session, args):
    cfg = SolveConfig(allow_partial=getattr(args, "allow_partial", False))
    result = calibrate(session, cfg)
    if args.refine:
        result = refine_nonlinear(session, result, SolveConfig(allow_partial=True))
    return result


def cmd_calibrate_sim(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = scenario.with_seed(_seed(args, scenario))
    run = run_script(scenario.script, scenario.sim)
    session = run.session(use_floor=scenario.use_floor)
    result = _solve(session, args)
    out = _out_dir(args)
    write_pose_log(out / "poselog.csv", pose_records(run))
    _write_result(out / "result.json", result)
    _print_result(result)
    pos, ex, ey, ez, rot = compare(result.x, scenario.sim.x_true)
    print(f"pos_error_m: {_f(pos)}  x_axis_angle_error_rad: {_f(ex)}  y_axis_angle_error_rad: {_f(ey)}")
    return EXIT_OK


def cmd_calibrate_file(args) -> int:
    try:
        records = read_pose_log(args.log)
    except (PoseLogError, OSError) as exc:
        print(f"error: cannot parse pose log {args.log}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    default_kin = RobotKinematics.upright(args.head_height) if args.head_height else None
    samples, floor, kin = session_inputs(records, default_kin)
    if floor and kin is None:
        print("error: floor observations need --head-height or head_to_foot columns", file=sys.stderr)
        return EXIT_USAGE
    if len(samples) < 2:
        print("error: pose log needs at least two records to form a transition", file=sys.stderr)
        return EXIT_PARSE
    session = CalibrationSession(transitions_from_samples(samples), floor, kin)
    try:
        result = _solve(session, args)
    except InsufficientMotion as exc:
        print(f"error: insufficient motion: {exc}", file=sys.stderr)
        if exc.partial is not None:
            mask = exc.partial.observability.to_dict()
            print("observability: " + " ".join(f"{k}={'yes' if v else 'no'}" for k, v in mask.items()),
                  file=sys.stderr)
        return EXIT_INSUFFICIENT
    out = _out_dir(args)
    _write_result(out / "result.json", result)
    _print_result(result)
    if result.unconstrained:
        print(f"warning: partial calibration, unconstrained: {' '.join(result.unconstrained)}")
    return EXIT_OK


def _write_trials(path: Path, results) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in results:
            w.writerow([r.trial, r.seed] + [_f(getattr(r, f)) for f in STAT_FIELDS])


def _write_summary(path: Path, method: str, n: int, summary) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "statistic", "trials"] + TRIAL_COLUMNS[2:])
        for stat in ("mean", "median"):
            w.writerow([method, stat, n] + [_f(summary[stat][f]) for f in STAT_FIELDS])


def _print_summary(method: str, summary) -> None:
    print(f"{'method':<12}{'stat':<8}{'pos_error_m':>14}{'x_axis_rad':>14}{'y_axis_rad':>14}")
    for stat in ("mean", "median"):
        s = summary[stat]
        print(f"{method:<12}{stat:<8}{s['pos_error']:>14.6f}{s['x_axis_error']:>14.6f}{s['y_axis_error']:>14.6f}")


def cmd_monte_carlo(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = _seed(args, scenario)
    results = monte_carlo(scenario, args.trials, seed, workers=args.workers, refine=args.refine)
    summary = summarize(results)
    out = _out_dir(args)
    _write_trials(out / "trials.csv", results)
    _write_summary(out / "summary.csv", scenario.method, len(results), summary)
    _print_summary(scenario.method, summary)
    return EXIT_OK


def cmd_shake(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = scenario.with_seed(_seed(args, scenario))
    latency = scenario.latency if args.latency is None else args.latency
    if latency < 0:
        raise ScenarioError("latency must be non-negative")
    records = shake_experiment(scenario.sim, scenario.shake, latency, correct=not args.no_correction)
    out = _out_dir(args)
    with (out / "shake.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SHAKE_COLUMNS)
        for r in records:
            w.writerow([_f(r.time), _f(r.uncorrected_error), _f(r.corrected_error), _f(r.correction_angle)])
    print(f"max uncorrected_error_m: {_f(max(r.uncorrected_error for r in records))}")
    print(f"max corrected_error_m: {_f(max(r.corrected_error for r in records))}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.trials) if args.trials else Path(args.out) / "trials.csv"
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        cols = {f: [float(r[c]) for r in rows] for f, c in zip(STAT_FIELDS, TRIAL_COLUMNS[2:])}
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: cannot read trials file {path}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if not rows:
        print(f"error: trials file {path} is empty", file=sys.stderr)
        return EXIT_PARSE
    summary = {
        "mean": {f: statistics.fmean(v) for f, v in cols.items()},
        "median": {f: statistics.median(v) for f, v in cols.items()},
    }
    _print_summary(args.method, summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robocal", description="Robot / SLAM-device extrinsic calibration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="mode", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", default=None,
                           help="scenario file, or a built-in method name (two-way, horizontal)")
            p.add_argument("--seed", type=int, default=None, help="base seed (fallback: $ROBOCAL_SEED)")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("calibrate-sim", help="simulate one calibration session and solve it")
    common(p)
    p.add_argument("--refine", action="store_true", help="polish with nonlinear refinement")
    p.set_defaults(func=cmd_calibrate_sim)

    p = sub.add_parser("calibrate-file", help="calibrate from a recorded pose log")
    p.add_argument("log", help="pose log (.csv or .jsonl)")
    common(p, scenario=False)
    p.add_argument("--allow-partial", action="store_true", help="write a result even if motion is insufficient")
    p.add_argument("--refine", action="store_true")
    p.add_argument("--head-height", type=float, default=None,
                   help="head height above the foot (m) when the log has no head_to_foot columns")
    p.set_defaults(func=cmd_calibrate_file)

    p = sub.add_parser("monte-carlo", help="repeat simulated calibrations and report error statistics")
    common(p)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--refine", action="store_true")
    p.set_defaults(func=cmd_monte_carlo)

    p = sub.add_parser("shake", help="head-shake experiment for the online correction")
    common(p)
    p.add_argument("--latency", type=float, default=None, help="encoder latency override (s)")
    p.add_argument("--no-correction", action="store_true")
    p.set_defaults(func=cmd_shake)

    p = sub.add_parser("report", help="summarize a monte-carlo trials.csv")
    common(p, scenario=False)
    p.add_argument("--trials", default=None, help="trials.csv path (default: OUT/trials.csv)")
    p.add_argument("--method", default="", help="label for the summary rows")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if getattr(args, "trials", None) is not None and isinstance(args.trials, int) and args.trials < 1:
        parser.error("--trials must be at least 1")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientMotion as exc:
        print(f"error: insufficient motion: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
