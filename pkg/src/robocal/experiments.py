"""Monte-Carlo calibration trials: simulate, calibrate, compare with the truth."""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, rotation_distance
from .scenario import Scenario
from .simulator import run_script
from .solver import SolveConfig, calibrate, refine_nonlinear


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    pos_error: float
    x_axis_error: float
    y_axis_error: float
    z_axis_error: float
    rotation_error: float


def axis_angle_errors(estimate: Pose, truth: Pose) -> tuple[float, float, float]:
    """Angle between each estimated frame axis and the true one."""
    out = []
    for i in range(3):
        c = float(np.dot(estimate.rotation.matrix[:, i], truth.rotation.matrix[:, i]))
        out.append(math.acos(max(-1.0, min(1.0, c))))
    return tuple(out)


def compare(estimate: Pose, truth: Pose) -> tuple[float, float, float, float, float]:
    ex, ey, ez = axis_angle_errors(estimate, truth)
    pos = float(np.linalg.norm(estimate.translation - truth.translation))
    return pos, ex, ey, ez, rotation_distance(estimate.rotation, truth.rotation)


def run_trial(scenario: Scenario, trial: int, base_seed: int, refine: bool = False) -> TrialResult:
    seed = base_seed + trial
    sc = scenario.with_seed(seed)
    run = run_script(sc.script, sc.sim)
    session = run.session(use_floor=sc.use_floor)
    result = calibrate(session)
    if refine:
        result = refine_nonlinear(session, result, SolveConfig(allow_partial=True))
    return TrialResult(trial, seed, *compare(result.x, sc.sim.x_true))


def _star(args):
    return run_trial(*args)


def monte_carlo(
    scenario: Scenario, trials: int, base_seed: int, workers: int = 1, refine: bool = False
) -> list[TrialResult]:
    """Independent trials with seeds ``base_seed + i``, sorted by trial index."""
    if trials < 1:
        raise ValueError("trial count must be at least 1")
    jobs = [(scenario, i, base_seed, refine) for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_star, jobs))
    else:
        results = [_star(j) for j in jobs]
    return sorted(results, key=lambda r: r.trial)


STAT_FIELDS = ("pos_error", "x_axis_error", "y_axis_error", "z_axis_error", "rotation_error")


def summarize(results: list[TrialResult]) -> dict[str, dict[str, float]]:
    """Mean and median of each error column."""
    out = {}
    for stat, fn in (("mean", statistics.fmean), ("median", statistics.median)):
        out[stat] = {f: float(fn([getattr(r, f) for r in results])) for f in STAT_FIELDS}
    return out
