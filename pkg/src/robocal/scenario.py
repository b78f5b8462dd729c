"""Scenario files for simulated experiments.

A scenario is YAML (or JSON, which YAML also reads). Every key is optional;
missing keys fall back to the defaults below, which mirror the noise table
and motion scripts used for the simulated calibration study::

    method: two-way            # two-way | horizontal
    seed: 0
    noise:
      joint_angle: 0.001       # rad
      device_position: 0.002   # m
      device_orientation: 0.004  # rad
      floor_point: 0.02        # m
      gamma1: 0.04
      gamma2: 0.04
      slip_mean: 0.985
      slip_dev: 0.01
    robot:
      head_height: 1.1         # m
      dt: 0.01                 # s (100 Hz)
      settle_samples: 1        # samples averaged per settled keyframe
    x_true:
      translation: [0.12, 0.12, 0.12]
      rotation: [1.0, 0.0, 0.0, 0.0]   # quaternion w, x, y, z
    script:                    # omitted: the method's default script
      - {head_move: {pitch: 0.0, yaw: 0.3}}
      - {hold: 0.5}
      - {rotate: {rate: 0.3, duration: 2.0}}
      - {forward: {speed: 0.3, duration: 2.0}}
    shake:
      amplitude: 0.4           # rad
      frequency: 1.0           # Hz
      duration: 3.0            # s
      latency: 0.15            # s, encoder transport delay
    noiseless: false           # true switches every noise source off
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .geometry import Pose, Rotation
from .simulator import Command, Forward, HeadMove, Hold, RotateInPlace, ShakeHead, SimConfig

METHODS = ("two-way", "horizontal")

_NOISE_KEYS = {
    "joint_angle": "joint_angle_noise",
    "device_position": "device_position_noise",
    "device_orientation": "device_orientation_noise",
    "floor_point": "floor_point_noise",
    "gamma1": "gamma1",
    "gamma2": "gamma2",
    "slip_mean": "slip_mean",
    "slip_dev": "slip_dev",
}
_ROBOT_KEYS = {
    "head_height": "head_height",
    "dt": "dt",
    "settle_samples": "settle_samples",
    "head_move_duration": "head_move_duration",
    "floor_patch_points": "floor_patch_points",
    "linear_accel_limit": "linear_accel_limit",
    "angular_accel_limit": "angular_accel_limit",
}


class ScenarioError(ValueError):
    pass


def two_way_script(angle: float = 0.3) -> list[Command]:
    return [
        HeadMove(0.0, angle), Hold(),
        HeadMove(0.0, -angle), Hold(),
        HeadMove(angle, 0.0), Hold(),
        HeadMove(-angle, 0.0),
    ]


def horizontal_script(rate: float = 0.3, speed: float = 0.3, duration: float = 2.0) -> list[Command]:
    return [
        RotateInPlace(rate, duration), Hold(),
        RotateInPlace(-rate, duration), Hold(),
        Forward(speed, duration), Hold(),
        Forward(speed, duration),
    ]


@dataclass(frozen=True)
class Scenario:
    method: str = "two-way"
    sim: SimConfig = field(default_factory=SimConfig)
    script: tuple = ()
    shake: ShakeHead = field(default_factory=ShakeHead)
    latency: float = 0.15

    def __post_init__(self):
        if self.method not in METHODS:
            raise ScenarioError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.script:
            default = two_way_script() if self.method == "two-way" else horizontal_script()
            object.__setattr__(self, "script", tuple(default))

    @property
    def use_floor(self) -> bool:
        return self.method == "horizontal"

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, sim=replace(self.sim, rng_seed=int(seed)))


def _command(entry: Any) -> Command:
    if not isinstance(entry, dict) or len(entry) != 1:
        raise ScenarioError(f"script entries must be single-key mappings, got {entry!r}")
    (kind, args), = entry.items()
    try:
        if kind == "hold":
            return Hold(float(args)) if not isinstance(args, dict) else Hold(float(args.get("duration", 0.5)))
        if kind == "rotate":
            return RotateInPlace(float(args["rate"]), float(args["duration"]))
        if kind == "forward":
            return Forward(float(args["speed"]), float(args["duration"]))
        if kind == "head_move":
            dur = args.get("duration")
            return HeadMove(float(args.get("pitch", 0.0)), float(args.get("yaw", 0.0)),
                            None if dur is None else float(dur))
        if kind == "shake":
            return ShakeHead(float(args["amplitude"]), float(args["frequency"]), float(args["duration"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad {kind!r} command: {exc}") from exc
    raise ScenarioError(f"unknown script command {kind!r}")


def scenario_from_dict(data: dict[str, Any] | None) -> Scenario:
    data = dict(data or {})
    unknown = set(data) - {"method", "seed", "noise", "robot", "x_true", "script", "shake", "noiseless"}
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    kw: dict[str, Any] = {}
    for block, keys in (("noise", _NOISE_KEYS), ("robot", _ROBOT_KEYS)):
        section = data.get(block) or {}
        if not isinstance(section, dict):
            raise ScenarioError(f"{block!r} must be a mapping")
        for k, v in section.items():
            if k not in keys:
                raise ScenarioError(f"unknown {block} key {k!r}")
            kw[keys[k]] = int(v) if keys[k] in ("settle_samples", "floor_patch_points") else float(v)
    if "seed" in data:
        kw["rng_seed"] = int(data["seed"])
    if "x_true" in data:
        xt = data["x_true"] or {}
        try:
            kw["x_true"] = Pose(
                Rotation.from_quaternion(xt.get("rotation", [1.0, 0.0, 0.0, 0.0])),
                np.asarray(xt.get("translation", [0.12, 0.12, 0.12]), dtype=float),
            )
        except ValueError as exc:
            raise ScenarioError(f"bad x_true: {exc}") from exc
    try:
        sim = SimConfig(**kw)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    if data.get("noiseless"):
        sim = sim.noiseless()
    script = tuple(_command(e) for e in data.get("script") or ())
    sh = data.get("shake") or {}
    try:
        shake = ShakeHead(
            float(sh.get("amplitude", 0.4)), float(sh.get("frequency", 1.0)), float(sh.get("duration", 3.0))
        )
        latency = float(sh.get("latency", 0.15))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad shake block: {exc}") from exc
    if latency < 0:
        raise ScenarioError("shake latency must be non-negative")
    return Scenario(str(data.get("method", "two-way")), sim, script, shake, latency)


def load_scenario(path: str | Path | None) -> Scenario:
    """Load a scenario file; ``None`` or a method name gives the built-in default."""
    if path is None:
        return Scenario()
    if str(path) in METHODS:
        return Scenario(method=str(path))
    p = Path(path)
    if not p.is_file():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse {p}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ScenarioError("scenario file must contain a mapping")
    return scenario_from_dict(data)
