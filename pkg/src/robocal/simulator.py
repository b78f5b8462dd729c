"""Seedable simulation of a wheeled robot with a two-joint head and a SLAM device.

The base integrates planar odometry with the velocity and slip noise model::

    dv(t+dt)  = dv(t) + a_v dt + G(0, g1 |dv(t)|) + G(0, g2 |dv(t)|)
    dv'(t+dt) = dv(t+dt) * G(a, b) * dt

``dv`` is what the robot measures, so its believed pose integrates
``dv * dt`` while the true pose integrates the slipped displacement ``dv'``.
The head is a yaw joint followed by a pitch joint, ``head_height`` above the
foot (the base origin on the floor). The device is rigidly mounted on the
head at the true extrinsic ``x_true`` and reports its pose in the world frame
with Gaussian noise; the robot reports its head pose from odometry and noisy
joint readings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .geometry import Pose, Rotation, any_perpendicular, mean_pose
from .online import (
    CorrectionState,
    OnlineConfig,
    corrected_foot,
    correction_step,
    estimate_floor_normal,
    localize_footprint,
)
from .session import FloorObservation, PosePairSample, RobotKinematics, transitions_from_samples
from .solver import CalibrationSession


def default_x_true() -> Pose:
    return Pose(Rotation.identity(), np.array([0.12, 0.12, 0.12]))


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    joint_angle_noise: float = 0.001
    device_position_noise: float = 0.002
    device_orientation_noise: float = 0.004
    floor_point_noise: float = 0.02
    gamma1: float = 0.04
    gamma2: float = 0.04
    slip_mean: float = 0.985
    slip_dev: float = 0.01
    head_height: float = 1.1
    x_true: Pose = field(default_factory=default_x_true)
    rng_seed: int = 0
    linear_accel_limit: float = 1.0
    angular_accel_limit: float = 1.0
    head_move_duration: float = 1.0
    settle_samples: int = 1
    decimation: int = 10
    floor_patch_points: int = 200
    floor_patch_radius: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for name in ("joint_angle_noise", "device_position_noise", "device_orientation_noise",
                     "floor_point_noise", "gamma1", "gamma2", "slip_dev"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.slip_mean > 0:
            raise ValueError("slip_mean must be positive")
        if self.settle_samples < 1:
            raise ValueError("settle_samples must be at least 1")

    def noiseless(self) -> "SimConfig":
        return replace(
            self,
            joint_angle_noise=0.0,
            device_position_noise=0.0,
            device_orientation_noise=0.0,
            floor_point_noise=0.0,
            gamma1=0.0,
            gamma2=0.0,
            slip_mean=1.0,
            slip_dev=0.0,
        )

    @property
    def kinematics(self) -> RobotKinematics:
        return RobotKinematics.upright(self.head_height)


@dataclass(frozen=True)
class SimState:
    """True base pose (x, y, heading), believed odometry pose, head joints, velocity."""

    base: np.ndarray = field(default_factory=lambda: np.zeros(3))
    odom: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joints: np.ndarray = field(default_factory=lambda: np.zeros(2))  # pitch, yaw
    dv: np.ndarray = field(default_factory=lambda: np.zeros(3))  # dx, dy, dtheta
    time: float = 0.0


# motion script commands


@dataclass(frozen=True)
class RotateInPlace:
    rate: float
    duration: float


@dataclass(frozen=True)
class Forward:
    speed: float
    duration: float


@dataclass(frozen=True)
class HeadMove:
    pitch_delta: float
    yaw_delta: float
    duration: float | None = None


@dataclass(frozen=True)
class ShakeHead:
    amplitude: float = 0.4
    frequency: float = 1.0
    duration: float = 3.0


@dataclass(frozen=True)
class Hold:
    duration: float = 0.5


Command = Union[RotateInPlace, Forward, HeadMove, ShakeHead, Hold]


@dataclass(frozen=True)
class Observation:
    sample: PosePairSample
    joints: np.ndarray
    floor: FloorObservation | None = None
    floor_points: np.ndarray | None = None


@dataclass(frozen=True)
class TruthSample:
    time: float
    base: Pose
    head: Pose
    device: Pose
    joints: np.ndarray


@dataclass
class SimRun:
    observations: list[Observation]
    keyframes: list[Observation]
    truth: list[TruthSample]  # aligned with observations
    keyframe_truth: list[TruthSample]
    config: SimConfig

    def session(self, use_floor: bool = True) -> CalibrationSession:
        """Calibration session from consecutive keyframes.

        Floor observations come from every keyframe when ``use_floor``; the
        head-to-foot vector is taken from the first keyframe's reported joints.
        """
        samples = [k.sample for k in self.keyframes]
        floor = [k.floor for k in self.keyframes if k.floor is not None] if use_floor else []
        kin = None
        if floor:
            chain = neck_pose(self.keyframes[0].joints, self.config.head_height).inverse()
            kin = RobotKinematics(chain.translation, self.config.head_height)
        return CalibrationSession(transitions_from_samples(samples), floor, kin)


def planar_pose(p: np.ndarray) -> Pose:
    return Pose(Rotation.about_z(float(p[2])), np.array([p[0], p[1], 0.0]))


def neck_pose(joints: np.ndarray, head_height: float) -> Pose:
    """Head pose in the base frame: lift, then yaw joint, then pitch joint."""
    pitch, yaw = float(joints[0]), float(joints[1])
    return Pose(Rotation.about_z(yaw) @ Rotation.about_y(pitch), np.array([0.0, 0.0, head_height]))


def true_head_pose(state: SimState, cfg: SimConfig) -> Pose:
    return planar_pose(state.base) @ neck_pose(state.joints, cfg.head_height)


def _integrate(pose: np.ndarray, disp: np.ndarray) -> np.ndarray:
    c, s = math.cos(pose[2]), math.sin(pose[2])
    return np.array([
        pose[0] + c * disp[0] - s * disp[1],
        pose[1] + s * disp[0] + c * disp[1],
        pose[2] + disp[2],
    ])


def step(
    state: SimState,
    command: Sequence[float],
    cfg: SimConfig,
    rng: np.random.Generator,
    joints: Sequence[float] | None = None,
) -> SimState:
    """Advance one ``dt`` with commanded base velocity ``(vx, vy, omega)``.

    Head joints jump to ``joints`` exactly when given; their noise enters only
    at observation time.
    """
    dt = cfg.dt
    cmd = np.asarray(command, dtype=float)
    limit = np.array([cfg.linear_accel_limit, cfg.linear_accel_limit, cfg.angular_accel_limit])
    a_v = np.clip((cmd - state.dv) / dt, -limit, limit)
    spread = np.abs(state.dv)
    noise = rng.normal(size=(2, 3))
    dv = state.dv + a_v * dt + noise[0] * cfg.gamma1 * spread + noise[1] * cfg.gamma2 * spread
    slip = cfg.slip_mean + cfg.slip_dev * rng.normal(size=3)
    return SimState(
        base=_integrate(state.base, dv * slip * dt),
        odom=_integrate(state.odom, dv * dt),
        joints=state.joints if joints is None else np.asarray(joints, dtype=float),
        dv=dv,
        time=state.time + dt,
    )


def _noisy_device(device: Pose, cfg: SimConfig, rng: np.random.Generator) -> Pose:
    dp = rng.normal(scale=cfg.device_position_noise, size=3)
    axis = rng.normal(size=3)
    angle = rng.normal(scale=cfg.device_orientation_noise)
    norm = np.linalg.norm(axis)
    axis = axis / norm if norm > 0 else any_perpendicular([0.0, 0.0, 1.0])
    return Pose(device.rotation @ Rotation.from_rotvec(axis * angle), device.translation + dp)


def _floor(device: Pose, cfg: SimConfig, rng: np.random.Generator):
    foot = np.array([device.translation[0], device.translation[1], 0.0])
    r = cfg.floor_patch_radius * np.sqrt(rng.uniform(size=cfg.floor_patch_points))
    phi = rng.uniform(0.0, 2 * math.pi, size=cfg.floor_patch_points)
    patch = np.column_stack([foot[0] + r * np.cos(phi), foot[1] + r * np.sin(phi), np.zeros_like(r)])
    patch = patch + rng.normal(scale=cfg.floor_point_noise, size=patch.shape)
    foot_obs = foot + rng.normal(scale=cfg.floor_point_noise, size=3)
    points = np.vstack([foot_obs, patch])
    return foot_obs, points


def observe(state: SimState, cfg: SimConfig, rng: np.random.Generator, with_floor: bool = False) -> Observation:
    """Noisy head and device poses of the current state.

    With ``with_floor`` the device also reports a floor patch, from which the
    floor normal is fitted, and the noisy foot of the perpendicular from the
    device, which gives its height above the floor.
    """
    joints = state.joints + rng.normal(scale=cfg.joint_angle_noise, size=2)
    head = planar_pose(state.odom) @ neck_pose(joints, cfg.head_height)
    device = _noisy_device(true_head_pose(state, cfg) @ cfg.x_true, cfg, rng)
    floor = points = None
    if with_floor:
        foot_obs, points = _floor(true_head_pose(state, cfg) @ cfg.x_true, cfg, rng)
        normal, _ = estimate_floor_normal(points)
        height = float(normal @ (device.translation - foot_obs))
        floor = FloorObservation.from_map(normal, height, device.rotation)
    return Observation(PosePairSample(head, device, state.time), joints, floor, points)


def truth_of(state: SimState, cfg: SimConfig) -> TruthSample:
    base = planar_pose(state.base)
    head = base @ neck_pose(state.joints, cfg.head_height)
    return TruthSample(state.time, base, head, head @ cfg.x_true, state.joints.copy())


def _settled_keyframe(
    state: SimState, cfg: SimConfig, rng: np.random.Generator, with_floor: bool
) -> Observation:
    obs = [observe(state, cfg, rng, with_floor=with_floor and i == 0) for i in range(cfg.settle_samples)]
    if len(obs) == 1:
        return obs[0]
    head = mean_pose(o.sample.head_pose for o in obs)
    device = mean_pose(o.sample.device_pose for o in obs)
    joints = np.mean([o.joints for o in obs], axis=0)
    return Observation(PosePairSample(head, device, state.time), joints, obs[0].floor, obs[0].floor_points)


def _duration(cmd: Command, cfg: SimConfig) -> float:
    if isinstance(cmd, HeadMove):
        return cfg.head_move_duration if cmd.duration is None else cmd.duration
    return cmd.duration


def run_script(
    script: Sequence[Command],
    cfg: SimConfig,
    rng: np.random.Generator | None = None,
    with_floor: bool = True,
) -> SimRun:
    """Execute ``script`` and return noisy observations plus the hidden truth.

    A keyframe is taken at the start and after every ``Hold``; a final
    ``Hold`` is appended when the script ends in motion so the last
    transition is measured at rest.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    for cmd in script:
        if not _duration(cmd, cfg) > 0:
            raise ValueError(f"command duration must be positive: {cmd}")
    script = list(script)
    if script and not isinstance(script[-1], Hold):
        script.append(Hold())

    state = SimState()
    truth = [truth_of(state, cfg)]
    keyframe_truth = [truth[0]]
    keyframes = [_settled_keyframe(state, cfg, rng, with_floor)]
    observations = [keyframes[0]]
    k = 0
    for cmd in script:
        n = max(1, int(round(_duration(cmd, cfg) / cfg.dt)))
        q0 = state.joints.copy()
        for i in range(1, n + 1):
            s = i / n
            joints = None
            vel = (0.0, 0.0, 0.0)
            if isinstance(cmd, RotateInPlace):
                vel = (0.0, 0.0, cmd.rate)
            elif isinstance(cmd, Forward):
                vel = (cmd.speed, 0.0, 0.0)
            elif isinstance(cmd, HeadMove):
                ramp = 0.5 * (1.0 - math.cos(math.pi * s))
                joints = q0 + ramp * np.array([cmd.pitch_delta, cmd.yaw_delta])
            elif isinstance(cmd, ShakeHead):
                t = i * cfg.dt
                joints = q0 + np.array([cmd.amplitude * math.sin(2 * math.pi * cmd.frequency * t), 0.0])
            state = step(state, vel, cfg, rng, joints)
            k += 1
            if cfg.decimation and k % cfg.decimation == 0:
                truth.append(truth_of(state, cfg))
                observations.append(observe(state, cfg, rng))
        if isinstance(cmd, Hold):
            keyframe_truth.append(truth_of(state, cfg))
            keyframes.append(_settled_keyframe(state, cfg, rng, with_floor))
    return SimRun(observations, keyframes, truth, keyframe_truth, cfg)


@dataclass(frozen=True)
class ShakeRecord:
    time: float
    uncorrected_error: float
    corrected_error: float
    correction_angle: float


def shake_experiment(
    cfg: SimConfig,
    shake: ShakeHead = ShakeHead(),
    encoder_latency: float = 0.15,
    rng: np.random.Generator | None = None,
    x_estimate: Pose | None = None,
    correct: bool = True,
    online: OnlineConfig = OnlineConfig(),
) -> list[ShakeRecord]:
    """Shake the head in pitch with a stationary base and localize the foot.

    Reported joint angles are the true ones delayed by ``encoder_latency``
    (plus joint noise), so the head-to-foot chain is briefly tilted. Each
    step records the planar distance of the localized foot from the true,
    constant foot position, with and without the online correction.
    """
    if encoder_latency < 0:
        raise ValueError("encoder latency must be non-negative")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    x = cfg.x_true if x_estimate is None else x_estimate
    kin = cfg.kinematics
    omega = 2 * math.pi * shake.frequency

    def pitch_at(t: float) -> float:
        return shake.amplitude * math.sin(omega * t) if t > 0 else 0.0

    state = SimState()
    device0 = true_head_pose(state, cfg) @ cfg.x_true
    _, points = _floor(device0, cfg, rng)
    floor_normal, _ = estimate_floor_normal(points)
    foot_true = planar_pose(state.base).translation

    corr = CorrectionState()
    records = []
    n = max(1, int(round(shake.duration / cfg.dt)))
    for i in range(n + 1):
        t = i * cfg.dt
        state = replace(state, joints=np.array([pitch_at(t), 0.0]), time=t)
        reported = np.array([pitch_at(t - encoder_latency), 0.0])
        reported = reported + rng.normal(scale=cfg.joint_angle_noise, size=2)
        device = _noisy_device(true_head_pose(state, cfg) @ cfg.x_true, cfg, rng)
        chain = neck_pose(reported, cfg.head_height).inverse()
        fp = localize_footprint(device, x, kin, chain)
        unc = float(np.linalg.norm(fp.foot_pose.translation[:2] - foot_true[:2]))
        if correct:
            corr = correction_step(corr, fp, floor_normal, online)
            foot = corrected_foot(device, fp, corr.r_add)
            cor = float(np.linalg.norm(foot.translation[:2] - foot_true[:2]))
            angle = corr.last_angle
        else:
            cor, angle = unc, 0.0
        records.append(ShakeRecord(t, unc, cor, angle))
    return records


def pose_records(run: SimRun) -> list:
    """Keyframes of ``run`` in pose-log form, floor normals back in the map frame."""
    from .poselog import PoseRecord

    out = []
    for k in run.keyframes:
        if k.floor is None:
            out.append(PoseRecord(k.sample))
            continue
        n_map = k.sample.device_pose.rotation.apply(k.floor.normal)
        foot = neck_pose(k.joints, run.config.head_height).inverse().translation
        out.append(PoseRecord(k.sample, n_map / np.linalg.norm(n_map), k.floor.height, foot))
    return out
