"""Calibration inputs: transitions, motion classes and observability.

A transition pairs the head's relative motion ``A`` with the device's
relative motion ``B`` between two settled samples. With the extrinsic ``X``
defined by ``M_sd = M_head @ X`` (``X`` is the device pose expressed in the
head frame), every noiseless transition satisfies ``A @ X == X @ B``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .geometry import Pose, Rotation, as_vec3, unit

log = logging.getLogger(__name__)

PARAMETERS = ("t_x", "t_y", "t_z", "roll", "pitch", "yaw")
_AXIS_PARAMS = {"translation": ("t_x", "t_y", "t_z"), "rotation": ("roll", "pitch", "yaw")}


@dataclass(frozen=True)
class PosePairSample:
    head_pose: Pose
    device_pose: Pose
    timestamp: float = 0.0


@dataclass(frozen=True)
class Transition:
    a: Pose
    b: Pose


class MotionClass(enum.Enum):
    HORIZONTAL_ROTATION = "horizontal_rotation"
    VERTICAL_ROTATION = "vertical_rotation"
    FORWARD_TRANSLATION = "forward_translation"
    COMPLEX = "complex"
    NEGLIGIBLE = "negligible"

    @property
    def is_rotational(self) -> bool:
        return self in (MotionClass.HORIZONTAL_ROTATION, MotionClass.VERTICAL_ROTATION, MotionClass.COMPLEX)


@dataclass(frozen=True)
class ParameterMask:
    """Which extrinsic parameters a set of motions constrains."""

    t_x: bool = False
    t_y: bool = False
    t_z: bool = False
    roll: bool = False
    pitch: bool = False
    yaw: bool = False

    @classmethod
    def of(cls, *names: str) -> "ParameterMask":
        unknown = set(names) - set(PARAMETERS)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")
        return cls(**{n: True for n in names})

    @classmethod
    def full(cls) -> "ParameterMask":
        return cls.of(*PARAMETERS)

    def __or__(self, other: "ParameterMask") -> "ParameterMask":
        return ParameterMask(**{f.name: getattr(self, f.name) or getattr(other, f.name) for f in fields(self)})

    def constrained(self) -> tuple[str, ...]:
        return tuple(n for n in PARAMETERS if getattr(self, n))

    def missing(self) -> tuple[str, ...]:
        return tuple(n for n in PARAMETERS if not getattr(self, n))

    @property
    def complete(self) -> bool:
        return not self.missing()

    def to_dict(self) -> dict[str, bool]:
        return {n: getattr(self, n) for n in PARAMETERS}


@dataclass(frozen=True)
class FloorObservation:
    """Floor normal and device height above the floor at one sample.

    ``normal`` is expressed in the device frame at the sample time; use
    :meth:`from_map` when the normal is known in the map frame.
    """

    normal: np.ndarray
    height: float

    def __post_init__(self):
        n = as_vec3(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("floor normal must be a unit vector")
        if not self.height > 0:
            raise ValueError("device height above the floor must be positive")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "height", float(self.height))

    @classmethod
    def from_map(cls, normal_map, height: float, device_rotation: Rotation) -> "FloorObservation":
        n = device_rotation.inverse().apply(unit(normal_map))
        return cls(n / np.linalg.norm(n), height)


@dataclass(frozen=True)
class RobotKinematics:
    """``head_to_foot`` is the head-origin-to-foot vector in the head frame."""

    head_to_foot: np.ndarray
    head_height: float

    def __post_init__(self):
        object.__setattr__(self, "head_to_foot", as_vec3(self.head_to_foot))
        if not self.head_height > 0:
            raise ValueError("head_height must be positive")

    @classmethod
    def upright(cls, head_height: float) -> "RobotKinematics":
        return cls(np.array([0.0, 0.0, -head_height]), head_height)


@dataclass(frozen=True)
class ClassifyConfig:
    min_angle: float = 0.05
    min_translation: float = 0.02
    axis_tolerance: float = 0.1
    max_incidental_translation: float = 0.05
    rank_tol: float = 1e-8


def relative_transition(before: PosePairSample, after: PosePairSample) -> Transition:
    return Transition(
        a=before.head_pose.inverse() @ after.head_pose,
        b=before.device_pose.inverse() @ after.device_pose,
    )


def transitions_from_samples(samples: Sequence[PosePairSample]) -> list[Transition]:
    """Consecutive samples, pairwise. Timestamps must not decrease."""
    for prev, cur in zip(samples, samples[1:]):
        if cur.timestamp < prev.timestamp:
            raise ValueError(f"timestamps decrease: {prev.timestamp} -> {cur.timestamp}")
    return [relative_transition(s0, s1) for s0, s1 in zip(samples, samples[1:])]


def classify_motion(t: Transition, cfg: ClassifyConfig = ClassifyConfig()) -> MotionClass:
    """Motion class of the head transition ``t.a``.

    Vertical is the head z axis at the start of the transition, which is the
    frame ``A`` is expressed in.
    """
    w = t.a.rotation.as_rotvec()
    angle = float(np.linalg.norm(w))
    dist = float(np.linalg.norm(t.a.translation))
    if angle < cfg.min_angle:
        return MotionClass.FORWARD_TRANSLATION if dist >= cfg.min_translation else MotionClass.NEGLIGIBLE
    if dist < cfg.max_incidental_translation:
        axis = w / angle
        tilt = math.acos(min(1.0, abs(axis[2])))
        if tilt <= cfg.axis_tolerance:
            return MotionClass.HORIZONTAL_ROTATION
        if abs(math.pi / 2 - tilt) <= cfg.axis_tolerance:
            return MotionClass.VERTICAL_ROTATION
    return MotionClass.COMPLEX


def _mask_from_direction(direction: np.ndarray, kind: str, tol: float) -> dict[str, bool]:
    # a direction d leaves the parameter about/along d free and constrains
    # the ones perpendicular to it
    names = _AXIS_PARAMS[kind]
    return {names[i]: abs(direction[i]) < math.cos(tol) for i in range(3)}


def constrained_parameters(
    m: MotionClass,
    transition: Transition | None = None,
    cfg: ClassifyConfig = ClassifyConfig(),
) -> ParameterMask:
    """Parameters a single motion constrains.

    The three pure motion classes use the fixed table. ``COMPLEX`` needs the
    transition: its rotation axis frees the rotation and translation
    parameters along that axis and constrains the rest.
    """
    if m is MotionClass.HORIZONTAL_ROTATION:
        return ParameterMask.of("roll", "pitch", "t_x", "t_y")
    if m is MotionClass.VERTICAL_ROTATION:
        return ParameterMask.of("roll", "yaw", "t_x", "t_z")
    if m is MotionClass.FORWARD_TRANSLATION:
        return ParameterMask.of("pitch", "yaw")
    if m is MotionClass.NEGLIGIBLE:
        return ParameterMask()
    if transition is None:
        raise ValueError("a complex motion needs its transition to derive the constrained parameters")
    axis = unit(transition.a.rotation.as_rotvec())
    flags = _mask_from_direction(axis, "rotation", cfg.axis_tolerance)
    flags.update(_mask_from_direction(axis, "translation", cfg.axis_tolerance))
    return ParameterMask(**flags)


def numerical_rank(m: np.ndarray, rank_tol: float = 1e-8) -> int:
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


@dataclass(frozen=True)
class ObservabilityReport:
    mask: ParameterMask
    classes: tuple[MotionClass, ...]
    rotation_rank: int
    translation_rank: int
    translation_singular_values: tuple[float, ...]
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def complete(self) -> bool:
        return self.mask.complete


def observability_report(
    transitions: Sequence[Transition],
    has_floor_obs: bool = False,
    cfg: ClassifyConfig = ClassifyConfig(),
) -> ObservabilityReport:
    """Union of per-transition masks plus rank diagnostics.

    ``rotation_rank`` is the rank of the stacked direction vectors feeding
    the rotation solve (rotation axes and forward directions of ``A``);
    ``translation_rank`` is the rank of the stacked ``I - R_A`` blocks. Floor
    rows are not part of ``translation_rank``.
    """
    if not transitions:
        raise ValueError("observability needs at least one transition")
    mask = ParameterMask.of("t_z") if has_floor_obs else ParameterMask()
    classes = []
    dirs = []
    blocks = []
    warnings = []
    for i, t in enumerate(transitions):
        mc = classify_motion(t, cfg)
        classes.append(mc)
        mask = mask | constrained_parameters(mc, t, cfg)
        if mc.is_rotational:
            dirs.append(unit(t.a.rotation.as_rotvec()))
            blocks.append(np.eye(3) - t.a.rotation.matrix)
        elif mc is MotionClass.FORWARD_TRANSLATION:
            dirs.append(unit(t.a.translation))
        if mc is MotionClass.COMPLEX:
            warnings.append(
                f"transition {i} mixes rotation and translation; pure rotations and pure "
                "forward moves avoid odometry accumulation error"
            )
    for w in warnings:
        log.warning(w)
    rot_rank = numerical_rank(np.array(dirs), cfg.rank_tol) if dirs else 0
    if blocks:
        stacked = np.vstack(blocks)
        sv = tuple(float(s) for s in np.linalg.svd(stacked, compute_uv=False))
        trans_rank = numerical_rank(stacked, cfg.rank_tol)
    else:
        sv, trans_rank = (), 0
    return ObservabilityReport(mask, tuple(classes), rot_rank, trans_rank, sv, tuple(warnings))
