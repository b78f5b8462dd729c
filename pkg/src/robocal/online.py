"""Online tilt correction of the device-to-foot chain.

The robot stands upright, so the z axis of its localized foot frame should
match the floor normal seen by the device. Any mismatch is attributed to
roll/pitch error somewhere between the device and the foot (calibration
error, encoder lag, a shifted device) and removed with a correction rotation
``R_add`` that maps the localized up vector onto the floor normal. Because
the device sits high above the floor, this removes the planar error term
that grows with height; what is left is bounded by the floor-parallel
offset and the translational error of the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import (
    DegenerateGeometry,
    Pose,
    Rotation,
    as_vec3,
    rotation_between_vectors,
    unit,
)
from .session import RobotKinematics


class AnomalousTilt(ValueError):
    """Correction angle exceeds the configured limit; likely a bad floor estimate."""

    def __init__(self, angle: float, limit: float, rotation: Rotation):
        super().__init__(f"correction angle {angle:.3f} rad exceeds limit {limit:.3f} rad")
        self.angle = angle
        self.limit = limit
        self.rotation = rotation


@dataclass(frozen=True)
class OnlineConfig:
    max_correction: float = 0.5
    smoothing: float = 1.0  # 1.0 applies each instantaneous correction as-is
    history: int = 100

    def __post_init__(self):
        if not 0.0 <= self.smoothing <= 1.0:
            raise ValueError("smoothing factor must lie in [0, 1]")


@dataclass(frozen=True)
class LocalizedFootprint:
    foot_pose: Pose
    up_vector: np.ndarray

    def __post_init__(self):
        up = as_vec3(self.up_vector)
        if abs(np.linalg.norm(up) - 1.0) > 1e-9:
            raise ValueError("up_vector must be a unit vector")
        object.__setattr__(self, "up_vector", up)


@dataclass(frozen=True)
class CorrectionState:
    r_add: Rotation = field(default_factory=Rotation.identity)
    last_angle: float = 0.0
    history: tuple[float, ...] = ()
    anomalous: bool = False


def localize_footprint(
    device_pose_in_map: Pose,
    x: Pose,
    kin: RobotKinematics,
    joint_chain: Pose | None = None,
) -> LocalizedFootprint:
    """Foot pose in the map from the device pose and the head-to-foot chain.

    ``joint_chain`` is the foot pose in the head frame (from the encoders).
    When omitted, the foot hangs straight below the head by ``kin``.
    """
    if joint_chain is None:
        joint_chain = Pose.from_translation(kin.head_to_foot)
    foot = device_pose_in_map @ x.inverse() @ joint_chain
    return LocalizedFootprint(foot, foot.rotation.matrix[:, 2].copy())


def compute_correction(n_observed, n_prime, max_correction: float | None = 0.5) -> Rotation:
    """Rotation ``R_add`` with ``R_add @ n_prime == n_observed``.

    The axis is ``n_prime x n_observed`` and the angle the angle between the
    two, so no twist about the normal is introduced. Raises
    :class:`AnomalousTilt` above ``max_correction`` and propagates
    ``DegenerateAntiparallel``.
    """
    n = unit(n_observed)
    n_p = unit(n_prime)
    r_add = rotation_between_vectors(n_p, n)
    if np.linalg.norm(r_add.apply(n_p) - n) > 1e-9:
        raise ArithmeticError("correction rotation failed its alignment check")
    angle = r_add.angle()
    if max_correction is not None and angle > max_correction:
        raise AnomalousTilt(angle, max_correction, r_add)
    return r_add


def apply_correction(a_obs, r_add: Rotation) -> np.ndarray:
    return r_add.apply(as_vec3(a_obs))


def corrected_foot(device_pose_in_map: Pose, footprint: LocalizedFootprint, r_add: Rotation) -> Pose:
    """Rotate the device-to-foot part of the chain by ``r_add`` about the device."""
    a_obs = footprint.foot_pose.translation - device_pose_in_map.translation
    return Pose(
        r_add @ footprint.foot_pose.rotation,
        device_pose_in_map.translation + apply_correction(a_obs, r_add),
    )


def correction_step(
    state: CorrectionState,
    footprint: LocalizedFootprint,
    floor_normal,
    cfg: OnlineConfig = OnlineConfig(),
) -> CorrectionState:
    """Next correction state from one localized footprint.

    The instantaneous correction is blended into the previous one by
    interpolating rotation vectors with weight ``cfg.smoothing``. An anomalous
    tilt leaves the rotation unchanged and sets ``anomalous``.
    """
    try:
        inst = compute_correction(floor_normal, footprint.up_vector, cfg.max_correction)
    except AnomalousTilt:
        return replace(state, anomalous=True)
    a = cfg.smoothing
    if a == 1.0:
        r_add = inst
    else:
        w = (1.0 - a) * state.r_add.as_rotvec() + a * inst.as_rotvec()
        r_add = Rotation.from_rotvec(w)
    angle = r_add.angle()
    history = (state.history + (angle,))[-cfg.history :]
    return CorrectionState(r_add, angle, history, False)


def estimate_floor_normal(points: Sequence, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Total-least-squares plane normal (z >= 0) and RMS point-plane distance."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 3:
        raise DegenerateGeometry("plane fit needs at least three 3-D points")
    centered = p - p.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = s[0] if s[0] > 0 else 1.0
    if s[0] <= tol or s[1] <= tol * max(1.0, scale):
        raise DegenerateGeometry("points are coincident or collinear")
    n = vt[2]
    if n[2] < 0 or (n[2] == 0 and n[np.nonzero(n)[0][0]] < 0):
        n = -n
    residual = math.sqrt(float(np.mean((centered @ n) ** 2)))
    return n, residual
