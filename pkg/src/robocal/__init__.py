"""Extrinsic calibration between a robot and a head-mounted SLAM device."""

from .geometry import AxisAngle, Pose, Rotation, pose_compose, pose_inverse, rotation_between_vectors, to_axis_angle
from .session import (
    ClassifyConfig,
    FloorObservation,
    MotionClass,
    ParameterMask,
    PosePairSample,
    RobotKinematics,
    Transition,
    classify_motion,
    constrained_parameters,
    observability_report,
    relative_transition,
)
from .solver import (
    CalibrationResult,
    CalibrationSession,
    InsufficientMotion,
    SolveConfig,
    calibrate,
    refine_nonlinear,
    solve_rotation,
    solve_translation,
)

__version__ = "0.1.0"

__all__ = [
    "AxisAngle", "Pose", "Rotation", "pose_compose", "pose_inverse", "rotation_between_vectors", "to_axis_angle",
    "ClassifyConfig", "FloorObservation", "MotionClass", "ParameterMask", "PosePairSample", "RobotKinematics",
    "Transition", "classify_motion", "constrained_parameters", "observability_report", "relative_transition",
    "CalibrationResult", "CalibrationSession", "InsufficientMotion", "SolveConfig", "calibrate",
    "refine_nonlinear", "solve_rotation", "solve_translation",
]
