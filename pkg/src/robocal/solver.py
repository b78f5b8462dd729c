"""Extrinsic calibration from paired head/device transitions.

The rotation of ``X`` comes from aligning the rotation axes of ``A`` and
``B`` (``k_A = R k_B``), optionally joined by forward-move directions
(``t_A = R t_B``). The translation comes from the stacked linear system
``(I - R_A) t = t_A - R t_B``, optionally augmented with floor-height rows
when the robot cannot rotate its head vertically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import NearIdentity, Pose, Rotation, rotation_between_vectors, to_axis_angle, unit
from .session import (
    PARAMETERS,
    ClassifyConfig,
    FloorObservation,
    MotionClass,
    ParameterMask,
    RobotKinematics,
    Transition,
    classify_motion,
    observability_report,
)

RANK_TOL = 1e-8

_HINTS = {
    "t_x": "add a rotation about an axis other than x",
    "t_y": "add a horizontal rotation",
    "t_z": "add vertical rotation or floor observations",
    "roll": "add a rotation about an axis other than x",
    "pitch": "add a horizontal rotation or a forward move",
    "yaw": "add vertical rotation or forward movement",
}


class CalibrationError(RuntimeError):
    pass


class InsufficientMotion(CalibrationError):
    """The session leaves some extrinsic parameters unconstrained."""

    def __init__(self, missing: Sequence[str], partial: "CalibrationResult | None" = None):
        self.missing = tuple(p for p in PARAMETERS if p in set(missing))
        self.partial = partial
        detail = "; ".join(f"{p}: {_HINTS[p]}" for p in self.missing)
        super().__init__(f"unconstrained parameters: {detail}")


class NoConvergence(CalibrationError):
    pass


@dataclass(frozen=True)
class CalibrationSession:
    transitions: Sequence[Transition]
    floor_observations: Sequence[FloorObservation] = ()
    kinematics: RobotKinematics | None = None

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(self.transitions))
        object.__setattr__(self, "floor_observations", tuple(self.floor_observations))
        if self.floor_observations and self.kinematics is None:
            raise ValueError("floor observations need robot kinematics (head-to-foot vector)")


@dataclass(frozen=True)
class SolveConfig:
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    rank_tol: float = RANK_TOL
    allow_partial: bool = False
    # nonlinear refinement
    max_iters: int = 50
    step_tol: float = 1e-13
    fd_step: float = 1e-7


@dataclass(frozen=True)
class RotationSolution:
    rotation: Rotation
    residual: float
    free_axis: np.ndarray | None = None

    @property
    def underconstrained(self) -> bool:
        return self.free_axis is not None


@dataclass(frozen=True)
class TranslationSolution:
    translation: np.ndarray
    residual: float
    rank: int
    null_space: np.ndarray
    singular_values: np.ndarray

    @property
    def underconstrained(self) -> bool:
        return self.rank < 3


@dataclass(frozen=True)
class CalibrationResult:
    """Estimated extrinsic ``x`` (device pose in the head frame)."""

    x: Pose
    rotation_residual: float
    translation_residual: float
    observability: ParameterMask
    condition: float
    unconstrained: tuple[str, ...] = ()
    converged: bool = True
    iterations: int = 0
    objective: float | None = None


def _rotation_residual_angles(pairs, r: Rotation) -> np.ndarray:
    out = []
    for ka, kb in pairs:
        c = float(np.clip(np.dot(ka, r.apply(kb)), -1.0, 1.0))
        out.append(math.acos(c))
    return np.array(out)


def _rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(math.sqrt(np.mean(x**2))) if x.size else 0.0


def solve_rotation(pairs: Sequence[tuple[np.ndarray, np.ndarray]], rank_tol: float = RANK_TOL) -> RotationSolution:
    """Rotation minimizing ``sum |k_A - R k_B|^2`` over proper rotations.

    When every ``k_A`` is parallel the rotation about that axis is free; the
    returned representative is the smallest rotation aligning the mean pair
    and ``free_axis`` names the ambiguity.
    """
    if not pairs:
        raise CalibrationError("rotation solve needs at least one direction pair")
    ka = np.array([unit(p[0]) for p in pairs])
    kb = np.array([unit(p[1]) for p in pairs])
    s_a = np.linalg.svd(ka, compute_uv=False)
    if s_a.size < 2 or s_a[1] <= rank_tol * s_a[0]:
        # all k_A parallel (up to sign)
        ref = ka[0]
        sa = np.sign(ka @ ref)
        mean_a = unit((ka * sa[:, None]).sum(axis=0))
        mean_b = unit((kb * sa[:, None]).sum(axis=0))
        r = rotation_between_vectors(mean_b, mean_a)
        return RotationSolution(r, _rms(_rotation_residual_angles(list(zip(ka, kb)), r)), mean_a)
    m = ka.T @ kb
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    r = Rotation(u @ np.diag([1.0, 1.0, d]) @ vt)
    return RotationSolution(r, _rms(_rotation_residual_angles(list(zip(ka, kb)), r)))


def floor_row(obs: FloorObservation, kin: RobotKinematics, r: Rotation) -> tuple[np.ndarray, float]:
    """One linear constraint ``m . t = h + m . b`` on the translation.

    ``m`` is the floor normal in the head frame (device-frame normal rotated
    by ``r``) and ``b`` the head-to-foot vector. Equivalent to requiring the
    floor-parallel offset ``h n - R^-1 t + b`` (device frame) to be
    perpendicular to ``n``.
    """
    m = r.apply(obs.normal)
    return m, obs.height + float(np.dot(m, kin.head_to_foot))


def solve_translation(
    rows: Sequence[tuple[Rotation, np.ndarray, np.ndarray]],
    r: Rotation,
    floor_rows: Sequence[tuple[FloorObservation, RobotKinematics]] = (),
    rank_tol: float = RANK_TOL,
) -> TranslationSolution:
    """Least-squares translation from ``(I - R_A) t = t_A - R t_B`` rows.

    Returns the minimum-norm solution; ``null_space`` holds an orthonormal
    basis (as rows) of the unconstrained directions.
    """
    if not rows and not floor_rows:
        raise CalibrationError("translation solve needs at least one row")
    lhs, rhs = [], []
    for ra, ta, tb in rows:
        lhs.append(np.eye(3) - ra.matrix)
        rhs.append(np.asarray(ta, dtype=float) - r.apply(tb))
    for obs, kin in floor_rows:
        m, v = floor_row(obs, kin, r)
        lhs.append(m[None, :])
        rhs.append(np.array([v]))
    a = np.vstack(lhs)
    y = np.concatenate(rhs)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > rank_tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    rank = int(keep.sum())
    t = vt[keep].T @ ((u[:, keep].T @ y) / s[keep])
    _, _, vt_full = np.linalg.svd(a)
    null = vt_full[rank:]
    resid = a @ t - y
    return TranslationSolution(t, _rms(resid), rank, null, s)


def _param_name(direction: np.ndarray, kind: str) -> str:
    names = ("t_x", "t_y", "t_z") if kind == "translation" else ("roll", "pitch", "yaw")
    return names[int(np.argmax(np.abs(direction)))]


def _axis_pair(t: Transition, threshold: float) -> tuple[np.ndarray, np.ndarray, bool]:
    aa = to_axis_angle(t.a.rotation, threshold)
    bb = to_axis_angle(t.b.rotation, threshold)
    return aa.axis, bb.axis, aa.near_pi or bb.near_pi


def _gather(session: CalibrationSession, cfg: SolveConfig):
    pairs, ambiguous, trans_rows = [], [], []
    for t in session.transitions:
        mc = classify_motion(t, cfg.classify)
        if mc.is_rotational:
            try:
                ka, kb, near_pi = _axis_pair(t, min(cfg.classify.min_angle, 1e-6))
            except NearIdentity:
                continue
            (ambiguous if near_pi else pairs).append((ka, kb))
            trans_rows.append((t.a.rotation, t.a.translation, t.b.translation))
        elif mc is MotionClass.FORWARD_TRANSLATION:
            pairs.append((unit(t.a.translation), unit(t.b.translation)))
    return pairs, ambiguous, trans_rows


def _fix_half_turn_signs(pairs, ambiguous, rank_tol):
    # a half turn's axis sign is arbitrary on both sides; choose the sign of
    # k_B that agrees best with the estimate from the unambiguous pairs
    if not ambiguous:
        return pairs
    if not pairs:
        return pairs + ambiguous
    r0 = solve_rotation(pairs, rank_tol).rotation
    fixed = []
    for ka, kb in ambiguous:
        fixed.append((ka, kb) if np.dot(ka, r0.apply(kb)) >= 0 else (ka, -kb))
    return pairs + fixed


def calibrate(session: CalibrationSession, cfg: SolveConfig = SolveConfig()) -> CalibrationResult:
    """Linear calibration: rotation from direction pairs, then translation.

    Raises :class:`InsufficientMotion` when either the motion classes or the
    numerical rank leave a parameter free, unless ``cfg.allow_partial``; a
    partial result then lists the free parameters in ``unconstrained``.
    """
    if not session.transitions:
        raise CalibrationError("session has no transitions")
    report = observability_report(session.transitions, bool(session.floor_observations), cfg.classify)
    missing = set(report.mask.missing())

    pairs, ambiguous, trans_rows = _gather(session, cfg)
    pairs = _fix_half_turn_signs(pairs, ambiguous, cfg.rank_tol)
    if not pairs:
        raise InsufficientMotion(("roll", "pitch", "yaw", "t_x", "t_y", "t_z"))
    rot = solve_rotation(pairs, cfg.rank_tol)
    if rot.underconstrained:
        missing.add(_param_name(rot.free_axis, "rotation"))

    kin = session.kinematics
    floor_rows = [(obs, kin) for obs in session.floor_observations]
    if trans_rows or floor_rows:
        tr = solve_translation(trans_rows, rot.rotation, floor_rows, cfg.rank_tol)
        for d in tr.null_space:
            missing.add(_param_name(d, "translation"))
        t = tr.translation
        t_res = tr.residual
        cond = float(tr.singular_values[0] / tr.singular_values[-1]) if tr.singular_values[-1] > 0 else math.inf
    else:
        missing.update(("t_x", "t_y", "t_z"))
        t, t_res, cond = np.zeros(3), 0.0, math.inf

    result = CalibrationResult(
        x=Pose(rot.rotation, t),
        rotation_residual=rot.residual,
        translation_residual=t_res,
        observability=report.mask,
        condition=cond,
        unconstrained=tuple(p for p in PARAMETERS if p in missing),
    )
    if missing and not cfg.allow_partial:
        raise InsufficientMotion(result.unconstrained, result)
    return result


def _se3_residual(x: Pose, t: Transition) -> np.ndarray:
    e = x.inverse() @ t.a.inverse() @ x @ t.b
    return np.concatenate([e.rotation.as_rotvec(), e.translation])


def _residuals(x: Pose, session: CalibrationSession) -> np.ndarray:
    parts = [_se3_residual(x, t) for t in session.transitions]
    kin = session.kinematics
    for obs in session.floor_observations:
        m, v = floor_row(obs, kin, x.rotation)
        parts.append(np.array([np.dot(m, x.translation) - v]))
    return np.concatenate(parts)


def objective(x: Pose, session: CalibrationSession) -> float:
    """Sum of squared ``log(X^-1 A^-1 X B)`` residuals plus floor-row residuals."""
    r = _residuals(x, session)
    return float(r @ r)


def _retract(x: Pose, delta: np.ndarray) -> Pose:
    return Pose(x.rotation @ Rotation.from_rotvec(delta[:3]), x.translation + delta[3:])


def refine_nonlinear(
    session: CalibrationSession,
    initial: CalibrationResult,
    cfg: SolveConfig = SolveConfig(),
) -> CalibrationResult:
    """Levenberg-Marquardt polish of ``initial`` on the full SE(3) residual.

    Steps are accepted only if they lower the objective. Directions the data
    do not constrain (null space of the Jacobian at the start) are frozen.
    ``NoConvergence`` is raised when ``max_iters`` runs out unless
    ``cfg.allow_partial``, in which case the best iterate is returned with
    ``converged=False``.
    """
    x = initial.x
    r = _residuals(x, session)
    cost = float(r @ r)

    def jacobian(x0: Pose) -> np.ndarray:
        h = cfg.fd_step
        cols = []
        for i in range(6):
            d = np.zeros(6)
            d[i] = h
            cols.append((_residuals(_retract(x0, d), session) - _residuals(_retract(x0, -d), session)) / (2 * h))
        return np.stack(cols, axis=1)

    j = jacobian(x)
    _, s, vt = np.linalg.svd(j, full_matrices=False)
    free = vt[s > cfg.rank_tol * s[0]] if s[0] > 0 else np.zeros((0, 6))
    lam = 1e-6
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if cost == 0.0:
            converged = True
            break
        jr = j @ free.T
        g = jr.T @ r
        h = jr.T @ jr
        improved = False
        for _ in range(20):
            step = -np.linalg.solve(h + lam * np.diag(np.diag(h) + 1e-12), g)
            delta = free.T @ step
            cand = _retract(x, delta)
            rc = _residuals(cand, session)
            cc = float(rc @ rc)
            if cc < cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            converged = True
            break
        small = np.linalg.norm(delta) < cfg.step_tol or cost - cc <= 1e-15 * max(cost, 1e-300)
        x, r, cost = cand, rc, cc
        lam = max(lam / 10.0, 1e-12)
        if small:
            converged = True
            break
        j = jacobian(x)

    if not converged and not cfg.allow_partial:
        raise NoConvergence(f"no convergence after {cfg.max_iters} iterations (objective {cost:.3g})")

    pairs, ambiguous, trans_rows = _gather(session, cfg)
    pairs = pairs + ambiguous
    rot_res = _rms(_rotation_residual_angles(pairs, x.rotation)) if pairs else 0.0
    tres = [(np.eye(3) - ra.matrix) @ x.translation - (ta - x.rotation.apply(tb)) for ra, ta, tb in trans_rows]
    kin = session.kinematics
    for obs in session.floor_observations:
        m, v = floor_row(obs, kin, x.rotation)
        tres.append(np.array([m @ x.translation - v]))
    return replace(
        initial,
        x=x,
        rotation_residual=rot_res,
        translation_residual=_rms(np.concatenate(tres)) if tres else 0.0,
        converged=converged,
        iterations=it,
        objective=cost,
    )


def result_to_dict(result: CalibrationResult) -> dict:
    """Plain-data record of a calibration result (meters, radians)."""
    rot = result.x.rotation
    angle = rot.angle()
    axis = (rot.as_rotvec() / angle).tolist() if angle > 0 else [0.0, 0.0, 1.0]
    return {
        "translation_m": result.x.translation.tolist(),
        "rotation_quaternion_wxyz": rot.as_quaternion().tolist(),
        "rotation_axis_angle": {"axis": axis, "angle_rad": angle},
        "rotation_residual_rad": result.rotation_residual,
        "translation_residual_m": result.translation_residual,
        "observability": result.observability.to_dict(),
        "unconstrained": list(result.unconstrained),
        "condition": result.condition if math.isfinite(result.condition) else None,
        "converged": result.converged,
        "iterations": result.iterations,
        "objective": result.objective,
    }
