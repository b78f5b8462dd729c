import math

import numpy as np
import pytest
from hypothesis import assume, given

from robocal.geometry import Pose, Rotation
from robocal.session import (
    ClassifyConfig,
    FloorObservation,
    MotionClass,
    ParameterMask,
    PosePairSample,
    RobotKinematics,
    Transition,
    classify_motion,
    constrained_parameters,
    numerical_rank,
    observability_report,
    relative_transition,
    transitions_from_samples,
)

from conftest import poses, rotations

X_TRUE = Pose(Rotation.identity(), [0.12, 0.12, 0.12])
H = MotionClass.HORIZONTAL_ROTATION
V = MotionClass.VERTICAL_ROTATION
F = MotionClass.FORWARD_TRANSLATION


def synthetic(head_before: Pose, head_after: Pose, x: Pose = X_TRUE) -> Transition:
    return relative_transition(
        PosePairSample(head_before, head_before @ x, 0.0),
        PosePairSample(head_after, head_after @ x, 1.0),
    )


def motion(a: Pose, x: Pose = X_TRUE) -> Transition:
    return synthetic(Pose.identity(), a, x)


def test_relative_transition_identity():
    s = PosePairSample(Pose.identity(), Pose.identity())
    t = relative_transition(s, s)
    np.testing.assert_allclose(t.a.as_matrix(), np.eye(4))
    np.testing.assert_allclose(t.b.as_matrix(), np.eye(4))


def test_relative_transition_pure_translation():
    before = PosePairSample(Pose.identity(), Pose.identity())
    moved = Pose.from_translation([1, 0, 0])
    t = relative_transition(before, PosePairSample(moved, moved))
    np.testing.assert_allclose(t.a.translation, [1, 0, 0])
    np.testing.assert_allclose(t.b.translation, [1, 0, 0])


def test_relative_transition_satisfies_ax_xb():
    t = motion(Pose(Rotation.about_z(0.3), [0, 0, 0]))
    np.testing.assert_allclose((t.a @ X_TRUE).as_matrix(), (X_TRUE @ t.b).as_matrix(), atol=1e-9)


@given(poses(), poses(), poses())
def test_relative_transition_ax_xb_property(h1, h2, x):
    t = synthetic(h1, h2, x)
    np.testing.assert_allclose((t.a @ x).as_matrix(), (x @ t.b).as_matrix(), atol=1e-9)


def test_transitions_reject_decreasing_timestamps():
    s0 = PosePairSample(Pose.identity(), Pose.identity(), 1.0)
    s1 = PosePairSample(Pose.identity(), Pose.identity(), 0.5)
    with pytest.raises(ValueError):
        transitions_from_samples([s0, s1])


def test_classify_examples():
    assert classify_motion(motion(Pose(Rotation.about_z(0.3), [0, 0, 0]))) is H
    assert classify_motion(motion(Pose(Rotation.about_y(0.3), [0, 0, 0]))) is V
    assert classify_motion(motion(Pose.from_translation([0.6, 0, 0]))) is F
    assert classify_motion(motion(Pose(Rotation.about_x(0.01), [0.005, 0, 0]))) is MotionClass.NEGLIGIBLE
    assert classify_motion(motion(Pose(Rotation.about_z(0.3), [0.3, 0, 0]))) is MotionClass.COMPLEX
    assert classify_motion(motion(Pose(Rotation.from_axis_angle([1, 0, 1], 0.3), [0, 0, 0]))) is MotionClass.COMPLEX


def test_classify_uses_head_frame_vertical():
    # a yaw-joint turn with the head pitched down is still horizontal in the head frame
    pitched = Pose(Rotation.about_y(0.4), [0, 0, 1.1])
    turned = pitched @ Pose(Rotation.about_z(0.3), [0, 0, 0])
    assert classify_motion(synthetic(pitched, turned)) is H


def test_classify_thresholds_are_configurable():
    t = motion(Pose(Rotation.about_z(0.04), [0, 0, 0]))
    assert classify_motion(t) is MotionClass.NEGLIGIBLE
    assert classify_motion(t, ClassifyConfig(min_angle=0.01)) is H


@given(poses(), poses(), poses())
def test_classify_invariant_to_world_frame(h1, h2, world):
    t = synthetic(h1, h2)
    moved = relative_transition(
        PosePairSample(world @ h1, world @ h1 @ X_TRUE), PosePairSample(world @ h2, world @ h2 @ X_TRUE)
    )
    # only compare away from the decision boundaries
    w = t.a.rotation.as_rotvec()
    assume(abs(np.linalg.norm(w) - 0.05) > 1e-6)
    assume(abs(np.linalg.norm(t.a.translation) - 0.05) > 1e-6 and abs(np.linalg.norm(t.a.translation) - 0.02) > 1e-6)
    if np.linalg.norm(w) > 0:
        tilt = math.acos(min(1.0, abs(w[2]) / np.linalg.norm(w)))
        assume(abs(tilt - 0.1) > 1e-6 and abs(abs(math.pi / 2 - tilt) - 0.1) > 1e-6)
    assert classify_motion(t) is classify_motion(moved)


def test_constrained_parameters_table():
    assert constrained_parameters(H) == ParameterMask.of("roll", "pitch", "t_x", "t_y")
    assert constrained_parameters(V) == ParameterMask.of("roll", "yaw", "t_x", "t_z")
    assert constrained_parameters(F) == ParameterMask.of("pitch", "yaw")
    assert constrained_parameters(MotionClass.NEGLIGIBLE) == ParameterMask()


def test_constrained_parameters_complex_uses_axis():
    t = motion(Pose(Rotation.about_z(0.3), [0.3, 0, 0]))
    assert constrained_parameters(MotionClass.COMPLEX, t) == ParameterMask.of("roll", "pitch", "t_x", "t_y")
    t = motion(Pose(Rotation.from_axis_angle([1, 1, 0], 0.3), [0, 0, 0]))
    assert constrained_parameters(MotionClass.COMPLEX, t).complete
    with pytest.raises(ValueError):
        constrained_parameters(MotionClass.COMPLEX)


def turns(*specs):
    out = []
    for axis, angle in specs:
        out.append(motion(Pose(Rotation.from_axis_angle(axis, angle), [0, 0, 0])))
    return out


def test_report_single_horizontal_rotation():
    rep = observability_report(turns(([0, 0, 1], 0.3)))
    assert rep.mask == ParameterMask.of("roll", "pitch", "t_x", "t_y")
    assert not rep.mask.t_z and not rep.mask.yaw
    assert rep.translation_rank == 2 and rep.rotation_rank == 1


def test_report_two_way_rotation_is_complete():
    rep = observability_report(turns(([0, 0, 1], 0.3), ([0, 0, 1], -0.3), ([0, 1, 0], 0.3), ([0, 1, 0], -0.3)))
    assert rep.complete
    assert rep.translation_rank == 3 and rep.rotation_rank == 2


def test_report_horizontal_movement_needs_floor():
    ts = turns(([0, 0, 1], 0.6), ([0, 0, 1], -0.6))
    ts += [motion(Pose.from_translation([0.6, 0, 0]))] * 2
    assert observability_report(ts).mask.missing() == ("t_z",)
    assert observability_report(ts, has_floor_obs=True).complete


def test_report_warns_on_complex_motion():
    rep = observability_report([motion(Pose(Rotation.about_z(0.3), [0.3, 0, 0]))])
    assert rep.classes == (MotionClass.COMPLEX,)
    assert rep.warnings


def test_report_requires_transitions():
    with pytest.raises(ValueError):
        observability_report([])


@given(rotations())
def test_rank_of_i_minus_ra_is_two(r):
    assume(r.angle() > 0.05)
    assert numerical_rank(np.eye(3) - r.matrix) == 2


def test_report_mask_is_monotone(rng):
    pool = turns(([0, 0, 1], 0.3), ([0, 1, 0], 0.3), ([1, 0, 0], 0.3))
    pool += [motion(Pose.from_translation([0.6, 0, 0])), motion(Pose(Rotation.about_z(0.2), [0.4, 0, 0]))]
    for _ in range(50):
        idx = rng.permutation(len(pool))
        prev = ParameterMask()
        for k in range(1, len(pool) + 1):
            mask = observability_report([pool[i] for i in idx[:k]]).mask
            assert set(prev.constrained()) <= set(mask.constrained())
            prev = mask


def test_floor_observation_validation():
    with pytest.raises(ValueError):
        FloorObservation([0, 0, 2], 1.0)
    with pytest.raises(ValueError):
        FloorObservation([0, 0, 1], -1.0)
    obs = FloorObservation.from_map([0, 0, 1], 1.2, Rotation.about_x(0.5))
    np.testing.assert_allclose(Rotation.about_x(0.5).apply(obs.normal), [0, 0, 1], atol=1e-12)
    with pytest.raises(ValueError):
        RobotKinematics([0, 0, -1], 0.0)


def test_parameter_mask_helpers():
    m = ParameterMask.of("t_x", "yaw") | ParameterMask.of("t_z")
    assert m.constrained() == ("t_x", "t_z", "yaw")
    assert m.missing() == ("t_y", "roll", "pitch")
    assert ParameterMask.full().complete
    with pytest.raises(ValueError):
        ParameterMask.of("bogus")
