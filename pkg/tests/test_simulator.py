import math
from dataclasses import replace

import numpy as np
import pytest

from robocal.geometry import Pose, Rotation, rotation_distance
from robocal.scenario import horizontal_script, two_way_script
from robocal.simulator import (
    Hold,
    ShakeHead,
    SimConfig,
    SimState,
    observe,
    pose_records,
    run_script,
    shake_experiment,
    step,
    true_head_pose,
    truth_of,
)
from robocal.solver import calibrate

NOISELESS = SimConfig().noiseless()


def drive(cfg, command, seconds, rng, state=None):
    state = SimState() if state is None else state
    for _ in range(int(round(seconds / cfg.dt))):
        state = step(state, command, cfg, rng)
    return state


def test_step_noiseless_displacement(rng):
    s = SimState(dv=np.array([0.3, 0.0, 0.0]))
    s1 = step(s, (0.3, 0.0, 0.0), NOISELESS, rng)
    assert s1.base[0] == pytest.approx(0.003, abs=1e-15)
    np.testing.assert_array_equal(s1.base, s1.odom)
    assert s1.time == pytest.approx(0.01)


def test_step_acceleration_limit(rng):
    s1 = step(SimState(), (0.3, 0.0, 0.0), NOISELESS, rng)
    assert s1.dv[0] == pytest.approx(1.0 * NOISELESS.dt)


def test_step_deterministic_slip(rng):
    cfg = replace(NOISELESS, slip_mean=0.985)
    s = drive(cfg, (0.3, 0.0, 0.0), 2.0, rng, SimState(dv=np.array([0.3, 0.0, 0.0])))
    assert s.base[0] == pytest.approx(0.6 * 0.985, abs=1e-9)
    assert s.odom[0] == pytest.approx(0.6, abs=1e-9)


def headings(cfg, trials=1000):
    out = []
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        s = drive(cfg, (0.0, 0.0, 0.3), 2.0, rng, SimState(dv=np.array([0.0, 0.0, 0.3])))
        out.append(s.base[2])
    return np.array(out)


def test_rotation_heading_statistics():
    h = headings(SimConfig())
    assert h.mean() == pytest.approx(0.6 * 0.985, rel=0.01)
    # slip alone: 200 independent draws of 0.01 * 0.3 * dt
    slip_only = headings(replace(SimConfig(), gamma1=0.0, gamma2=0.0), 300)
    assert slip_only.std() == pytest.approx(0.01 * 0.3 * 0.01 * math.sqrt(200), rel=0.15)
    # velocity noise dominates and grows with gamma
    assert h.std() > 5 * slip_only.std()
    louder = headings(replace(SimConfig(), gamma1=0.08, gamma2=0.08), 300)
    assert louder.std() > 1.5 * h.std()


def test_slip_ratio_long_run(rng):
    cfg = SimConfig()
    s = drive(cfg, (0.3, 0.0, 0.0), 20.0, rng, SimState(dv=np.array([0.3, 0.0, 0.0])))
    ratio = math.hypot(*s.base[:2]) / math.hypot(*s.odom[:2])
    assert ratio == pytest.approx(0.985, rel=0.01)


def test_head_joints_follow_exactly(rng):
    s = step(SimState(), (0, 0, 0), SimConfig(), rng, joints=(0.2, -0.1))
    np.testing.assert_array_equal(s.joints, [0.2, -0.1])


def test_observe_noiseless_is_truth(rng):
    s = SimState(base=np.array([1.0, 2.0, 0.5]), odom=np.array([1.0, 2.0, 0.5]), joints=np.array([0.1, 0.2]))
    obs = observe(s, NOISELESS, rng, with_floor=True)
    tr = truth_of(s, NOISELESS)
    for got, want in ((obs.sample.head_pose, tr.head), (obs.sample.device_pose, tr.device)):
        np.testing.assert_allclose(got.as_matrix(), want.as_matrix(), atol=1e-12)
    # height = head height plus the vertical offset of the device
    assert obs.floor.height == pytest.approx(tr.device.translation[2], abs=1e-12)


def test_observe_device_noise_std(rng):
    cfg = SimConfig()
    s = SimState()
    truth = truth_of(s, cfg).device.translation
    d = np.array([observe(s, cfg, rng).sample.device_pose.translation for _ in range(10_000)]) - truth
    np.testing.assert_allclose(d.std(axis=0), 0.002, rtol=0.1)


def test_observe_floor_height_at_rest(rng):
    cfg = SimConfig()
    hs = [observe(SimState(), cfg, rng, with_floor=True).floor.height for _ in range(200)]
    assert np.mean(hs) == pytest.approx(1.1 + 0.12, abs=0.01)


def test_empty_script_single_observation():
    run = run_script([], SimConfig())
    assert len(run.keyframes) == 1 and len(run.observations) == 1
    head = Pose.from_translation([0, 0, 1.1])
    np.testing.assert_allclose(run.keyframe_truth[0].device.as_matrix(), (head @ SimConfig().x_true).as_matrix())


def test_two_way_script_structure():
    run = run_script(two_way_script(), NOISELESS, with_floor=False)
    # seven commands, the last one followed by an implicit hold
    assert len(run.keyframes) == 5
    turn_angles = [rotation_distance(a.head.rotation, b.head.rotation) for a, b in zip(run.keyframe_truth, run.keyframe_truth[1:])]
    np.testing.assert_allclose(turn_angles, 0.3, atol=1e-12)


def test_horizontal_script_floor_observations():
    run = run_script(horizontal_script(), SimConfig())
    assert sum(k.floor is not None for k in run.keyframes) == 5
    s = run.session()
    assert len(s.floor_observations) == 5 and s.kinematics is not None


@pytest.mark.parametrize("script,use_floor", [(two_way_script(), False), (horizontal_script(), True)])
def test_noiseless_end_to_end(script, use_floor):
    x = Pose(Rotation.from_rotvec([0.1, -0.2, 0.3]), [0.05, -0.1, 0.15])
    cfg = replace(NOISELESS, x_true=x)
    res = calibrate(run_script(script, cfg).session(use_floor=use_floor))
    assert rotation_distance(res.x.rotation, x.rotation) < 1e-9
    assert np.linalg.norm(res.x.translation - x.translation) < 1e-9


def test_determinism():
    a = run_script(horizontal_script(), SimConfig(rng_seed=7))
    b = run_script(horizontal_script(), SimConfig(rng_seed=7))
    c = run_script(horizontal_script(), SimConfig(rng_seed=8))
    ma = [o.sample.device_pose.as_matrix() for o in a.observations]
    mb = [o.sample.device_pose.as_matrix() for o in b.observations]
    mc = [o.sample.device_pose.as_matrix() for o in c.observations]
    assert all(np.array_equal(p, q) for p, q in zip(ma, mb)) and len(ma) == len(mb)
    assert not all(np.array_equal(p, q) for p, q in zip(ma, mc))


def test_invalid_duration():
    with pytest.raises(ValueError):
        run_script([Hold(0.0)], SimConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0)
    with pytest.raises(ValueError):
        SimConfig(gamma1=-1)
    with pytest.raises(ValueError):
        SimConfig(slip_mean=0)


def test_pose_records_map_normal():
    run = run_script(horizontal_script(), NOISELESS)
    recs = pose_records(run)
    np.testing.assert_allclose(recs[0].floor_normal_map, [0, 0, 1], atol=1e-12)
    np.testing.assert_allclose(recs[0].head_to_foot, [0, 0, -1.1], atol=1e-12)


def test_shake_noiseless_no_latency():
    recs = shake_experiment(NOISELESS, ShakeHead(0.4, 1.0, 2.0), encoder_latency=0.0)
    assert max(r.uncorrected_error for r in recs) < 1e-12
    assert max(r.corrected_error for r in recs) < 1e-12


def test_shake_lag_oracle():
    amp, freq, lat, h = 0.3, 1.0, 0.1, 1.1
    recs = shake_experiment(NOISELESS, ShakeHead(amp, freq, 2.0), encoder_latency=lat)
    w = 2 * math.pi * freq

    def pitch(t):
        return amp * math.sin(w * t) if t > 0 else 0.0

    x_t = NOISELESS.x_true.translation
    for r in recs:
        e = pitch(r.time) - pitch(r.time - lat)
        assert r.uncorrected_error == pytest.approx(h * abs(math.sin(e)), abs=1e-9)
        # after correction only the device offset, swung by the residual tilt, remains
        v = -Rotation.about_y(pitch(r.time)).apply(x_t)
        resid = Rotation.about_y(-e).apply(v) - v
        assert r.corrected_error == pytest.approx(np.linalg.norm(resid[:2]), abs=1e-9)
        assert r.correction_angle == pytest.approx(abs(e), abs=1e-9)
    peak = max(r.uncorrected_error for r in recs)
    assert peak == pytest.approx(h * math.sin(amp * w * lat), rel=0.05)
    assert max(r.corrected_error for r in recs) < 0.025


def test_shake_without_correction_matches_uncorrected():
    recs = shake_experiment(SimConfig(), encoder_latency=0.15, correct=False)
    assert all(r.corrected_error == r.uncorrected_error for r in recs)


def test_shake_default_separation():
    recs = shake_experiment(SimConfig())
    assert max(r.uncorrected_error for r in recs) > 0.3
    assert max(r.corrected_error for r in recs) < 0.1


def test_shake_true_foot_is_stationary():
    # zero amplitude: nothing moves, the chain is exact, so any error is noise
    recs = shake_experiment(SimConfig(), ShakeHead(0.0, 1.0, 1.0), encoder_latency=0.15)
    assert max(r.uncorrected_error for r in recs) < 0.02


def test_shake_negative_latency():
    with pytest.raises(ValueError):
        shake_experiment(SimConfig(), encoder_latency=-0.1)


def test_true_head_pose_height():
    assert true_head_pose(SimState(), SimConfig()).translation[2] == pytest.approx(1.1)
