import numpy as np
import pytest

from robocal.poselog import POSE_COLUMNS, PoseLogError, read_pose_log, session_inputs, write_pose_log
from robocal.scenario import horizontal_script
from robocal.session import RobotKinematics
from robocal.simulator import SimConfig, pose_records, run_script


@pytest.fixture
def records():
    return pose_records(run_script(horizontal_script(), SimConfig(rng_seed=3)))


@pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
def test_round_trip(tmp_path, records, suffix):
    path = tmp_path / f"log{suffix}"
    write_pose_log(path, records)
    back = read_pose_log(path)
    assert len(back) == len(records)
    for a, b in zip(records, back):
        assert a.sample.timestamp == b.sample.timestamp
        np.testing.assert_allclose(a.sample.head_pose.as_matrix(), b.sample.head_pose.as_matrix(), atol=1e-15)
        np.testing.assert_allclose(a.sample.device_pose.as_matrix(), b.sample.device_pose.as_matrix(), atol=1e-15)
        assert a.floor_height == b.floor_height
        np.testing.assert_allclose(a.floor_normal_map, b.floor_normal_map, atol=1e-15)
        np.testing.assert_array_equal(a.head_to_foot, b.head_to_foot)


def test_session_inputs(records):
    samples, floor, kin = session_inputs(records, None)
    assert len(samples) == len(records) and len(floor) == 5
    np.testing.assert_allclose(kin.head_to_foot, [0, 0, -1.1], atol=1e-2)


def test_pose_only_csv(tmp_path, records):
    bare = [type(r)(r.sample) for r in records]
    path = tmp_path / "bare.csv"
    write_pose_log(path, bare)
    assert path.read_text().splitlines()[0] == ",".join(POSE_COLUMNS)
    samples, floor, kin = session_inputs(read_pose_log(path), RobotKinematics.upright(1.1))
    assert not floor


def test_malformed_line_is_named(tmp_path, records):
    path = tmp_path / "log.csv"
    write_pose_log(path, records * 4)
    lines = path.read_text().splitlines()
    lines[16] = lines[16].replace(",", ",oops", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(PoseLogError) as info:
        read_pose_log(path)
    assert info.value.line == 17
    assert "line 17" in str(info.value)


def test_malformed_jsonl_line(tmp_path, records):
    path = tmp_path / "log.jsonl"
    write_pose_log(path, records)
    lines = path.read_text().splitlines()
    lines[2] = lines[2][:-5]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(PoseLogError, match="line 3"):
        read_pose_log(path)


def test_missing_columns(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("timestamp,head_x\n0,0\n")
    with pytest.raises(PoseLogError, match="missing columns"):
        read_pose_log(path)


def test_empty_and_decreasing(tmp_path, records):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(PoseLogError):
        read_pose_log(path)
    path = tmp_path / "back.csv"
    write_pose_log(path, list(reversed(records)))
    with pytest.raises(PoseLogError, match="timestamps decrease"):
        read_pose_log(path)
