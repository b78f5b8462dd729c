"""Pose-log files: one settled head/device sample per record.

Consecutive records form one transition each. Two encodings are accepted.

CSV, with a header row::

    timestamp,head_x,head_y,head_z,head_qw,head_qx,head_qy,head_qz,
    device_x,device_y,device_z,device_qw,device_qx,device_qy,device_qz
    [,floor_nx,floor_ny,floor_nz,floor_height,foot_x,foot_y,foot_z]

JSON lines, one object per line::

    {"timestamp": 0.0,
     "head": {"translation": [x, y, z], "rotation": [qw, qx, qy, qz]},
     "device": {"translation": [...], "rotation": [...]},
     "floor": {"normal": [nx, ny, nz], "height": h, "head_to_foot": [bx, by, bz]}}

Translations are in meters, rotations are unit quaternions (w, x, y, z).
The optional floor block gives the floor normal in the device's map frame,
the device height above the floor, and the head-to-foot vector in the head
frame; CSV floor cells may be left empty on records without a floor
observation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import Pose, Rotation
from .session import FloorObservation, PosePairSample, RobotKinematics

POSE_COLUMNS = [
    "timestamp",
    "head_x", "head_y", "head_z", "head_qw", "head_qx", "head_qy", "head_qz",
    "device_x", "device_y", "device_z", "device_qw", "device_qx", "device_qy", "device_qz",
]
FLOOR_COLUMNS = ["floor_nx", "floor_ny", "floor_nz", "floor_height", "foot_x", "foot_y", "foot_z"]


class PoseLogError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class PoseRecord:
    sample: PosePairSample
    floor_normal_map: np.ndarray | None = None
    floor_height: float | None = None
    head_to_foot: np.ndarray | None = None

    @property
    def has_floor(self) -> bool:
        return self.floor_normal_map is not None

    def floor_observation(self) -> FloorObservation:
        return FloorObservation.from_map(self.floor_normal_map, self.floor_height, self.sample.device_pose.rotation)


def _pose(translation: Sequence[float], quat: Sequence[float]) -> Pose:
    return Pose(Rotation.from_quaternion(quat), np.asarray(translation, dtype=float))


def _pose_fields(p: Pose) -> list[float]:
    return [*p.translation.tolist(), *p.rotation.as_quaternion().tolist()]


def _finite(values: Iterable[float]) -> list[float]:
    out = [float(v) for v in values]
    if not all(math.isfinite(v) for v in out):
        raise ValueError("non-finite value")
    return out


def _record_from_values(ts, head, dev, floor_n=None, floor_h=None, foot=None) -> PoseRecord:
    sample = PosePairSample(_pose(head[:3], head[3:]), _pose(dev[:3], dev[3:]), float(ts))
    if floor_n is None:
        return PoseRecord(sample)
    n = np.asarray(floor_n, dtype=float)
    n = n / np.linalg.norm(n)
    return PoseRecord(sample, n, float(floor_h), None if foot is None else np.asarray(foot, dtype=float))


def _parse_csv(text: str) -> list[PoseRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise PoseLogError("empty pose log") from None
    missing = [c for c in POSE_COLUMNS if c not in header]
    if missing:
        raise PoseLogError(f"missing columns {missing}", 1)
    idx = {c: i for i, c in enumerate(header)}
    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            vals = _finite(row[idx[c]] for c in POSE_COLUMNS)
            floor_n = floor_h = foot = None
            if all(c in idx for c in FLOOR_COLUMNS[:4]) and row[idx["floor_height"]].strip():
                floor_n = _finite(row[idx[c]] for c in FLOOR_COLUMNS[:3])
                floor_h = _finite([row[idx["floor_height"]]])[0]
                if all(c in idx for c in FLOOR_COLUMNS[4:]) and row[idx["foot_x"]].strip():
                    foot = _finite(row[idx[c]] for c in FLOOR_COLUMNS[4:])
            records.append(_record_from_values(vals[0], vals[1:8], vals[8:15], floor_n, floor_h, foot))
        except (ValueError, KeyError) as exc:
            raise PoseLogError(str(exc), line) from exc
    return records


def _parse_jsonl(text: str) -> list[PoseRecord]:
    records = []
    for line, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            head = _finite(obj["head"]["translation"]) + _finite(obj["head"]["rotation"])
            dev = _finite(obj["device"]["translation"]) + _finite(obj["device"]["rotation"])
            if len(head) != 7 or len(dev) != 7:
                raise ValueError("poses need 3 translation and 4 quaternion components")
            floor = obj.get("floor")
            floor_n = floor_h = foot = None
            if floor:
                floor_n = _finite(floor["normal"])
                floor_h = float(floor["height"])
                foot = _finite(floor["head_to_foot"]) if "head_to_foot" in floor else None
            records.append(_record_from_values(obj["timestamp"], head, dev, floor_n, floor_h, foot))
        except (ValueError, KeyError, TypeError) as exc:
            raise PoseLogError(f"{type(exc).__name__}: {exc}", line) from exc
    return records


def read_pose_log(path: str | Path) -> list[PoseRecord]:
    """Parse a pose log; ``.jsonl``/``.json`` files are JSON lines, anything else CSV."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    records = _parse_jsonl(text) if path.suffix in (".jsonl", ".json") else _parse_csv(text)
    if not records:
        raise PoseLogError("pose log has no records")
    for prev, cur in zip(records, records[1:]):
        if cur.sample.timestamp < prev.sample.timestamp:
            raise PoseLogError(f"timestamps decrease ({prev.sample.timestamp} -> {cur.sample.timestamp})")
    return records


def _fmt(v: float) -> str:
    return repr(float(v))


def write_pose_log(path: str | Path, records: Sequence[PoseRecord]) -> None:
    path = Path(path)
    with_floor = any(r.has_floor for r in records)
    if path.suffix in (".jsonl", ".json"):
        lines = []
        for r in records:
            s = r.sample
            obj = {
                "timestamp": s.timestamp,
                "head": {"translation": s.head_pose.translation.tolist(),
                         "rotation": s.head_pose.rotation.as_quaternion().tolist()},
                "device": {"translation": s.device_pose.translation.tolist(),
                           "rotation": s.device_pose.rotation.as_quaternion().tolist()},
            }
            if r.has_floor:
                obj["floor"] = {"normal": r.floor_normal_map.tolist(), "height": r.floor_height}
                if r.head_to_foot is not None:
                    obj["floor"]["head_to_foot"] = r.head_to_foot.tolist()
            lines.append(json.dumps(obj))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    header = POSE_COLUMNS + (FLOOR_COLUMNS if with_floor else [])
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            s = r.sample
            row = [_fmt(s.timestamp)] + [_fmt(v) for v in _pose_fields(s.head_pose) + _pose_fields(s.device_pose)]
            if with_floor:
                if r.has_floor:
                    row += [_fmt(v) for v in r.floor_normal_map] + [_fmt(r.floor_height)]
                    row += [_fmt(v) for v in r.head_to_foot] if r.head_to_foot is not None else ["", "", ""]
                else:
                    row += [""] * len(FLOOR_COLUMNS)
            w.writerow(row)


def session_inputs(records: Sequence[PoseRecord], default_kinematics: RobotKinematics | None = None):
    """Samples, floor observations and kinematics ready for a calibration session."""
    samples = [r.sample for r in records]
    floor = [r.floor_observation() for r in records if r.has_floor]
    kin = default_kinematics
    feet = [r.head_to_foot for r in records if r.has_floor and r.head_to_foot is not None]
    if floor and feet:
        b = feet[0]
        kin = RobotKinematics(b, abs(float(b[2])) if b[2] != 0 else float(np.linalg.norm(b)))
    return samples, floor, kin
