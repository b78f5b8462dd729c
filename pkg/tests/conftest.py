import numpy as np
import pytest
from hypothesis import strategies as st

from robocal.geometry import Pose, Rotation


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rotations():
    return (
        st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=4, max_size=4)
        .filter(lambda q: np.linalg.norm(q) > 1e-3)
        .map(Rotation.from_quaternion)
    )


def vectors(scale=2.0):
    return st.lists(st.floats(-scale, scale, allow_nan=False), min_size=3, max_size=3).map(np.array)


def poses():
    return st.builds(Pose, rotations(), vectors())


def random_pose(rng, scale=1.0):
    return Pose(Rotation.from_quaternion(rng.normal(size=4)), rng.uniform(-scale, scale, size=3))
