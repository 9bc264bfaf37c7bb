import math

import numpy as np
import pytest

from pvgen.geometry import CameraPose
from pvgen.trajectory import (
    LINEAR_TRANSLATION,
    ROTATIONAL_TRANSLATION,
    ROTATIONAL_YAW,
    CameraPath,
    TrajectorySpec,
    linear_path,
    make_path,
    relative_yaw,
    reversed_motion,
    rotational_path,
    yaw_rotation,
)


def test_default_constants():
    assert TrajectorySpec.linear().translation_total == 0.0005
    rot = TrajectorySpec.rotational()
    assert (rot.rotation_total, rot.translation_total) == (0.45, 0.0001)
    assert TrajectorySpec().frames == 48


def test_spec_validation():
    with pytest.raises(ValueError):
        TrajectorySpec(kind="spiral")
    with pytest.raises(ValueError):
        TrajectorySpec(frames=1)
    with pytest.raises(ValueError):
        TrajectorySpec(translation_total=-1.0)


@pytest.mark.parametrize("seed", [0, 1, 99])
def test_linear_path_moves_straight_back(seed):
    start = CameraPose.from_center(yaw_rotation(0.2).T, [0.1, 0.0, -0.2])
    path = linear_path(start, TrajectorySpec.linear(), seed=seed)
    assert len(path) == 48
    delta = path.poses[-1].center - start.center
    np.testing.assert_allclose(delta, -LINEAR_TRANSLATION * start.forward, atol=1e-15)
    for p in path.poses:
        np.testing.assert_allclose(p.rotation, start.rotation)


def test_linear_wobble_is_bounded_and_seeded():
    spec = TrajectorySpec.linear()
    a = linear_path(CameraPose.identity(), spec, seed=1)
    b = linear_path(CameraPose.identity(), spec, seed=1)
    c = linear_path(CameraPose.identity(), spec, seed=2)
    assert a.phase == b.phase != c.phase
    heights = -a.centers()[:, 1]
    assert np.max(np.abs(heights)) <= spec.sine_amplitude + 1e-18
    assert np.ptp(heights) > 0


def test_rotational_path_endpoints():
    start = CameraPose.identity()
    path = rotational_path(start, TrajectorySpec.rotational())
    assert relative_yaw(path.poses[-1], start) == pytest.approx(ROTATIONAL_YAW, abs=1e-12)
    np.testing.assert_allclose(path.poses[-1].center, ROTATIONAL_TRANSLATION * start.right, atol=1e-18)
    yaws = [relative_yaw(p, start) for p in path.poses]
    assert np.all(np.diff(yaws) > 0)


def test_relative_yaw_sign_turns_toward_right():
    p = CameraPose(yaw_rotation(0.3).T, np.zeros(3))
    assert p.forward[0] > 0
    assert relative_yaw(p, CameraPose.identity()) == pytest.approx(0.3)


def test_zero_motion_path_is_static():
    spec = TrajectorySpec.linear(translation_total=0.0, sine_amplitude=0.0)
    path = make_path(CameraPose.identity(), spec, seed=0)
    assert all(p == CameraPose.identity() for p in path.poses)


def test_reversed_motion_mirrors_translation():
    path = linear_path(CameraPose.identity(), TrajectorySpec.linear(sine_amplitude=0.0), seed=0)
    rev = reversed_motion(path)
    np.testing.assert_allclose(rev[-1].center, [0, 0, LINEAR_TRANSLATION], atol=1e-15)
    rot = rotational_path(CameraPose.identity(), TrajectorySpec.rotational())
    rrev = reversed_motion(rot)
    assert relative_yaw(rrev[-1], rot.poses[0]) == pytest.approx(-ROTATIONAL_YAW, abs=1e-12)


def test_path_dict_roundtrip():
    path = make_path(CameraPose.identity(), TrajectorySpec.rotational(frames=5))
    back = CameraPath.from_dict(path.to_dict())
    assert back.to_dict() == path.to_dict()
