"""Geometry tests."""
import math

import numpy as np
import pytest

from pyisac.exceptions import DegenerateGeometryError
from pyisac.geometry import ArrayFrame, BoundingBox, Pose, VehiclePose, unit


def test_pose_axes_are_orthonormal():
    pose = Pose((1.0, 2.0, 5.0), yaw=0.7, tilt=0.2)

    axes = np.array([pose.boresight, pose.lateral, pose.normal])

    np.testing.assert_allclose(axes @ axes.T, np.eye(3), atol=1e-12)
    assert pose.normal[2] > 0


def test_direction_angles_round_trip_slant_point():
    pose = Pose((0.0, 0.0, 5.0), yaw=0.3, tilt=math.atan2(4.0, 30.0))
    point = pose.slant_point(25.0, -0.4)

    rng, az, el = pose.direction_angles(point)

    assert rng == pytest.approx(25.0)
    assert az == pytest.approx(-0.4)
    assert el == pytest.approx(0.0, abs=1e-12)


def test_direction_angles_rejects_origin():
    pose = Pose((1.0, 1.0, 1.0))

    with pytest.raises(DegenerateGeometryError):
        pose.direction_angles(np.array([1.0, 1.0, 1.0]))


def test_unit_rejects_zero_vector():
    with pytest.raises(DegenerateGeometryError):
        unit(np.zeros(3))


def test_vehicle_pose_raised():
    pose = VehiclePose((1.0, 2.0, 0.0), heading=0.5, velocity=(1.0, 0.0, 0.0))

    raised = pose.raised(1.7)

    assert raised.position == (1.0, 2.0, 1.7)
    assert raised.heading == 0.5
    assert raised.velocity == (1.0, 0.0, 0.0)


def test_bounding_box_validation():
    with pytest.raises(ValueError):
        BoundingBox(0.5, 0.5, 0.0, 0.1)
    with pytest.raises(ValueError):
        BoundingBox(1.5, 0.5, 0.1, 0.1)
    with pytest.raises(ValueError):
        BoundingBox(0.5, float("nan"), 0.1, 0.1)


def test_bounding_box_from_corners_clamps_and_enforces_minimum():
    box = BoundingBox.from_corners(0.2, 0.3, 0.2, 0.3, min_w=0.1, min_h=0.04)

    assert box.x == pytest.approx(0.2)
    assert box.y == pytest.approx(0.3)
    assert box.w == pytest.approx(0.1)
    assert box.h == pytest.approx(0.04)

    edge = BoundingBox.from_corners(0.0, 0.0, 0.1, 0.1, min_w=0.4)

    assert edge.corners[0] == 0.0
    assert edge.w == pytest.approx(0.25)
    assert edge.x == pytest.approx(0.125)


def test_array_frames():
    facing = ArrayFrame.facing(0.0)

    az, el = facing.angles(np.array([1.0, 1.0, 0.0]))
    assert az == pytest.approx(math.pi / 4)
    assert el == pytest.approx(0.0)

    az, el = facing.angles(np.array([1.0, 0.0, -1.0]))
    assert az == pytest.approx(0.0)
    assert el == pytest.approx(-math.pi / 4)

    roof = ArrayFrame.rooftop(0.0)
    _, el = roof.angles(np.array([0.0, 0.0, 1.0]))
    assert el == pytest.approx(0.0)
    az, _ = roof.angles(np.array([0.0, 0.0, 1.0]))
    assert az == pytest.approx(0.0)
