"""Frames, poses and image boxes shared by the radar and the communication side."""
from dataclasses import dataclass, field
import math
from typing import Any, Tuple

import numpy as np
from numpy.typing import NDArray

from pyisac.exceptions import DegenerateGeometryError

_TINY = 1e-12


def as_point(value) -> NDArray[Any]:
    """Return a float64 3-vector."""
    point = np.asarray(value, dtype=np.float64).reshape(3)
    return point


def distance(p: NDArray[Any], q: NDArray[Any]) -> float:
    """Return the Euclidean distance between two points."""
    return float(np.linalg.norm(as_point(p) - as_point(q)))


def unit(vector: NDArray[Any]) -> NDArray[Any]:
    """Normalize a vector, rejecting the zero vector."""
    vector = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    if norm < _TINY:
        raise DegenerateGeometryError("Cannot take the direction of a zero vector")
    return vector / norm


@dataclass(frozen=True)
class Pose:
    """Position and orientation of a sensor or an antenna array.

    `yaw` is the boresight heading in the ground plane (0 = +x, counterclockwise)
    and `tilt` the depression of the boresight below the horizon.
    """

    position: Tuple[float, float, float]
    yaw: float = 0.0
    tilt: float = 0.0

    @property
    def origin(self) -> NDArray[Any]:
        """Return the position as an array."""
        return as_point(self.position)

    @property
    def boresight(self) -> NDArray[Any]:
        """Return the unit boresight vector."""
        return np.array(
            [
                math.cos(self.tilt) * math.cos(self.yaw),
                math.cos(self.tilt) * math.sin(self.yaw),
                -math.sin(self.tilt),
            ]
        )

    @property
    def lateral(self) -> NDArray[Any]:
        """Return the horizontal unit vector to the left of the boresight."""
        return np.array([-math.sin(self.yaw), math.cos(self.yaw), 0.0])

    @property
    def normal(self) -> NDArray[Any]:
        """Return the unit normal of the slant plane (points upwards)."""
        return np.cross(self.boresight, self.lateral)

    def direction_angles(self, point: NDArray[Any]) -> Tuple[float, float, float]:
        """Return (distance, azimuth, elevation) of a point in this frame."""
        delta = as_point(point) - self.origin
        rng = float(np.linalg.norm(delta))
        if rng < _TINY:
            raise DegenerateGeometryError(
                f"Point [{tuple(point)}] coincides with the frame origin"
            )
        az = math.atan2(float(delta @ self.lateral), float(delta @ self.boresight))
        el = math.asin(max(-1.0, min(1.0, float(delta @ self.normal) / rng)))
        return rng, az, el

    def slant_point(self, rng: float, az: float) -> NDArray[Any]:
        """Return the world point at (range, azimuth) on the slant plane."""
        return self.origin + rng * (
            math.cos(az) * self.boresight + math.sin(az) * self.lateral
        )


@dataclass(frozen=True)
class VehiclePose:
    """Kinematic state of a vehicle (or of its rooftop antenna)."""

    position: Tuple[float, float, float]
    heading: float = 0.0
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def origin(self) -> NDArray[Any]:
        """Return the position as an array."""
        return as_point(self.position)

    def raised(self, dz: float) -> "VehiclePose":
        """Return the same pose lifted by dz metres."""
        x, y, z = self.position
        return VehiclePose((x, y, z + dz), self.heading, self.velocity)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized image coordinates.

    `x` and `w` run along image columns (angle), `y` and `h` along rows (range).
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        """Validate the box."""
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"Non-finite bounding box [{self}]")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"Bounding box needs positive size, got [{self}]")
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"Bounding box center outside the image [{self}]")

    @classmethod
    def from_corners(
        cls, x0: float, y0: float, x1: float, y1: float, min_w: float = 0.0,
        min_h: float = 0.0,
    ) -> "BoundingBox":
        """Build a clamped box from its corners, enforcing a minimum size."""
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        half_w = max(x1 - x0, min_w) / 2.0
        half_h = max(y1 - y0, min_h) / 2.0
        left, right = max(0.0, cx - half_w), min(1.0, cx + half_w)
        top, bottom = max(0.0, cy - half_h), min(1.0, cy + half_h)
        return cls(
            x=(left + right) / 2.0,
            y=(top + bottom) / 2.0,
            w=right - left,
            h=bottom - top,
        )

    @property
    def corners(self) -> Tuple[float, float, float, float]:
        """Return (x0, y0, x1, y1)."""
        return (
            self.x - self.w / 2.0,
            self.y - self.h / 2.0,
            self.x + self.w / 2.0,
            self.y + self.h / 2.0,
        )

    @property
    def area(self) -> float:
        """Return the box area."""
        return self.w * self.h


@dataclass(frozen=True)
class ArrayFrame:
    """Orientation of a planar antenna array.

    Elements run along `h_axis` (horizontal index) and `v_axis` (vertical
    index); `boresight` completes the frame.
    """

    boresight: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    h_axis: Tuple[float, float, float] = (0.0, 1.0, 0.0)
    v_axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    _axes: NDArray[Any] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Cache the axes as a matrix."""
        axes = np.array([self.boresight, self.h_axis, self.v_axis], dtype=np.float64)
        object.__setattr__(self, "_axes", axes)

    @classmethod
    def facing(cls, yaw: float) -> "ArrayFrame":
        """Return a vertical array facing the given heading (base station)."""
        return cls(
            boresight=(math.cos(yaw), math.sin(yaw), 0.0),
            h_axis=(-math.sin(yaw), math.cos(yaw), 0.0),
            v_axis=(0.0, 0.0, 1.0),
        )

    @classmethod
    def rooftop(cls, heading: float) -> "ArrayFrame":
        """Return a horizontal array lying on a vehicle roof."""
        return cls(
            boresight=(0.0, 0.0, 1.0),
            h_axis=(math.cos(heading), math.sin(heading), 0.0),
            v_axis=(-math.sin(heading), math.cos(heading), 0.0),
        )

    def angles(self, direction: NDArray[Any]) -> Tuple[float, float]:
        """Return (azimuth, elevation) of a world direction in this frame."""
        d = unit(direction)
        b, h, v = self._axes @ d
        el = math.asin(max(-1.0, min(1.0, float(v))))
        az = math.atan2(float(h), float(b))
        return az, el
