"""Synthetic vehicular scenarios and their ground truth."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import logging
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from pyisac.comm import (
    ArrayGeometry,
    BeamReport,
    ChannelRealization,
    Codebook,
    CodebookPair,
    beam_training,
    generate_channel,
)
from pyisac.const import (
    BBOX_DISTANCE_CAP_M,
    BBOX_POWER_FLOOR_DB,
    CLASS_EXTENT,
    CLASS_LOOKUP,
    CLASS_RCS,
    CLASS_TRUCK,
    LABEL_SNR_DB,
    MIN_BOX_PIXELS,
    RADAR_HEIGHT_M,
    SCENE_A,
    SCENE_B,
    SCENE_BOUNDS_M,
    SCENE_C,
    SCENE_LOOKUP,
    TIME_STEP_S,
    TRAJECTORY_INTERSECTION,
    TRAJECTORY_ROUNDABOUT,
    TRAJECTORY_STRAIGHT,
    TWO_PI,
    VE_ROOF_OFFSET_M,
)
from pyisac.exceptions import (
    ConfigError,
    NoVisibleTargetError,
    OutOfDurationError,
    ParseError,
)
from pyisac.geometry import BoundingBox, Pose, VehiclePose, as_point
from pyisac.io import PathLike, read_jsonl, require, write_jsonl
from pyisac.radarsim import PixelGrid, PointScatterer

_LOGGER = logging.getLogger(__name__)

_SCATTERER_STREAM = 1
_PRESET_STREAM = 2

TRAJECTORY_KINDS = (TRAJECTORY_STRAIGHT, TRAJECTORY_ROUNDABOUT, TRAJECTORY_INTERSECTION)


@dataclass(frozen=True)
class VehicleClass:
    """Vehicle class tag and its (length, width, height) extent in metres."""

    tag: str
    extent: Tuple[float, float, float]

    def __post_init__(self) -> None:
        """Validate the class."""
        if self.tag not in CLASS_EXTENT:
            raise ConfigError(f"Unsupported vehicle class [{self.tag}]")
        if min(self.extent) <= 0:
            raise ConfigError(f"Extent must be positive [{self.extent}]")

    @classmethod
    def from_tag(cls, tag: str) -> VehicleClass:
        """Return the class with its default extent."""
        if tag not in CLASS_EXTENT:
            raise ConfigError(f"Unsupported vehicle class [{tag}]")
        return cls(tag, CLASS_EXTENT[tag])


@dataclass(frozen=True)
class Scatterer:
    """Scatterer on a vehicle body, offset in the body frame (x forward, z up)."""

    offset: Tuple[float, float, float]
    rcs: float
    phase: float

    def __post_init__(self) -> None:
        """Validate the scatterer."""
        if self.rcs < 0:
            raise ConfigError(f"RCS must be nonnegative [{self.rcs}]")
        if not 0.0 <= self.phase < TWO_PI:
            raise ConfigError(f"Phase must be in [0, 2pi) [{self.phase}]")

    def to_world(self, pose: VehiclePose) -> PointScatterer:
        """Place the scatterer in the world for a vehicle pose."""
        dx, dy, dz = self.offset
        c, s = math.cos(pose.heading), math.sin(pose.heading)
        x, y, z = pose.position
        return PointScatterer(
            position=(x + c * dx - s * dy, y + s * dx + c * dy, z + dz),
            rcs=self.rcs,
            phase=self.phase,
            velocity=pose.velocity,
        )


@dataclass(frozen=True)
class TrajectoryModel:
    """Kinematics of one vehicle.

    Roundabouts turn counterclockwise around the centre on the left of the
    start heading. Intersections drive `turn_after_m` straight, turn by
    `turn_angle` on an arc of `turn_radius`, then continue straight.
    """

    kind: str
    speed: float
    start: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    heading: float = 0.0
    turn_radius: float = 0.0
    turn_after_m: float = 0.0
    turn_angle: float = 0.0

    def __post_init__(self) -> None:
        """Validate the parameters."""
        if self.kind not in TRAJECTORY_KINDS:
            raise ConfigError(f"Unsupported trajectory [{self.kind}]")
        if self.speed < 0:
            raise ConfigError(f"Speed must be nonnegative [{self.speed}]")
        if self.kind == TRAJECTORY_ROUNDABOUT and self.turn_radius <= 0:
            raise ConfigError("Roundabout needs a positive [turn_radius]")
        if (
            self.kind == TRAJECTORY_INTERSECTION
            and self.turn_angle != 0.0
            and self.turn_radius <= 0
        ):
            raise ConfigError("Turning trajectory needs a positive [turn_radius]")

    def _forward(self, heading: float) -> NDArray[Any]:
        return np.array([math.cos(heading), math.sin(heading), 0.0])

    def _left(self, heading: float) -> NDArray[Any]:
        return np.array([-math.sin(heading), math.cos(heading), 0.0])

    def _arc(
        self, origin: NDArray[Any], heading: float, turn: float, arc: float
    ) -> Tuple[NDArray[Any], float]:
        """Advance `arc` metres on a circle; the sign of `turn` picks the side."""
        side = 1.0 if turn >= 0 else -1.0
        centre = origin + side * self.turn_radius * self._left(heading)
        phi = side * arc / self.turn_radius
        rel = origin - centre
        c, s = math.cos(phi), math.sin(phi)
        rotated = np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1], rel[2]])
        return centre + rotated, heading + phi

    def pose_at(self, time_s: float) -> VehiclePose:
        """Return the pose after driving for time_s seconds."""
        start = as_point(self.start)
        travelled = self.speed * time_s
        if self.kind == TRAJECTORY_ROUNDABOUT:
            position, heading = self._arc(start, self.heading, 1.0, travelled)
        elif self.kind == TRAJECTORY_INTERSECTION and self.turn_angle != 0.0:
            position, heading = self._turning(start, travelled)
        else:
            position, heading = start + travelled * self._forward(self.heading), self.heading
        velocity = self.speed * self._forward(heading)
        return VehiclePose(tuple(position), heading, tuple(velocity))

    def _turning(self, start: NDArray[Any], travelled: float) -> Tuple[NDArray[Any], float]:
        """Return the position along a straight-arc-straight path."""
        if travelled <= self.turn_after_m:
            return start + travelled * self._forward(self.heading), self.heading
        entry = start + self.turn_after_m * self._forward(self.heading)
        arc_length = self.turn_radius * abs(self.turn_angle)
        along = min(travelled - self.turn_after_m, arc_length)
        position, heading = self._arc(entry, self.heading, self.turn_angle, along)
        rest = travelled - self.turn_after_m - arc_length
        if rest > 0:
            position = position + rest * self._forward(heading)
        return position, heading


@dataclass(frozen=True)
class VehicleSpec:
    """Configured vehicle."""

    id: int
    vehicle_class: str
    trajectory: TrajectoryModel
    is_ve: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    """Scene definition; `site` is the co-located radar and BS pose."""

    kind: str
    duration_s: float
    vehicles: Tuple[VehicleSpec, ...]
    seed: int = 0
    dt: float = TIME_STEP_S
    site: Pose = Pose((0.0, 0.0, RADAR_HEIGHT_M))
    bounds: Tuple[float, float, float, float] = SCENE_BOUNDS_M

    @property
    def n_steps(self) -> int:
        """Return the index of the last valid time step."""
        return int(math.floor(self.duration_s / self.dt + 1e-9))

    @property
    def ve_ids(self) -> Tuple[int, ...]:
        """Return the ids of the communication users."""
        return tuple(v.id for v in self.vehicles if v.is_ve)

    @property
    def bs_pose(self) -> Pose:
        """Return the base station array pose (vertical array, no tilt)."""
        return Pose(self.site.position, self.site.yaw, 0.0)

    def validate(self) -> ScenarioConfig:
        """Check classes, ids and that every vehicle stays in bounds."""
        if self.kind not in SCENE_LOOKUP:
            raise ConfigError(f"Unsupported scene kind [{self.kind}]")
        if self.duration_s < 0 or self.dt <= 0:
            raise ConfigError(f"Invalid duration [{self.duration_s}] or step [{self.dt}]")
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"Duplicate vehicle ids [{ids}]")
        x_min, x_max, y_min, y_max = self.bounds
        for vehicle in self.vehicles:
            VehicleClass.from_tag(vehicle.vehicle_class)
            for t in range(self.n_steps + 1):
                x, y, _ = vehicle.trajectory.pose_at(t * self.dt).position
                if not (x_min <= x <= x_max and y_min <= y <= y_max):
                    raise ConfigError(
                        f"Vehicle [{vehicle.id}] leaves the scene at step [{t}]"
                    )
        return self


@dataclass(frozen=True)
class VehicleTarget:
    """Extended radar target."""

    id: int
    vehicle_class: VehicleClass
    trajectory: TrajectoryModel
    scatterers: Tuple[Scatterer, ...]
    is_ve: bool

    def world_scatterers(self, pose: VehiclePose) -> List[PointScatterer]:
        """Return the scatterers placed at a pose."""
        return [s.to_world(pose) for s in self.scatterers]

    def antenna_pose(self, pose: VehiclePose) -> VehiclePose:
        """Return the pose of the rooftop antenna."""
        return pose.raised(self.vehicle_class.extent[2] + VE_ROOF_OFFSET_M)


@dataclass(frozen=True)
class GroundTruthLabel:
    """Label of one target in one frame; beam indices are 1-based."""

    frame: int
    target_id: int
    bbox: BoundingBox
    vehicle_class: str
    beam_h: int
    beam_v: int
    is_ve: bool = False


def _template(vehicle_class: VehicleClass) -> List[Tuple[Tuple[float, float, float], float]]:
    """Return (offset, RCS share) for the scatterers of a class."""
    length, width, height = vehicle_class.extent
    hl, hw = length / 2.0, width / 2.0
    layout = [
        ((hl, hw, 0.5), 0.5),
        ((hl, -hw, 0.5), 0.5),
        ((-hl, hw, 0.5), 0.5),
        ((-hl, -hw, 0.5), 0.5),
        ((0.3 * length, hw, 0.3), 0.3),
        ((-0.3 * length, -hw, 0.3), 0.3),
        ((0.15 * length, 0.0, height), 0.2),
        ((-0.15 * length, 0.0, height), 0.2),
    ]
    if vehicle_class.tag == CLASS_TRUCK:
        layout += [
            ((-hl, hw, height), 0.4),
            ((-hl, -hw, height), 0.4),
            ((0.1 * length, hw, height), 0.4),
            ((0.1 * length, -hw, height), 0.4),
        ]
    return layout


def _build_target(spec: VehicleSpec, seed: int) -> VehicleTarget:
    """Attach scatterers with fixed random phases to a configured vehicle."""
    vehicle_class = VehicleClass.from_tag(spec.vehicle_class)
    rng = np.random.default_rng([seed, _SCATTERER_STREAM, spec.id])
    layout = _template(vehicle_class)
    phases = rng.uniform(0.0, TWO_PI, len(layout))
    base = CLASS_RCS[vehicle_class.tag]
    scatterers = tuple(
        Scatterer(offset, base * share, float(phase) % TWO_PI)
        for (offset, share), phase in zip(layout, phases)
    )
    return VehicleTarget(
        spec.id, vehicle_class, spec.trajectory, scatterers, spec.is_ve
    )


@lru_cache(maxsize=64)
def build_targets(config: ScenarioConfig) -> Tuple[VehicleTarget, ...]:
    """Return the targets of a scenario in configuration order."""
    return tuple(_build_target(spec, config.seed) for spec in config.vehicles)


def advance_scenario(
    config: ScenarioConfig, t: int
) -> List[Tuple[VehicleTarget, VehiclePose]]:
    """Return every target with its pose at time step t."""
    if not 0 <= t <= config.n_steps:
        raise OutOfDurationError(
            f"Step [{t}] outside the scenario (0..{config.n_steps})"
        )
    return [
        (target, target.trajectory.pose_at(t * config.dt))
        for target in build_targets(config)
    ]


def project_to_slant_plane(point: NDArray[Any], radar_pose: Pose) -> Tuple[float, float]:
    """Return (range, azimuth) of a point seen from the radar."""
    rng, az, _ = radar_pose.direction_angles(point)
    return rng, az


def ground_truth_bbox(
    scatterers: Sequence[PointScatterer],
    radar_pose: Pose,
    grid: PixelGrid,
    power_floor_db: float = BBOX_POWER_FLOOR_DB,
    distance_cap_m: float = BBOX_DISTANCE_CAP_M,
    min_pixels: int = MIN_BOX_PIXELS,
) -> BoundingBox:
    """Project the relevant scatterers of a vehicle and box them."""
    if not scatterers:
        raise NoVisibleTargetError("Vehicle has no scatterers")
    positions = np.array([s.position for s in scatterers], dtype=float)
    centroid = positions.mean(axis=0)
    ranges = np.linalg.norm(positions - radar_pose.origin[None, :], axis=1)
    power = np.array([s.rcs for s in scatterers]) / np.maximum(ranges, 1e-12) ** 4
    keep = power >= power.max() * 10.0 ** (power_floor_db / 10.0)
    keep &= np.linalg.norm(positions - centroid[None, :], axis=1) <= distance_cap_m
    rows: List[float] = []
    cols: List[float] = []
    for position in positions[keep]:
        rng, az = project_to_slant_plane(position, radar_pose)
        row, col = grid.pixel_of(rng, az)
        if grid.contains(row, col):
            rows.append(row)
            cols.append(col)
    if not rows:
        raise NoVisibleTargetError("No scatterer survives filtering")
    n_r, n_a = grid.shape
    return BoundingBox.from_corners(
        min(cols) / n_a,
        min(rows) / n_r,
        max(cols) / n_a,
        max(rows) / n_r,
        min_w=min_pixels / n_a,
        min_h=min_pixels / n_r,
    )


def true_beam_indices(
    ve_pose: VehiclePose,
    bs_pose: Pose,
    codebook_h: Codebook,
    codebook_v: Codebook,
    channel: Optional[ChannelRealization] = None,
    rx_codebook: Optional[CodebookPair] = None,
    snr_db: Optional[float] = LABEL_SNR_DB,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[int, int]:
    """Return the 1-based beam pair selected by training at the labelling SNR.

    Without a channel, one is drawn for the given poses.
    """
    generator = rng if rng is not None else np.random.default_rng(0)
    if channel is None:
        channel = generate_channel(
            bs_pose,
            ve_pose,
            generator,
            bs_geometry=ArrayGeometry(codebook_h.n, codebook_v.n),
        )
    if rx_codebook is None:
        rx_codebook = CodebookPair.dft(channel.ve_geometry.n_h, channel.ve_geometry.n_v)
    report: BeamReport = beam_training(
        channel, codebook_h, codebook_v, rx_codebook, snr_db, generator
    )
    return report.f_h, report.f_v


def frame_labels(
    config: ScenarioConfig,
    t: int,
    grid: PixelGrid,
    codebooks: CodebookPair,
    channels: Mapping[int, ChannelRealization],
    rx_codebook: Optional[CodebookPair] = None,
    snr_db: Optional[float] = LABEL_SNR_DB,
    rng: Optional[np.random.Generator] = None,
) -> List[GroundTruthLabel]:
    """Return the labels of every visible vehicle at step t."""
    labels = []
    for target, pose in advance_scenario(config, t):
        try:
            bbox = ground_truth_bbox(
                target.world_scatterers(pose), config.site, grid
            )
        except NoVisibleTargetError:
            _LOGGER.debug("Target %s not visible at step %s", target.id, t)
            continue
        beam_h, beam_v = true_beam_indices(
            target.antenna_pose(pose),
            config.bs_pose,
            codebooks.horizontal,
            codebooks.vertical,
            channels.get(target.id),
            rx_codebook,
            snr_db,
            rng,
        )
        labels.append(
            GroundTruthLabel(
                frame=t,
                target_id=target.id,
                bbox=bbox,
                vehicle_class=target.vehicle_class.tag,
                beam_h=beam_h,
                beam_v=beam_v,
                is_ve=target.is_ve,
            )
        )
    return labels


def write_labels(
    path: PathLike, labels: Sequence[GroundTruthLabel], meta: Dict[str, object]
) -> None:
    """Write labels as newline-delimited records."""
    write_jsonl(
        path,
        (
            {
                "frame": label.frame,
                "target_id": label.target_id,
                "x": label.bbox.x,
                "y": label.bbox.y,
                "w": label.bbox.w,
                "h": label.bbox.h,
                "class": label.vehicle_class,
                "beam_h": label.beam_h,
                "beam_v": label.beam_v,
                "is_ve": label.is_ve,
            }
            for label in labels
        ),
        header=meta,
    )


def read_labels(path: PathLike) -> List[GroundTruthLabel]:
    """Read labels written by write_labels."""
    labels = []
    for line_number, record in read_jsonl(path):
        if "header" in record:
            continue
        try:
            labels.append(
                GroundTruthLabel(
                    frame=int(require(record, "frame", line_number)),
                    target_id=int(require(record, "target_id", line_number)),
                    bbox=BoundingBox(
                        *(float(require(record, key, line_number)) for key in "xywh")
                    ),
                    vehicle_class=str(require(record, "class", line_number)),
                    beam_h=int(require(record, "beam_h", line_number)),
                    beam_v=int(require(record, "beam_v", line_number)),
                    is_ve=bool(record.get("is_ve", False)),
                )
            )
        except ParseError:
            raise
        except (TypeError, ValueError) as ex:
            raise ParseError(str(ex), line_number) from ex
    return labels


def _pick_classes(rng: np.random.Generator, count: int) -> List[str]:
    """Draw vehicle classes."""
    return [CLASS_LOOKUP[int(i)] for i in rng.integers(0, len(CLASS_LOOKUP), count)]


def _straight_road(rng: np.random.Generator, duration: float) -> List[TrajectoryModel]:
    """Three lanes along y in alternating directions, seen broadside from the radar."""
    lanes = ((22.0, math.pi / 2.0), (26.0, -math.pi / 2.0), (30.0, math.pi / 2.0))
    slots = np.arange(-15.0, 15.1, 10.0)
    lane_speed = rng.uniform(5.0, 10.0, len(lanes))
    trajectories = []
    for item in range(len(lanes) * len(slots)):
        lane, slot = divmod(item, len(slots))
        x, heading = lanes[lane]
        y = slots[slot] - math.copysign(lane_speed[lane] * duration / 2.0, math.sin(heading))
        trajectories.append(
            TrajectoryModel(TRAJECTORY_STRAIGHT, float(lane_speed[lane]), (x, float(y), 0.0), heading)
        )
    return trajectories


def _roundabout(rng: np.random.Generator, _duration: float) -> List[TrajectoryModel]:
    """Vehicles sharing one ring, evenly spaced slots."""
    centre = np.array([35.0, 0.0])
    radius = 12.0
    speed = float(rng.uniform(4.0, 7.0))
    slots = np.arange(10) * TWO_PI / 10.0
    trajectories = []
    for slot in slots:
        theta = float(slot)
        start = centre + radius * np.array([math.cos(theta), math.sin(theta)])
        trajectories.append(
            TrajectoryModel(
                TRAJECTORY_ROUNDABOUT,
                speed,
                (float(start[0]), float(start[1]), 0.0),
                theta + math.pi / 2.0,
                turn_radius=radius,
            )
        )
    return trajectories


def _intersection(rng: np.random.Generator, _duration: float) -> List[TrajectoryModel]:
    """Two crossing roads meeting at (32, 0); queued vehicles may turn."""
    approaches = (
        ((30.0, -8.0), math.pi / 2.0),
        ((34.0, 8.0), -math.pi / 2.0),
        ((24.0, -2.0), 0.0),
        ((40.0, 2.0), math.pi),
    )
    queue_speed = rng.uniform(3.0, 6.0, len(approaches))
    turns = rng.choice([0.0, math.pi / 2.0, -math.pi / 2.0], len(approaches) * 3)
    trajectories = []
    for item in range(len(approaches) * 3):
        approach, queue = divmod(item, 3)
        (x, y), heading = approaches[approach]
        back = 10.0 * queue
        start = (x - back * math.cos(heading), y - back * math.sin(heading), 0.0)
        trajectories.append(
            TrajectoryModel(
                TRAJECTORY_INTERSECTION,
                float(queue_speed[approach]),
                start,
                heading,
                turn_radius=4.0,
                turn_after_m=back + 2.0,
                turn_angle=float(turns[item]),
            )
        )
    return trajectories


_PRESETS = {
    SCENE_A: _straight_road,
    SCENE_B: _roundabout,
    SCENE_C: _intersection,
}


def scenario_preset(
    kind: str,
    n_ve: int,
    n_clutter: int,
    seed: int,
    frames: int = 20,
    dt: float = TIME_STEP_S,
) -> ScenarioConfig:
    """Return a seeded straight-road (A), roundabout (B) or intersection (C) scene.

    The first n_ve vehicles are communication users. Their slots and classes
    depend only on the seed, so adding clutter leaves them in place.
    """
    if kind not in _PRESETS:
        raise ConfigError(f"Unsupported scene kind [{kind}]")
    count = n_ve + n_clutter
    capacity = {SCENE_A: 12, SCENE_B: 10, SCENE_C: 12}[kind]
    if n_ve < 0 or n_clutter < 0 or count > capacity:
        raise ConfigError(
            f"Scene [{kind}] holds at most {capacity} vehicles, got [{count}]"
        )
    duration = frames * dt
    layout = np.random.default_rng([seed, _PRESET_STREAM, 0])
    trajectories = _PRESETS[kind](layout, duration)
    slot_classes = _pick_classes(layout, capacity)
    order = [int(i) for i in layout.permutation(capacity)]
    clutter = np.random.default_rng([seed, _PRESET_STREAM, 1])
    slots = order[:n_ve] + [int(i) for i in clutter.permutation(order[n_ve:])[:n_clutter]]
    classes = [slot_classes[i] for i in order[:n_ve]] + _pick_classes(clutter, n_clutter)
    vehicles = tuple(
        VehicleSpec(index, classes[index], trajectories[slot], index < n_ve)
        for index, slot in enumerate(slots)
    )
    tilt = math.atan2(RADAR_HEIGHT_M - 1.0, 30.0)
    return ScenarioConfig(
        kind=kind,
        duration_s=duration,
        vehicles=vehicles,
        seed=seed,
        dt=dt,
        site=Pose((0.0, 0.0, RADAR_HEIGHT_M), 0.0, tilt),
    ).validate()
