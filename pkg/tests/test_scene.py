"""Scenario tests."""
import math

import pytest

from pyisac.comm import CodebookPair
from pyisac.exceptions import (
    ConfigError,
    DegenerateGeometryError,
    NoVisibleTargetError,
    OutOfDurationError,
    ParseError,
)
from pyisac.geometry import BoundingBox, Pose, VehiclePose
from pyisac.radarsim import PixelGrid, PointScatterer
from pyisac.scene import (
    GroundTruthLabel,
    ScenarioConfig,
    Scatterer,
    TrajectoryModel,
    VehicleClass,
    VehicleSpec,
    advance_scenario,
    build_targets,
    frame_labels,
    ground_truth_bbox,
    project_to_slant_plane,
    read_labels,
    scenario_preset,
    true_beam_indices,
    write_labels,
)

from .util import sample_path

RADAR = Pose((0.0, 0.0, 5.0), 0.0, math.atan2(4.0, 30.0))


def test_straight_trajectory():
    model = TrajectoryModel("straight_road", 5.0, (20.0, -10.0, 0.0), math.pi / 2)

    pose = model.pose_at(2.0)

    assert pose.position == pytest.approx((20.0, 0.0, 0.0))
    assert pose.velocity == pytest.approx((0.0, 5.0, 0.0))


def test_roundabout_stays_on_the_ring():
    model = TrajectoryModel(
        "roundabout", 6.0, (47.0, 0.0, 0.0), math.pi / 2, turn_radius=12.0
    )

    for t in (0.0, 1.0, 3.5):
        pose = model.pose_at(t)
        x, y, _ = pose.position
        assert math.hypot(x - 35.0, y) == pytest.approx(12.0)
        assert pose.heading == pytest.approx(math.pi / 2 + 6.0 * t / 12.0)


def test_intersection_turn_ends_with_new_heading():
    model = TrajectoryModel(
        "intersection",
        4.0,
        (30.0, -8.0, 0.0),
        math.pi / 2,
        turn_radius=4.0,
        turn_after_m=2.0,
        turn_angle=-math.pi / 2,
    )

    before = model.pose_at(0.25)
    after = model.pose_at(5.0)

    assert before.heading == math.pi / 2
    assert after.heading == pytest.approx(0.0)
    assert after.velocity == pytest.approx((4.0, 0.0, 0.0))


def test_trajectory_validation():
    with pytest.raises(ConfigError):
        TrajectoryModel("teleport", 1.0)
    with pytest.raises(ConfigError):
        TrajectoryModel("roundabout", 1.0)
    with pytest.raises(ConfigError):
        TrajectoryModel("straight_road", -1.0)


def test_vehicle_class_and_scatterer_validation():
    assert VehicleClass.from_tag("truck").extent[0] == 9.0
    with pytest.raises(ConfigError):
        VehicleClass.from_tag("bicycle")
    with pytest.raises(ConfigError):
        Scatterer((0.0, 0.0, 0.0), 1.0, 2 * math.pi)
    with pytest.raises(ConfigError):
        Scatterer((0.0, 0.0, 0.0), -1.0, 0.0)


def test_scatterer_follows_vehicle_heading():
    scatterer = Scatterer((2.0, 0.0, 0.5), 1.0, 0.0)

    point = scatterer.to_world(VehiclePose((10.0, 0.0, 0.0), math.pi / 2, (0.0, 3.0, 0.0)))

    assert point.position == pytest.approx((10.0, 2.0, 0.5))
    assert point.velocity == (0.0, 3.0, 0.0)


def test_scenario_preset_is_seeded():
    first = scenario_preset("A", 2, 3, seed=11)
    again = scenario_preset("A", 2, 3, seed=11)
    other = scenario_preset("A", 2, 3, seed=12)

    assert first == again
    assert first != other
    assert first.ve_ids == (0, 1)
    assert len(first.vehicles) == 5
    assert first.n_steps == 20


@pytest.mark.parametrize("kind", ["A", "B", "C"])
def test_scenario_preset_keeps_ves_when_clutter_grows(kind):
    alone = scenario_preset(kind, 2, 0, seed=5)

    for n_clutter in (1, 3, 6):
        cluttered = scenario_preset(kind, 2, n_clutter, seed=5)
        assert cluttered.vehicles[:2] == alone.vehicles
        assert len(cluttered.vehicles) == 2 + n_clutter
        assert not any(v.is_ve for v in cluttered.vehicles[2:])


@pytest.mark.parametrize("kind", ["A", "B", "C"])
def test_scenario_presets_stay_in_bounds(kind):
    config = scenario_preset(kind, 2, 2, seed=3)

    assert config.validate() is config
    assert len(advance_scenario(config, config.n_steps)) == 4


def test_scenario_preset_capacity():
    with pytest.raises(ConfigError):
        scenario_preset("B", 4, 7, seed=0)
    with pytest.raises(ConfigError):
        scenario_preset("D", 1, 0, seed=0)


def test_scenario_validation():
    leaving = VehicleSpec(
        0, "sedan", TrajectoryModel("straight_road", 40.0, (20.0, 0.0, 0.0), math.pi / 2)
    )
    config = ScenarioConfig("A", 2.0, (leaving,))

    with pytest.raises(ConfigError):
        config.validate()

    twice = VehicleSpec(0, "sedan", TrajectoryModel("straight_road", 0.0, (20.0, 0.0, 0.0)))
    with pytest.raises(ConfigError):
        ScenarioConfig("A", 1.0, (twice, twice)).validate()


def test_advance_scenario_rejects_steps_outside_duration():
    config = scenario_preset("A", 1, 0, seed=0, frames=5)

    assert len(advance_scenario(config, 0)) == 1
    with pytest.raises(OutOfDurationError):
        advance_scenario(config, 6)
    with pytest.raises(OutOfDurationError):
        advance_scenario(config, -1)


def test_targets_have_fixed_phases():
    config = scenario_preset("A", 1, 1, seed=4)

    first = build_targets(config)
    scatterers = first[0].scatterers

    assert len(scatterers) == (12 if first[0].vehicle_class.tag == "truck" else 8)
    assert all(0.0 <= s.phase < 2 * math.pi for s in scatterers)
    assert [s.phase for s in build_targets(config)[0].scatterers] == [
        s.phase for s in scatterers
    ]
    truck = [t for t in first if t.vehicle_class.tag == "truck"]
    assert all(len(t.scatterers) == 12 for t in truck)


def test_ground_truth_bbox_of_a_single_scatterer():
    grid = PixelGrid.uniform(RADAR, 101, 61, 10.0, 60.0, 0.6)
    point = RADAR.slant_point(35.0, 0.0)

    box = ground_truth_bbox([PointScatterer(tuple(point), 1.0)], RADAR, grid, min_pixels=2)

    assert box.x == pytest.approx(30.0 / 61)
    assert box.y == pytest.approx(50.0 / 101)
    assert box.w == pytest.approx(2.0 / 61)
    assert box.h == pytest.approx(2.0 / 101)


def test_ground_truth_bbox_drops_weak_and_distant_scatterers():
    grid = PixelGrid.uniform(RADAR, 101, 61, 10.0, 60.0, 0.6)
    strong = PointScatterer(tuple(RADAR.slant_point(30.0, 0.0)), 10.0)
    weak = PointScatterer(tuple(RADAR.slant_point(32.0, 0.0)), 1e-4)
    near = PointScatterer(tuple(RADAR.slant_point(31.0, 0.0)), 10.0)
    far = PointScatterer(tuple(RADAR.slant_point(30.0, 0.5)), 10.0)

    box = ground_truth_bbox([strong, weak, near, far], RADAR, grid)

    assert box.corners[3] * 101 == pytest.approx(42.0, abs=1e-6)
    assert box.x == pytest.approx(30.0 / 61)


def test_ground_truth_bbox_raises_without_visible_scatterers():
    grid = PixelGrid.uniform(RADAR, 11, 11, 10.0, 20.0, 0.5)

    with pytest.raises(NoVisibleTargetError):
        ground_truth_bbox([], RADAR, grid)
    with pytest.raises(NoVisibleTargetError):
        ground_truth_bbox([PointScatterer(tuple(RADAR.slant_point(40.0, 0.0)), 1.0)], RADAR, grid)


def test_true_beam_indices_noiseless():
    codebooks = CodebookPair.dft(8, 4)

    beam_h, beam_v = true_beam_indices(
        VehiclePose((25.0, 8.0, 1.7)),
        Pose((0.0, 0.0, 5.0)),
        codebooks.horizontal,
        codebooks.vertical,
        snr_db=None,
    )

    assert 1 <= beam_h <= 8
    assert 1 <= beam_v <= 4
    # The VE sits to the left of the BS.
    assert beam_h == 6


def test_frame_labels_cover_visible_vehicles():
    config = scenario_preset("A", 1, 1, seed=2)
    grid = PixelGrid.uniform(config.site, 128, 64, 10.0, 60.0, math.radians(60))

    labels = frame_labels(config, 0, grid, CodebookPair.dft(4, 4), {}, snr_db=None)

    assert [label.target_id for label in labels] == [0, 1]
    assert labels[0].is_ve and not labels[1].is_ve
    assert all(label.frame == 0 for label in labels)


def test_labels_file(tmp_path):
    label = GroundTruthLabel(3, 1, BoundingBox(0.5, 0.4, 0.1, 0.05), "truck", 2, 3, True)
    path = tmp_path / "labels.jsonl"

    write_labels(path, [label], {"seed": 0})

    assert read_labels(path) == [label]
    assert [item.target_id for item in read_labels(sample_path("labels.jsonl"))] == [3, 7]
    with pytest.raises(ParseError) as err:
        read_labels(sample_path("labels_truncated.jsonl"))
    assert err.value.line_number == 3


def test_ground_truth_bbox_grows_with_vehicle_size():
    grid = PixelGrid.uniform(RADAR, 256, 128, 10.0, 60.0, 0.6)
    pose = VehiclePose((35.0, 0.0, 0.0))
    boxes = []
    for length in (2.0, 4.0, 6.0, 8.0, 10.0, 12.0):
        half_l, half_w = length / 2.0, 0.2 * length
        corners = [(sx * half_l, sy * half_w, 0.5) for sx in (-1, 1) for sy in (-1, 1)]
        scatterers = [Scatterer(offset, 1.0, 0.0).to_world(pose) for offset in corners]
        boxes.append(ground_truth_bbox(scatterers, RADAR, grid))

    for smaller, larger in zip(boxes, boxes[1:]):
        assert larger.w >= smaller.w
        assert larger.h >= smaller.h
    assert boxes[-1].w > boxes[0].w
    assert boxes[-1].h > boxes[0].h


def test_project_to_slant_plane():
    rng, az = project_to_slant_plane((10.0, 10.0, 0.0), Pose((0.0, 0.0, 0.0)))

    assert rng == pytest.approx(math.sqrt(200.0))
    assert az == pytest.approx(math.pi / 4)
    with pytest.raises(DegenerateGeometryError):
        project_to_slant_plane((1.0, 2.0, 3.0), Pose((1.0, 2.0, 3.0)))
