"""Reference detector tests."""
import math

import numpy as np
import pytest
from scipy import ndimage

from pyisac.comm import ArrayGeometry, CodebookPair, steering_vector
from pyisac.detect import (
    CfarConfig,
    box_direction,
    cfar_detect_and_cluster,
    cfar_mask,
    class_scores_for_box,
    detect_frame,
    infer_beam_logits,
    nms,
    read_detections,
    threshold_classes,
    write_detections,
)
from pyisac.exceptions import (
    ConfigError,
    DegenerateGeometryError,
    ParseError,
    SchemaMismatchError,
)
from pyisac.geometry import BoundingBox, Pose
from pyisac.radarsim import PixelGrid, RangeAngleMap

from .util import build_box, build_detection, sample_path

SITE = Pose((0.0, 0.0, 5.0), 0.0, math.atan2(4.0, 30.0))
BS = Pose((0.0, 0.0, 5.0))


def _grid(n_r: int = 101, n_a: int = 101) -> PixelGrid:
    return PixelGrid(np.linspace(10.0, 60.0, n_r), np.linspace(-0.5, 0.5, n_a), SITE)


def test_cfar_config_validation_and_scale():
    cfg = CfarConfig(guard=1, train=3, pfa=1e-2)

    assert cfg.n_train == 81 - 9
    assert (1 + cfg.scale / cfg.n_train) ** -cfg.n_train == pytest.approx(1e-2)
    with pytest.raises(ConfigError):
        CfarConfig(train=0)
    with pytest.raises(ConfigError):
        CfarConfig(pfa=1.0)
    with pytest.raises(ConfigError):
        CfarConfig(min_pixels=0)


def test_cfar_isolates_noiseless_points():
    image = np.zeros((64, 64))
    image[20, 20] = 1.0
    image[40, 45] = 0.5
    cfg = CfarConfig(guard=1, train=3)

    mask = cfar_mask(image, cfg)
    found = cfar_detect_and_cluster(image, cfg)

    assert mask.sum() == 2
    assert mask[20, 20] and mask[40, 45]
    assert len(found) == 2
    (first, conf_first), (second, _) = sorted(found, key=lambda item: item[0].x)
    assert conf_first == pytest.approx(1.0)
    assert first.x == pytest.approx(20 / 64)
    assert first.y == pytest.approx(20 / 64)
    assert first.w == pytest.approx(2 / 64)
    assert second.x == pytest.approx(45 / 64)
    assert second.y == pytest.approx(40 / 64)


def test_cfar_on_empty_image():
    assert cfar_detect_and_cluster(np.zeros((32, 32)), CfarConfig()) == []


def test_cfar_rejects_non_images():
    with pytest.raises(ValueError):
        cfar_mask(np.zeros(16), CfarConfig())


def test_cfar_noise_floor_suppresses_weak_exceedances():
    image = np.zeros((32, 32))
    image[10, 10] = 1.0
    cfg = CfarConfig(guard=1, train=3, floor_db=15.0)

    assert cfar_mask(image, cfg, noise_power=0.01).sum() == 1
    assert cfar_mask(image, cfg, noise_power=0.1).sum() == 0


def test_cfar_false_alarm_rate():
    rng = np.random.default_rng(12)
    power = rng.exponential(1.0, (200, 200))
    cfg = CfarConfig(guard=1, train=3, pfa=1e-2)

    mask = cfar_mask(np.sqrt(power), cfg)

    rate = mask[4:-4, 4:-4].mean()
    assert 0.007 < rate < 0.013


def test_cfar_merges_nearby_exceedances():
    image = np.zeros((32, 32))
    image[10, 10] = 1.0
    image[10, 13] = 1.0

    apart = cfar_detect_and_cluster(image, CfarConfig(guard=1, train=3))
    merged = cfar_detect_and_cluster(image, CfarConfig(guard=1, train=3, merge_radius=2))

    assert len(apart) == 2
    assert len(merged) == 1
    assert merged[0][0].w == pytest.approx(3 / 32)

    dropped = cfar_detect_and_cluster(image, CfarConfig(guard=1, train=3, min_pixels=2))
    assert dropped == []


def test_box_direction_on_boresight():
    grid = _grid()
    box = BoundingBox(50 / 101, 40 / 101, 0.04, 0.04)

    az, el = box_direction(box, grid, BS)

    rng = grid.ranges[40]
    assert az == pytest.approx(0.0, abs=1e-12)
    assert el == pytest.approx(math.asin((1.7 - 5.0) / rng))


def test_box_direction_off_grid():
    grid = _grid()

    with pytest.raises(DegenerateGeometryError):
        box_direction(BoundingBox(0.999, 0.5, 0.001, 0.04), grid, BS)


def test_infer_beam_logits_points_at_the_box():
    grid = _grid()
    codebooks = CodebookPair.dft(8, 4)
    col = 85
    box = BoundingBox(col / 101, 40 / 101, 0.04, 0.04)

    logits_h, logits_v = infer_beam_logits(box, grid, BS, codebooks)

    az, el = box_direction(box, grid, BS)
    sines = codebooks.horizontal.design_sines()
    nearest = int(np.argmin(np.abs(sines - math.cos(el) * math.sin(az))))
    assert logits_h.shape == (8,)
    assert logits_v.shape == (4,)
    assert int(np.argmax(logits_h)) == nearest
    assert logits_h.max() <= 0.0
    assert np.all(np.isfinite(logits_v))


def test_class_scores_prefer_matching_length():
    grid = _grid(501, 101)
    sedan = BoundingBox(0.5, 0.5, 2 / 101, 46 / 501)
    truck = BoundingBox(0.5, 0.5, 2 / 101, 90 / 501)

    scores = class_scores_for_box(sedan, grid)

    assert scores[0] == pytest.approx(1.0)
    assert int(np.argmax(scores)) == 0
    assert int(np.argmax(class_scores_for_box(truck, grid))) == 2
    assert all(0.0 <= s <= 1.0 for s in scores)


def test_nms_chain():
    first = build_detection(BoundingBox(0.30, 0.5, 0.2, 0.2), 0.9)
    second = build_detection(BoundingBox(0.32, 0.5, 0.2, 0.2), 0.8)
    third = build_detection(BoundingBox(0.34, 0.5, 0.2, 0.2), 0.7)

    kept = nms([third, second, first], 0.7)

    assert kept == [first, third]


def test_threshold_classes():
    det = build_detection(class_scores=(0.1, 0.2, 0.9), logits_h=(1.0, 2.0, 3.0, 4.0))

    label, (logits_h, logits_v) = threshold_classes(det, 0.25)

    assert label == "truck"
    assert logits_h.tolist() == [1.0, 2.0, 3.0, 4.0]
    assert logits_v.shape == (4,)
    assert threshold_classes(build_detection(class_scores=(0.2, 0.2, 0.2)), 0.25)[0] is None


def test_detection_validation():
    with pytest.raises(SchemaMismatchError):
        build_detection(class_scores=(0.5, 0.5))
    with pytest.raises(ValueError):
        build_detection(confidence=1.5)
    with pytest.raises(ValueError):
        build_detection(logits_h=(0.0, float("inf"), 0.0, 0.0))


def test_detect_frame_finds_a_point_target():
    grid = _grid(64, 64)
    values = np.zeros((64, 64))
    values[30, 40] = 1.0
    values[29:32, 39:42] = np.maximum(values[29:32, 39:42], 0.3)
    rmap = RangeAngleMap(values, empty=False, peak=1.0)
    codebooks = CodebookPair.dft(4, 4)

    dets = detect_frame(rmap, grid, BS, codebooks, CfarConfig(guard=2, train=4))

    assert len(dets) == 1
    det = dets[0]
    assert det.bbox.x == pytest.approx(40 / 64)
    assert det.bbox.y == pytest.approx(30 / 64)
    assert len(det.beam_logits_h) == 4
    assert len(det.class_scores) == 3


def test_detect_frame_on_empty_map():
    grid = _grid(8, 8)
    rmap = RangeAngleMap(np.zeros((8, 8)), empty=True)

    assert detect_frame(rmap, grid, BS, CodebookPair.dft(2, 2)) == []


def test_detections_file(tmp_path):
    det = build_detection(build_box(0.3, 0.6), 0.75, (0.0, -1.0, -2.0, -3.0), (-1.0, 0.0, -1.0, -2.0))
    path = tmp_path / "detections.jsonl"

    write_detections(path, [(4, det)], 4, 4, {"seed": 1})

    assert read_detections(path) == [(4, det)]


def test_read_detections_sample():
    dets = read_detections(sample_path("detections.jsonl"))

    assert [frame for frame, _ in dets] == [0, 0]
    assert dets[0][1].confidence == 0.9
    assert dets[1][1].beam_logits_h[3] == 0.0


def test_read_detections_errors(tmp_path):
    path = tmp_path / "detections.jsonl"
    record = (
        '{"frame": 0, "x": 0.5, "y": 0.5, "w": 0.1, "h": 0.1, "conf": 0.5,'
        ' "class_scores": [0.1, 0.2, 0.3], "logits_h": [0.0, 0.0], "logits_v": [0.0, 0.0]}\n'
    )

    path.write_text(record, encoding="utf-8")
    with pytest.raises(ParseError, match="header"):
        read_detections(path)

    path.write_text('{"header": {"n_h": 4, "n_v": 2}}\n' + record, encoding="utf-8")
    with pytest.raises(SchemaMismatchError):
        read_detections(path)

    path.write_text(
        '{"header": {"n_h": 2, "n_v": 2}}\n' + record.replace('"conf": 0.5', '"conf": 2.0'),
        encoding="utf-8",
    )
    with pytest.raises(ParseError) as err:
        read_detections(path)
    assert err.value.line_number == 2


def _noise(seed: int, shape=(64, 64)) -> np.ndarray:
    """Return unit-power circular complex Gaussian noise."""
    gen = np.random.default_rng(seed)
    return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / math.sqrt(2.0)


@pytest.mark.parametrize("noise_power", [None, 1.0])
def test_clusters_follow_the_cfar_mask(noise_power):
    field = _noise(3, (96, 96))
    for row, col, amp in ((20, 20, 30.0), (50, 70, 8.0), (75, 30, 4.0), (80, 82, 3.0)):
        field[row, col] += amp
    image = np.abs(field)
    cfg = CfarConfig(guard=1, train=3, pfa=1e-2, floor_db=3.0)

    _, components = ndimage.label(cfar_mask(image, cfg, noise_power), structure=np.ones((3, 3), bool))

    assert len(cfar_detect_and_cluster(image, cfg, noise_power)) == components


def test_cfar_finds_a_strong_injection():
    cfg = CfarConfig(guard=1, train=3, pfa=1e-4)
    hits = 0
    for seed in range(100):
        gen = np.random.default_rng([seed, 1])
        row, col = (int(v) for v in gen.integers(8, 56, 2))
        field = _noise(seed)
        field[row, col] += math.sqrt(1000.0)

        found = cfar_detect_and_cluster(np.abs(field), cfg, noise_power=1.0)

        if len(found) == 1:
            box = found[0][0]
            inside_x = abs(box.x * 64 - col) <= box.w * 64 / 2
            inside_y = abs(box.y * 64 - row) <= box.h * 64 / 2
            hits += inside_x and inside_y
    assert hits >= 95


def test_cfar_separates_two_injections():
    cfg = CfarConfig(guard=1, train=3, pfa=1e-4)
    points = [(20, 20), (40, 45)]
    field = _noise(9)
    for row, col in points:
        field[row, col] += math.sqrt(1000.0)

    found = cfar_detect_and_cluster(np.abs(field), cfg, noise_power=1.0)

    assert len(found) == 2
    centres = sorted((box.y * 64, box.x * 64) for box, _ in found)
    for (row, col), (y, x) in zip(points, centres):
        assert y == pytest.approx(row, abs=1.0)
        assert x == pytest.approx(col, abs=1.0)


def test_infer_beam_logits_depend_only_on_the_box_centre():
    grid = _grid()
    codebooks = CodebookPair.dft(16, 4)
    narrow = BoundingBox(0.3, 0.6, 0.02, 0.02)
    wide = BoundingBox(0.3, 0.6, 0.2, 0.1)
    moved = BoundingBox(0.35, 0.6, 0.02, 0.02)

    first = infer_beam_logits(narrow, grid, BS, codebooks)
    second = infer_beam_logits(wide, grid, BS, codebooks)

    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])
    assert not np.array_equal(first[0], infer_beam_logits(moved, grid, BS, codebooks)[0])


def test_infer_beam_logits_argmax_matches_the_gain_table():
    grid = _grid()
    codebooks = CodebookPair.dft(16, 4)
    gen = np.random.default_rng(21)
    for _ in range(100):
        row, col = gen.uniform(5.0, 95.0, 2)
        box = BoundingBox(col / 101, row / 101, 0.03, 0.03)

        logits_h, logits_v = infer_beam_logits(box, grid, BS, codebooks)

        az, el = box_direction(box, grid, BS)
        response = steering_vector(ArrayGeometry(16, 4), az, el)
        best = int(np.argmax(np.abs(codebooks.matrix.conj().T @ response)))
        assert (int(np.argmax(logits_h)), int(np.argmax(logits_v))) == divmod(best, 4)


def test_detect_frame_recall():
    grid = _grid(128, 128)
    codebooks = CodebookPair.dft(4, 4)
    cfg = CfarConfig(guard=2, train=4, pfa=1e-3)
    found = total = 0
    for seed in range(30):
        gen = np.random.default_rng(seed)
        values = 0.01 * np.abs(_noise(seed, (128, 128)))
        targets = []
        while len(targets) < 3:
            row, col = (int(v) for v in gen.integers(12, 116, 2))
            if all(max(abs(row - r), abs(col - c)) >= 16 for r, c in targets):
                targets.append((row, col))
        for row, col in targets:
            values[row - 1 : row + 2, col - 1 : col + 2] = 0.5
            values[row, col] = 1.0
        rmap = RangeAngleMap(values, empty=False, peak=1.0)

        dets = detect_frame(rmap, grid, BS, codebooks, cfg, noise_power=1e-4)

        for row, col in targets:
            total += 1
            found += any(
                abs(d.bbox.y * 128 - row) <= 1.5 and abs(d.bbox.x * 128 - col) <= 1.5
                for d in dets
            )
    assert found / total >= 0.9
