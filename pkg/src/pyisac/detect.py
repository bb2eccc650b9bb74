"""Reference detector over range-angle images and the detections file format."""
from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from pyisac.comm import CodebookPair
from pyisac.const import (
    BEAM_LOGIT_SHARPNESS,
    C_TARGET,
    CFAR_FLOOR_DB,
    CFAR_GUARD,
    CFAR_MERGE_RADIUS,
    CFAR_PFA,
    CFAR_TRAIN,
    CLASS_EXTENT,
    CLASS_LOOKUP,
    CLASS_SCORE_SIGMA,
    EPS_PROB,
    GAMMA_CLASS,
    MAX_DETECTIONS,
    MIN_BOX_PIXELS,
    NMS_IOU,
    TWO_PI,
    VE_NOMINAL_HEIGHT_M,
)
from pyisac.deteval import iou
from pyisac.exceptions import (
    ConfigError,
    DegenerateGeometryError,
    ParseError,
    SchemaMismatchError,
)
from pyisac.geometry import BoundingBox, Pose
from pyisac.io import PathLike, read_jsonl, require, write_jsonl
from pyisac.radarsim import PixelGrid, RangeAngleMap

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Detection:
    """Detected target with class scores and horizontal/vertical beam logits."""

    bbox: BoundingBox
    confidence: float
    class_scores: Tuple[float, ...]
    beam_logits_h: Tuple[float, ...]
    beam_logits_v: Tuple[float, ...]

    def __post_init__(self) -> None:
        """Validate the detection."""
        if len(self.class_scores) != C_TARGET:
            raise SchemaMismatchError(
                f"Expected {C_TARGET} class scores, got [{len(self.class_scores)}]"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"Confidence outside [0, 1] [{self.confidence}]")
        if any(not 0.0 <= s <= 1.0 for s in self.class_scores):
            raise ValueError(f"Class scores outside [0, 1] [{self.class_scores}]")
        if not all(math.isfinite(v) for v in self.beam_logits_h + self.beam_logits_v):
            raise ValueError("Beam logits must be finite")


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR and clustering options.

    `floor_db` is an extra threshold above the known image noise power,
    applied only when that power is supplied.
    """

    guard: int = CFAR_GUARD
    train: int = CFAR_TRAIN
    pfa: float = CFAR_PFA
    min_pixels: int = 1
    merge_radius: int = 0
    floor_db: float = CFAR_FLOOR_DB
    max_detections: int = MAX_DETECTIONS

    def __post_init__(self) -> None:
        """Validate the configuration."""
        if self.guard < 0 or self.train < 1:
            raise ConfigError(f"Need guard >= 0 and train >= 1 [{self.guard}, {self.train}]")
        if not 0.0 < self.pfa < 1.0:
            raise ConfigError(f"pfa must be in (0, 1) [{self.pfa}]")
        if self.min_pixels < 1 or self.merge_radius < 0 or self.max_detections < 1:
            raise ConfigError("Invalid clustering limits")

    @property
    def n_train(self) -> int:
        """Return the number of training cells in the ring."""
        outer = 2 * (self.guard + self.train) + 1
        inner = 2 * self.guard + 1
        return outer * outer - inner * inner

    @property
    def scale(self) -> float:
        """Return the CA-CFAR threshold factor for exponential noise power."""
        n = self.n_train
        return n * (self.pfa ** (-1.0 / n) - 1.0)


@dataclass(frozen=True)
class _Cluster:
    row0: int
    row1: int
    col0: int
    col1: int
    confidence: float


def _power(image: NDArray[Any]) -> NDArray[Any]:
    """Return the squared magnitude of a 2D image."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"Expected a 2D image, got shape [{image.shape}]")
    return image * image


def cfar_threshold(image: NDArray[Any], cfg: CfarConfig) -> NDArray[Any]:
    """Return the per-pixel CA-CFAR power threshold."""
    power = _power(image)
    outer = 2 * (cfg.guard + cfg.train) + 1
    inner = 2 * cfg.guard + 1
    outer_sum = ndimage.uniform_filter(power, size=outer, mode="reflect") * outer**2
    inner_sum = ndimage.uniform_filter(power, size=inner, mode="reflect") * inner**2
    ring_mean = np.maximum(outer_sum - inner_sum, 0.0) / cfg.n_train
    return cfg.scale * ring_mean


def cfar_mask(
    image: NDArray[Any],
    cfg: CfarConfig,
    noise_power: Optional[float] = None,
    threshold: Optional[NDArray[Any]] = None,
) -> NDArray[Any]:
    """Return the exceedance mask of the CFAR test.

    `threshold` is the output of `cfar_threshold` when already computed.
    """
    power = _power(image)
    if threshold is None:
        threshold = cfar_threshold(image, cfg)
    mask = power > threshold
    if noise_power is not None:
        mask &= power > noise_power * 10.0 ** (cfg.floor_db / 10.0)
    return mask


def _clusters(
    image: NDArray[Any], cfg: CfarConfig, noise_power: Optional[float]
) -> List[_Cluster]:
    """Group exceedances into 8-connected clusters."""
    power = _power(image)
    threshold = cfar_threshold(image, cfg)
    mask = cfar_mask(image, cfg, noise_power, threshold)
    if not mask.any():
        return []
    grouping = mask
    if cfg.merge_radius > 0:
        size = 2 * cfg.merge_radius + 1
        grouping = ndimage.binary_dilation(mask, structure=np.ones((size, size), bool))
    labels, count = ndimage.label(grouping, structure=np.ones((3, 3), bool))
    clusters = []
    for index in range(1, count + 1):
        rows, cols = np.nonzero((labels == index) & mask)
        if len(rows) < cfg.min_pixels:
            continue
        cell = int(np.argmax(power[rows, cols]))
        peak = power[rows[cell], cols[cell]]
        excess = 1.0 - threshold[rows[cell], cols[cell]] / peak
        clusters.append(
            _Cluster(
                int(rows.min()),
                int(rows.max()),
                int(cols.min()),
                int(cols.max()),
                float(min(1.0, max(0.0, excess))),
            )
        )
    clusters.sort(key=lambda c: -c.confidence)
    return clusters


def _cluster_box(
    cluster: _Cluster, shape: Tuple[int, int], margin: Tuple[float, float] = (0.0, 0.0)
) -> BoundingBox:
    """Convert a cluster to a normalized box, shrinking each side by margin pixels."""
    n_r, n_a = shape
    row0, row1 = cluster.row0 + margin[0], cluster.row1 - margin[0]
    col0, col1 = cluster.col0 + margin[1], cluster.col1 - margin[1]
    if row1 < row0:
        row0 = row1 = (cluster.row0 + cluster.row1) / 2.0
    if col1 < col0:
        col0 = col1 = (cluster.col0 + cluster.col1) / 2.0
    return BoundingBox.from_corners(
        col0 / n_a,
        row0 / n_r,
        col1 / n_a,
        row1 / n_r,
        min_w=MIN_BOX_PIXELS / n_a,
        min_h=MIN_BOX_PIXELS / n_r,
    )


def cfar_detect_and_cluster(
    image: NDArray[Any], cfg: CfarConfig, noise_power: Optional[float] = None
) -> List[Tuple[BoundingBox, float]]:
    """Return (box, confidence) per CFAR cluster, most confident first."""
    image = np.asarray(image, dtype=float)
    return [
        (_cluster_box(cluster, image.shape), cluster.confidence)
        for cluster in _clusters(image, cfg, noise_power)
    ]


def _axis_gains(codebook_beams: NDArray[Any], sine: float, spacing: float) -> NDArray[Any]:
    """Return |f_i^H a|^2 of every beam toward a direction sine."""
    n = codebook_beams.shape[0]
    response = np.exp(1j * TWO_PI * spacing * np.arange(n) * sine) / math.sqrt(n)
    return np.abs(codebook_beams.conj().T @ response) ** 2


def box_direction(
    box: BoundingBox,
    grid: PixelGrid,
    bs_pose: Pose,
    target_height: float = VE_NOMINAL_HEIGHT_M,
) -> Tuple[float, float]:
    """Return (azimuth, elevation) from the BS toward the centre of a box."""
    n_r, n_a = grid.shape
    row, col = box.y * n_r, box.x * n_a
    if not grid.contains(row, col):
        raise DegenerateGeometryError(f"Box centre [{box.x}, {box.y}] is off the grid")
    rng, az = grid.polar_of(row, col)
    delta = grid.origin.slant_point(rng, az) - bs_pose.origin
    forward = np.array([math.cos(bs_pose.yaw), math.sin(bs_pose.yaw), 0.0])
    left = np.array([-math.sin(bs_pose.yaw), math.cos(bs_pose.yaw), 0.0])
    azimuth = math.atan2(float(delta @ left), float(delta @ forward))
    distance = float(np.linalg.norm(delta))
    if distance <= 0.0:
        raise DegenerateGeometryError("Box centre coincides with the base station")
    drop = (target_height - bs_pose.origin[2]) / distance
    elevation = math.asin(max(-1.0, min(1.0, drop)))
    return azimuth, elevation


def infer_beam_logits(
    box: BoundingBox,
    grid: PixelGrid,
    bs_pose: Pose,
    codebooks: CodebookPair,
    spacing_wavelengths: float = 0.5,
    kappa: float = BEAM_LOGIT_SHARPNESS,
    target_height: float = VE_NOMINAL_HEIGHT_M,
) -> Tuple[NDArray[Any], NDArray[Any]]:
    """Score every beam by its array gain toward the box centre."""
    az, el = box_direction(box, grid, bs_pose, target_height)
    gains_h = _axis_gains(
        codebooks.horizontal.beams, math.cos(el) * math.sin(az), spacing_wavelengths
    )
    gains_v = _axis_gains(codebooks.vertical.beams, math.sin(el), spacing_wavelengths)
    return (
        kappa * np.log(np.maximum(gains_h, EPS_PROB)),
        kappa * np.log(np.maximum(gains_v, EPS_PROB)),
    )


def class_scores_for_box(
    box: BoundingBox,
    grid: PixelGrid,
    resolution: Tuple[float, float] = (0.0, 0.0),
    sigma: float = CLASS_SCORE_SIGMA,
) -> Tuple[float, ...]:
    """Score each class by how well the box's physical size matches its length."""
    n_r, n_a = grid.shape
    rng, _ = grid.polar_of(box.y * n_r, box.x * n_a)
    down_range = box.h * n_r * grid.range_step - resolution[0]
    cross_range = box.w * n_a * grid.angle_step * rng - resolution[1]
    size = max(down_range, cross_range, 0.0)
    scores = []
    for index in sorted(CLASS_LOOKUP):
        length = CLASS_EXTENT[CLASS_LOOKUP[index]][0]
        scores.append(math.exp(-0.5 * ((size - length) / (sigma * length)) ** 2))
    return tuple(scores)


def nms(detections: Sequence[Detection], iou_thr: float = NMS_IOU) -> List[Detection]:
    """Greedy non-maximum suppression, highest confidence first."""
    ordered = sorted(detections, key=lambda d: (-d.confidence, d.bbox.x))
    kept: List[Detection] = []
    for candidate in ordered:
        if all(iou(candidate.bbox, other.bbox) <= iou_thr for other in kept):
            kept.append(candidate)
    return kept


def threshold_classes(
    detection: Detection, gamma_class: float = GAMMA_CLASS
) -> Tuple[Optional[str], Tuple[NDArray[Any], NDArray[Any]]]:
    """Return the class above threshold (or None) and the raw beam logits."""
    scores = np.asarray(detection.class_scores)
    best = int(np.argmax(scores))
    label = CLASS_LOOKUP[best] if scores[best] >= gamma_class else None
    return label, (
        np.asarray(detection.beam_logits_h),
        np.asarray(detection.beam_logits_v),
    )


def detect_frame(
    rmap: RangeAngleMap,
    grid: PixelGrid,
    bs_pose: Pose,
    codebooks: CodebookPair,
    cfg: CfarConfig = CfarConfig(),
    noise_power: Optional[float] = None,
    psf_margin: Tuple[float, float] = (0.0, 0.0),
    resolution: Tuple[float, float] = (0.0, 0.0),
    spacing_wavelengths: float = 0.5,
    kappa: float = BEAM_LOGIT_SHARPNESS,
    iou_thr: float = NMS_IOU,
) -> List[Detection]:
    """Run CFAR, boxing, class scoring, beam inference and NMS on one image.

    `noise_power` is in the units of the squared map values.
    """
    if rmap.empty:
        return []
    detections = []
    for cluster in _clusters(rmap.values, cfg, noise_power):
        box = _cluster_box(cluster, grid.shape, psf_margin)
        logits_h, logits_v = infer_beam_logits(
            box, grid, bs_pose, codebooks, spacing_wavelengths, kappa
        )
        detections.append(
            Detection(
                bbox=box,
                confidence=cluster.confidence,
                class_scores=class_scores_for_box(box, grid, resolution),
                beam_logits_h=tuple(float(v) for v in logits_h),
                beam_logits_v=tuple(float(v) for v in logits_v),
            )
        )
    kept = nms(detections, iou_thr)[: cfg.max_detections]
    _LOGGER.debug("Kept %d of %d detections", len(kept), len(detections))
    return kept


def _detection_record(frame: int, det: Detection) -> Dict[str, Any]:
    return {
        "frame": frame,
        "x": det.bbox.x,
        "y": det.bbox.y,
        "w": det.bbox.w,
        "h": det.bbox.h,
        "conf": det.confidence,
        "class_scores": list(det.class_scores),
        "logits_h": list(det.beam_logits_h),
        "logits_v": list(det.beam_logits_v),
    }


def write_detections(
    path: PathLike,
    detections: Sequence[Tuple[int, Detection]],
    n_h: int,
    n_v: int,
    meta: Optional[Dict[str, Any]] = None,
) -> None:
    """Write detections; the header declares the codebook sizes."""
    header = {"n_h": n_h, "n_v": n_v, "c_target": C_TARGET, **(meta or {})}
    write_jsonl(
        path, (_detection_record(frame, det) for frame, det in detections), header
    )


def read_detections(path: PathLike) -> List[Tuple[int, Detection]]:
    """Read a detections file, checking logit lengths against the header."""
    header: Optional[Dict[str, Any]] = None
    out: List[Tuple[int, Detection]] = []
    for line_number, record in read_jsonl(path):
        if "header" in record:
            header = record["header"]
            continue
        if header is None:
            raise ParseError("Record before header", line_number)
        try:
            logits_h = tuple(float(v) for v in require(record, "logits_h", line_number))
            logits_v = tuple(float(v) for v in require(record, "logits_v", line_number))
            if len(logits_h) != header["n_h"] or len(logits_v) != header["n_v"]:
                raise SchemaMismatchError(
                    f"line {line_number}: logits [{len(logits_h)}x{len(logits_v)}]"
                    f" do not match header [{header['n_h']}x{header['n_v']}]"
                )
            det = Detection(
                bbox=BoundingBox(
                    *(float(require(record, key, line_number)) for key in "xywh")
                ),
                confidence=float(require(record, "conf", line_number)),
                class_scores=tuple(
                    float(v) for v in require(record, "class_scores", line_number)
                ),
                beam_logits_h=logits_h,
                beam_logits_v=logits_v,
            )
            out.append((int(require(record, "frame", line_number)), det))
        except (ParseError, SchemaMismatchError):
            raise
        except (KeyError, TypeError, ValueError) as ex:
            raise ParseError(str(ex), line_number) from ex
    return out
