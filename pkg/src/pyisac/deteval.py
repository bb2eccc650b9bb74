"""Box overlap losses, detection metrics and beam top-k accuracy."""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from numpy.typing import NDArray

from pyisac.const import (
    AP_POINTS,
    EPS_LOG,
    IOU_THRESHOLDS_50_95,
    MATCH_IOU,
    TAL_LAMBDA,
    TAL_MU,
)
from pyisac.exceptions import ConfigError, DegenerateIntervalError
from pyisac.geometry import BoundingBox
from pyisac.io import PathLike

_LOGGER = logging.getLogger(__name__)

_ASPECT = 4.0 / math.pi**2
CONFIDENCE_SWEEP = np.linspace(0.0, 1.0, 1001)


def _overlap(b1: BoundingBox, b2: BoundingBox) -> Tuple[float, float]:
    """Return the intersection width and height of two boxes."""
    ax0, ay0, ax1, ay1 = b1.corners
    bx0, by0, bx1, by1 = b2.corners
    return (
        max(0.0, min(ax1, bx1) - max(ax0, bx0)),
        max(0.0, min(ay1, by1) - max(ay0, by0)),
    )


def iou(b1: BoundingBox, b2: BoundingBox) -> float:
    """Return the intersection-over-union of two boxes."""
    iw, ih = _overlap(b1, b2)
    inter = iw * ih
    union = b1.area + b2.area - inter
    return inter / union if union > 0.0 else 0.0


def bce_loss(x: float, y: float, w: float = 1.0, eps: float = EPS_LOG) -> float:
    """Return the weighted binary cross-entropy of prediction x against label y."""
    pos = max(x, eps)
    neg = max(1.0 - x, eps)
    loss = 0.0
    if y:
        loss -= y * math.log(pos)
    if 1.0 - y:
        loss -= (1.0 - y) * math.log(neg)
    return w * loss


def bce_grad(x: float, y: float, w: float = 1.0, eps: float = EPS_LOG) -> float:
    """Return d bce_loss / dx away from the clamp boundaries."""
    x = min(max(x, eps), 1.0 - eps)
    return -w * (y / x - (1.0 - y) / (1.0 - x))


def dfl_targets(y: float, y_i: float, y_ip1: float) -> Tuple[float, float]:
    """Return the knot weights that minimise the distribution focal loss."""
    span = y_ip1 - y_i
    if span <= 0.0:
        raise DegenerateIntervalError(f"Knots must satisfy y_i < y_ip1 [{y_i}, {y_ip1}]")
    if not y_i <= y <= y_ip1:
        raise ValueError(f"Target outside knot interval [{y}]")
    return (y_ip1 - y) / span, (y - y_i) / span


def dfl_loss(
    y: float, y_i: float, y_ip1: float, p_i: float, p_ip1: float, eps: float = EPS_LOG
) -> float:
    """Return the distribution focal loss of a target between two knots."""
    w_i, w_ip1 = dfl_targets(y, y_i, y_ip1)
    loss = 0.0
    if w_i:
        loss -= w_i * math.log(max(p_i, eps))
    if w_ip1:
        loss -= w_ip1 * math.log(max(p_ip1, eps))
    return loss


def _enclosing(b: BoundingBox, gt: BoundingBox) -> Tuple[float, float]:
    ax0, ay0, ax1, ay1 = b.corners
    bx0, by0, bx1, by1 = gt.corners
    return max(ax1, bx1) - min(ax0, bx0), max(ay1, by1) - min(ay0, by0)


def _aspect_term(b: BoundingBox, gt: BoundingBox) -> float:
    return _ASPECT * (math.atan(gt.w / gt.h) - math.atan(b.w / b.h)) ** 2


def _center_term(b: BoundingBox, gt: BoundingBox) -> float:
    cw, ch = _enclosing(b, gt)
    return ((b.x - gt.x) ** 2 + (b.y - gt.y) ** 2) / (cw * cw + ch * ch)


def diou_loss(b: BoundingBox, b_gt: BoundingBox) -> float:
    """Return the distance-IoU loss."""
    return 1.0 - iou(b, b_gt) + _center_term(b, b_gt)


def ciou_loss(b: BoundingBox, b_gt: BoundingBox) -> float:
    """Return the complete-IoU loss of a predicted box against a target box."""
    overlap = iou(b, b_gt)
    v = _aspect_term(b, b_gt)
    denom = (1.0 - overlap) + v
    alpha = v / denom if denom > 0.0 else 0.0
    return 1.0 - overlap + _center_term(b, b_gt) + alpha * v


def ciou_grad(b: BoundingBox, b_gt: BoundingBox) -> NDArray[Any]:
    """Return d ciou_loss / d(x, y, w, h) of the predicted box.

    Alpha is differentiated too, so the result matches finite differences
    of ciou_loss wherever the box edges do not coincide.
    """
    ax0, ay0, ax1, ay1 = b.corners
    bx0, by0, bx1, by1 = b_gt.corners
    iw, ih = _overlap(b, b_gt)

    # d(intersection extent) / d(centre, size)
    if iw > 0.0:
        diw_dx = float(ax1 < bx1) - float(ax0 > bx0)
        diw_dw = 0.5 * (float(ax1 < bx1) + float(ax0 > bx0))
    else:
        diw_dx = diw_dw = 0.0
    if ih > 0.0:
        dih_dy = float(ay1 < by1) - float(ay0 > by0)
        dih_dh = 0.5 * (float(ay1 < by1) + float(ay0 > by0))
    else:
        dih_dy = dih_dh = 0.0

    inter = iw * ih
    union = b.area + b_gt.area - inter
    d_inter = np.array([ih * diw_dx, iw * dih_dy, ih * diw_dw, iw * dih_dh])
    d_area = np.array([0.0, 0.0, b.h, b.w])
    d_union = d_area - d_inter
    overlap = inter / union
    d_iou = (d_inter * union - inter * d_union) / union**2

    cw, ch = _enclosing(b, b_gt)
    dcw_dx = float(ax1 > bx1) - float(ax0 < bx0)
    dcw_dw = 0.5 * (float(ax1 > bx1) + float(ax0 < bx0))
    dch_dy = float(ay1 > by1) - float(ay0 < by0)
    dch_dh = 0.5 * (float(ay1 > by1) + float(ay0 < by0))
    c2 = cw * cw + ch * ch
    d2 = (b.x - b_gt.x) ** 2 + (b.y - b_gt.y) ** 2
    d_d2 = np.array([2.0 * (b.x - b_gt.x), 2.0 * (b.y - b_gt.y), 0.0, 0.0])
    d_c2 = np.array([2.0 * cw * dcw_dx, 2.0 * ch * dch_dy, 2.0 * cw * dcw_dw, 2.0 * ch * dch_dh])
    d_center = (d_d2 * c2 - d2 * d_c2) / c2**2

    delta = math.atan(b_gt.w / b_gt.h) - math.atan(b.w / b.h)
    v = _ASPECT * delta * delta
    norm = b.w * b.w + b.h * b.h
    d_v = 2.0 * _ASPECT * delta * np.array([0.0, 0.0, -b.h / norm, b.w / norm])

    s = 1.0 - overlap + v
    grad = -d_iou + d_center
    if s > 0.0:
        # alpha * v = v^2 / s
        grad = grad + (2.0 * v * s - v * v) / s**2 * d_v + (v * v / s**2) * d_iou
    return grad


def tal_score(p: float, r: float, lam: float = TAL_LAMBDA, mu: float = TAL_MU) -> float:
    """Return the task-aligned score p^lam * r^mu."""
    if lam <= 0.0 or mu <= 0.0:
        raise ValueError(f"TAL exponents must be positive [{lam}, {mu}]")
    return (p**lam) * (r**mu)


@dataclass(frozen=True)
class MatchConfig:
    """IoU thresholds for AP and the TAL exponents."""

    iou_thresholds: Tuple[float, ...] = IOU_THRESHOLDS_50_95
    match_iou: float = MATCH_IOU
    lam: float = TAL_LAMBDA
    mu: float = TAL_MU

    def __post_init__(self) -> None:
        """Validate the configuration."""
        thresholds = self.iou_thresholds
        if not thresholds or any(not 0.0 < t < 1.0 for t in thresholds):
            raise ConfigError(f"IoU thresholds must lie in (0, 1) [{thresholds}]")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ConfigError(f"IoU thresholds must increase strictly [{thresholds}]")
        if self.lam <= 0.0 or self.mu <= 0.0:
            raise ConfigError(f"TAL exponents must be positive [{self.lam}, {self.mu}]")


@dataclass(frozen=True)
class ScoredBox:
    """Detection reduced to what matching needs."""

    label: str
    bbox: BoundingBox
    confidence: float


@dataclass(frozen=True)
class TruthBox:
    """Labelled ground-truth box."""

    label: str
    bbox: BoundingBox


@dataclass
class DetectionMetrics:
    """Operating point, AP summary and curves of one evaluation."""

    precision: float
    recall: float
    f1: float
    confidence: float
    map50: float
    map50_95: float
    per_class_ap: Dict[str, float]
    curves: Dict[str, List[float]] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        """Return the scalar metrics."""
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confidence": self.confidence,
            "map50": self.map50,
            "map50_95": self.map50_95,
            "per_class_ap": dict(sorted(self.per_class_ap.items())),
        }


def _match(
    dets: Mapping[int, Sequence[ScoredBox]],
    gts: Mapping[int, Sequence[TruthBox]],
    label: Optional[str],
    threshold: float,
) -> Tuple[NDArray[Any], NDArray[Any], int]:
    """Greedily match detections to truth; return (confidences, tp flags, n_gt).

    With label None all classes are ranked together; a detection still
    pairs only with truth of its own label.
    """
    ranked = []
    for frame in sorted(dets):
        for det in dets[frame]:
            if label is None or det.label == label:
                ranked.append((-det.confidence, frame, det.bbox.x, det))
    ranked.sort(key=lambda item: item[:3])
    n_gt = sum(
        1
        for frame in gts
        for gt in gts[frame]
        if label is None or gt.label == label
    )
    used: Dict[int, Set[int]] = {}
    confidences = np.empty(len(ranked))
    tp = np.zeros(len(ranked), dtype=bool)
    for index, (_, frame, _, det) in enumerate(ranked):
        confidences[index] = det.confidence
        taken = used.setdefault(frame, set())
        best, best_iou = -1, threshold
        for gt_index, gt in enumerate(gts.get(frame, ())):
            if gt_index in taken or gt.label != det.label:
                continue
            overlap = iou(det.bbox, gt.bbox)
            if overlap >= best_iou and (best < 0 or overlap > best_iou):
                best, best_iou = gt_index, overlap
        if best >= 0:
            taken.add(best)
            tp[index] = True
    return confidences, tp, n_gt


def _pr_curve(tp: NDArray[Any], n_gt: int) -> Tuple[NDArray[Any], NDArray[Any]]:
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    recall = tp_cum / max(n_gt, 1)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    return precision, recall


def average_precision(tp: NDArray[Any], n_gt: int, points: int = AP_POINTS) -> float:
    """Return interpolated AP of ranked match flags against n_gt truths."""
    if n_gt == 0 or len(tp) == 0:
        return 0.0
    precision, recall = _pr_curve(tp, n_gt)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    samples = np.linspace(0.0, 1.0, points)
    index = np.searchsorted(recall, samples, side="left")
    values = np.where(index < len(envelope), envelope[np.minimum(index, len(envelope) - 1)], 0.0)
    return float(values.mean())


def evaluate_map(
    dets: Mapping[int, Sequence[ScoredBox]],
    gts: Mapping[int, Sequence[TruthBox]],
    cfg: MatchConfig = MatchConfig(),
) -> DetectionMetrics:
    """Evaluate detections against truth, frame by frame.

    Precision, recall and F1 are reported at the confidence that maximises
    F1 over a 0.001 grid, matching at `cfg.match_iou`.
    """
    labels = sorted({gt.label for frame in gts for gt in gts[frame]})
    per_class_ap: Dict[str, float] = {}
    per_threshold = []
    for threshold in cfg.iou_thresholds:
        aps = []
        for label in labels:
            _, tp, n_gt = _match(dets, gts, label, threshold)
            aps.append(average_precision(tp, n_gt))
        per_threshold.append(float(np.mean(aps)) if aps else 0.0)
    for label in labels:
        _, tp, n_gt = _match(dets, gts, label, cfg.match_iou)
        per_class_ap[label] = average_precision(tp, n_gt)
    map50 = float(np.mean(list(per_class_ap.values()))) if labels else 0.0
    map50_95 = float(np.mean(per_threshold))

    confidences, tp, n_gt = _match(dets, gts, None, cfg.match_iou)
    keep = confidences[None, :] >= CONFIDENCE_SWEEP[:, None]
    tp_at = (keep & tp[None, :]).sum(axis=1)
    n_at = keep.sum(axis=1)
    precision = np.where(n_at > 0, tp_at / np.maximum(n_at, 1), 0.0)
    recall = tp_at / max(n_gt, 1)
    f1 = np.where(
        precision + recall > 0.0,
        2.0 * precision * recall / np.maximum(precision + recall, 1e-300),
        0.0,
    )
    best = int(np.argmax(f1))
    pr_precision, pr_recall = _pr_curve(tp, n_gt) if len(tp) else (np.zeros(0), np.zeros(0))
    metrics = DetectionMetrics(
        precision=float(precision[best]),
        recall=float(recall[best]),
        f1=float(f1[best]),
        confidence=float(CONFIDENCE_SWEEP[best]),
        map50=map50,
        map50_95=map50_95,
        per_class_ap=per_class_ap,
        curves={
            "confidence": CONFIDENCE_SWEEP.tolist(),
            "precision": precision.tolist(),
            "recall": recall.tolist(),
            "f1": f1.tolist(),
            "pr_precision": pr_precision.tolist(),
            "pr_recall": pr_recall.tolist(),
        },
    )
    _LOGGER.debug("Evaluated %d classes: mAP50 %.4f", len(labels), map50)
    return metrics


def beam_task_boxes(
    dets: Mapping[int, Sequence[Any]],
    truths: Mapping[int, Sequence[Any]],
) -> Tuple[Dict[int, List[ScoredBox]], Dict[int, List[TruthBox]]]:
    """Recast detections and VE labels with (axis, beam index) as the class.

    Detections need bbox, confidence and beam logits; truths need bbox,
    is_ve and 1-based beam_h / beam_v.
    """
    scored: Dict[int, List[ScoredBox]] = {}
    truth: Dict[int, List[TruthBox]] = {}
    for frame, frame_dets in dets.items():
        out = scored.setdefault(frame, [])
        for det in frame_dets:
            beam_h = int(np.argmax(det.beam_logits_h)) + 1
            beam_v = int(np.argmax(det.beam_logits_v)) + 1
            out.append(ScoredBox(f"h{beam_h}", det.bbox, det.confidence))
            out.append(ScoredBox(f"v{beam_v}", det.bbox, det.confidence))
    for frame, labels in truths.items():
        out_gt = truth.setdefault(frame, [])
        for label in labels:
            if label.is_ve and label.beam_h is not None:
                out_gt.append(TruthBox(f"h{label.beam_h}", label.bbox))
                out_gt.append(TruthBox(f"v{label.beam_v}", label.bbox))
    return scored, truth


def _hits(logits: NDArray[Any], true_index: NDArray[Any], k: int) -> NDArray[Any]:
    """Return whether each true (0-based) index ranks within the top k.

    Equal logits rank by ascending index.
    """
    n = logits.shape[1]
    k = min(k, n)
    target = logits[np.arange(len(true_index)), true_index][:, None]
    above = (logits > target).sum(axis=1)
    tied_before = ((logits == target) & (np.arange(n)[None, :] < true_index[:, None])).sum(axis=1)
    return (above + tied_before) < k


def topk_beam_accuracy(
    logits_h: NDArray[Any],
    logits_v: NDArray[Any],
    true_h: Sequence[int],
    true_v: Sequence[int],
    k: int,
) -> float:
    """Return top-k accuracy averaged over the horizontal and vertical tasks.

    True indices are 1-based codebook indices; k is clamped to each codebook.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1 [{k}]")
    logits_h = np.atleast_2d(np.asarray(logits_h, dtype=float))
    logits_v = np.atleast_2d(np.asarray(logits_v, dtype=float))
    idx_h = np.asarray(true_h, dtype=int) - 1
    idx_v = np.asarray(true_v, dtype=int) - 1
    if len(idx_h) == 0:
        return 0.0
    if logits_h.shape[0] != len(idx_h) or logits_v.shape[0] != len(idx_v):
        raise ValueError("Logit rows and true indices differ in length")
    hit_h = _hits(logits_h, idx_h, k)
    hit_v = _hits(logits_v, idx_v, k)
    return float(0.5 * (hit_h.mean() + hit_v.mean()))


def write_metrics_report(
    path: PathLike,
    array_size: str,
    metrics: DetectionMetrics,
    topk: Sequence[float],
    meta: Dict[str, Any],
) -> None:
    """Write a metrics report: scalar metrics, top-1..k beam accuracy, provenance."""
    report = {
        "array_size": array_size,
        **metrics.as_dict(),
        "topk": list(topk),
        "provenance": meta,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        json.dump(report, fp, sort_keys=True, indent=2)
        fp.write("\n")
