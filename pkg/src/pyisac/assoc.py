"""Beamspace association of radar detections to vehicular equipments."""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

from pyisac.comm import BeamReport
from pyisac.const import COST_BCE, COST_CCE, EPS_LOG, EPS_PROB, MATCH_IOU
from pyisac.detect import Detection
from pyisac.deteval import iou
from pyisac.exceptions import ConfigError, SchemaMismatchError
from pyisac.io import PathLike, write_jsonl
from pyisac.scene import GroundTruthLabel

_LOGGER = logging.getLogger(__name__)

COSTS = (COST_CCE, COST_BCE)
_TIE_RTOL = 1e-9


def softmax(z: Sequence[float]) -> NDArray[Any]:
    """Return the max-shifted softmax of a logit vector."""
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def _sigmoid(z: NDArray[Any]) -> NDArray[Any]:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def cce_cost(
    y_h: Sequence[float],
    y_v: Sequence[float],
    logits_h: Sequence[float],
    logits_v: Sequence[float],
) -> float:
    """Return the summed categorical cross-entropy of both beam selections."""
    p_h = np.maximum(softmax(logits_h), EPS_PROB)
    p_v = np.maximum(softmax(logits_v), EPS_PROB)
    return float(
        -(np.asarray(y_h) @ np.log(p_h)) - (np.asarray(y_v) @ np.log(p_v))
    )


def bce_cost(
    y_h: Sequence[float],
    y_v: Sequence[float],
    logits_h: Sequence[float],
    logits_v: Sequence[float],
) -> float:
    """Return the element-wise binary cross-entropy of sigmoid logits."""
    total = 0.0
    for y, logits in ((y_h, logits_h), (y_v, logits_v)):
        y = np.asarray(y, dtype=float)
        p = np.clip(_sigmoid(np.asarray(logits, dtype=float)), EPS_LOG, 1.0 - EPS_LOG)
        total -= float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    return total


_COST_LOOKUP = {COST_CCE: cce_cost, COST_BCE: bce_cost}


@dataclass(frozen=True)
class CostMatrix:
    """Association cost of every detection (rows) against every VE (columns)."""

    values: NDArray[Any]
    k_ids: Tuple[int, ...]
    v_ids: Tuple[int, ...]

    def __post_init__(self) -> None:
        """Validate the matrix."""
        values = self.values
        if values.shape != (len(self.k_ids), len(self.v_ids)):
            raise SchemaMismatchError(
                f"Cost shape [{values.shape}] does not match identities"
                f" [{len(self.k_ids)}x{len(self.v_ids)}]"
            )
        if values.size and (not np.all(np.isfinite(values)) or values.min() < 0.0):
            raise ValueError("Costs must be finite and nonnegative")

    @property
    def shape(self) -> Tuple[int, int]:
        """Return (K, V)."""
        return self.values.shape


def build_cost_matrix(
    dets: Sequence[Detection], reports: Sequence[BeamReport], cost: str = COST_CCE
) -> CostMatrix:
    """Return C[k, v] = cost(report v selections, detection k logits)."""
    if cost not in _COST_LOOKUP:
        raise ConfigError(f"Unknown association cost [{cost}]")
    func = _COST_LOOKUP[cost]
    values = np.zeros((len(dets), len(reports)))
    for v, report in enumerate(reports):
        y_h, y_v = report.y_h, report.y_v
        for k, det in enumerate(dets):
            if len(det.beam_logits_h) != report.n_h or len(det.beam_logits_v) != report.n_v:
                raise SchemaMismatchError(
                    f"Detection logits [{len(det.beam_logits_h)}x{len(det.beam_logits_v)}]"
                    f" do not match codebooks [{report.n_h}x{report.n_v}]"
                )
            values[k, v] = func(y_h, y_v, det.beam_logits_h, det.beam_logits_v)
    return CostMatrix(
        values,
        tuple(range(len(dets))),
        tuple(report.ve_id for report in reports),
    )


@dataclass(frozen=True)
class Assignment:
    """One-to-one pairs of (row index, column index) and their summed cost."""

    pairs: Tuple[Tuple[int, int], ...]
    total_cost: float

    def __len__(self) -> int:
        """Return the number of pairs."""
        return len(self.pairs)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        """Iterate over the pairs in row order."""
        return iter(self.pairs)


def _solve(values: NDArray[Any]) -> Optional[Tuple[Dict[int, int], float]]:
    """Solve a rectangular problem with forbidden (inf) entries by padding.

    Returns the row to column map of real pairs and their cost, or None
    when no matching of size min(K, V) avoids the forbidden entries.
    """
    k, v = values.shape
    n = max(k, v)
    finite = values[np.isfinite(values)]
    sentinel = (float(finite.max()) if finite.size else 0.0) + 1.0
    square = np.full((n, n), sentinel)
    square[:k, :v] = values
    try:
        rows, cols = linear_sum_assignment(square)
    except ValueError:
        return None
    mapping = {int(r): int(c) for r, c in zip(rows, cols) if r < k and c < v}
    cost = float(sum(values[r, c] for r, c in mapping.items()))
    if not np.isfinite(cost) or len(mapping) != min(k, v):
        return None
    return mapping, cost


def solve_assignment(cost: CostMatrix, max_cost: Optional[float] = None) -> Assignment:
    """Return the minimum-cost matching of size min(K, V).

    Among optimal matchings the lexicographically smallest sorted pair list
    wins. Pairs costing more than `max_cost` are dropped afterwards.
    """
    values = np.asarray(cost.values, dtype=float)
    k, v = values.shape
    if k == 0 or v == 0:
        return Assignment((), 0.0)
    solved = _solve(values)
    if solved is None:
        raise ValueError("Cost matrix admits no complete matching")
    _, optimum = solved
    tol = _TIE_RTOL * (1.0 + abs(optimum))

    work = values.copy()
    pairs: List[Tuple[int, int]] = []
    for row in range(k):
        chosen = None
        for col in range(v):
            if not np.isfinite(work[row, col]):
                continue
            trial = work.copy()
            trial[row, :] = np.inf
            trial[:, col] = np.inf
            trial[row, col] = work[row, col]
            result = _solve(trial)
            if result is not None and result[1] <= optimum + tol:
                chosen = col
                break
        if chosen is None:
            work[row, :] = np.inf
            continue
        keep = work[row, chosen]
        work[row, :] = np.inf
        work[:, chosen] = np.inf
        work[row, chosen] = keep
        pairs.append((row, chosen))

    if max_cost is not None:
        pairs = [(r, c) for r, c in pairs if values[r, c] <= max_cost]
    total = float(sum(values[r, c] for r, c in pairs))
    return Assignment(tuple(pairs), total)


def match_detections_to_truth(
    dets: Sequence[Detection],
    labels: Sequence[GroundTruthLabel],
    iou_thr: float = MATCH_IOU,
) -> Dict[int, int]:
    """Map detection index to target id by greedy IoU matching.

    Detections are visited by descending confidence; each takes the unmatched
    label of highest IoU at or above `iou_thr`.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].bbox.x))
    taken = set()
    out: Dict[int, int] = {}
    for index in order:
        best, best_iou = None, iou_thr
        for label in labels:
            if label.target_id in taken:
                continue
            overlap = iou(dets[index].bbox, label.bbox)
            if overlap > best_iou or (best is None and overlap >= best_iou):
                best, best_iou = label.target_id, overlap
        if best is not None:
            taken.add(best)
            out[index] = best
    return out


@dataclass(frozen=True)
class FrameAssociation:
    """Association outcome of one frame together with its truth."""

    frame: int
    cost: CostMatrix
    assignment: Assignment
    truth: Dict[int, int]

    @property
    def ve_ids(self) -> Tuple[int, ...]:
        """Return the VEs present in the frame."""
        return self.cost.v_ids

    @property
    def correct(self) -> List[bool]:
        """Return per-pair correctness in assignment order."""
        return [
            self.truth.get(self.cost.k_ids[k]) == self.cost.v_ids[v]
            for k, v in self.assignment
        ]

    def ratio(self, count_missed: bool = True) -> Optional[float]:
        """Return the correct share of VEs, or None when no VE counts."""
        if count_missed:
            denominator = len(self.ve_ids)
        else:
            detected = set(self.truth.values())
            denominator = sum(1 for ve_id in self.ve_ids if ve_id in detected)
        if denominator == 0:
            return None
        return sum(self.correct) / denominator


def correct_association_prob(
    frames: Sequence[FrameAssociation], count_missed: bool = True
) -> float:
    """Average the per-frame correct-association share over frames with VEs."""
    ratios = []
    for frame in frames:
        ratio = frame.ratio(count_missed)
        if ratio is None:
            _LOGGER.debug("Frame %s has no VE to associate, skipped", frame.frame)
            continue
        ratios.append(ratio)
    if not ratios:
        _LOGGER.warning("No frame with VEs to associate")
        return 0.0
    return float(np.mean(ratios))


def write_associations(
    path: PathLike,
    frames: Sequence[FrameAssociation],
    meta: Dict[str, Any],
    count_missed: bool = True,
) -> None:
    """Write one record per assigned pair, then a summary record."""

    def records() -> Iterator[Dict[str, Any]]:
        for frame in frames:
            for (k, v), ok in zip(frame.assignment, frame.correct):
                yield {
                    "frame": frame.frame,
                    "det_index": frame.cost.k_ids[k],
                    "ve_id": frame.cost.v_ids[v],
                    "cost": float(frame.cost.values[k, v]),
                    "correct": ok,
                }
        yield {
            "summary": {
                "p_correct": correct_association_prob(frames, count_missed),
                "frames": len(frames),
                "count_missed": count_missed,
            }
        }

    write_jsonl(path, records(), meta)
