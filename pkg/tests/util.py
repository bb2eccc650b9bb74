import os
from typing import Optional, Sequence

import numpy as np

from pyisac.comm import BeamReport
from pyisac.config import ExperimentSpec, load_spec
from pyisac.detect import Detection
from pyisac.geometry import BoundingBox, Pose
from pyisac.radarsim import RadarArray, RadarWaveform

SAMPLES = os.path.join(os.path.dirname(__file__), "samples")


def sample_path(name: str) -> str:
    return os.path.join(SAMPLES, name)


def small_spec(**experiment) -> ExperimentSpec:
    """Load the desk-sized sample experiment, optionally overriding its protocol."""
    spec = load_spec(sample_path("isac_small.yaml"))
    if experiment:
        data = spec.as_dict()
        data["experiment"].update(experiment)
        spec = ExperimentSpec.from_dict(data)
    return spec


def build_box(x: float = 0.5, y: float = 0.5, w: float = 0.1, h: float = 0.1) -> BoundingBox:
    return BoundingBox(x, y, w, h)


def one_hot_logits(n: int, index: int, depth: float = 30.0) -> tuple:
    """Return logits peaking at a 1-based index, falling off linearly."""
    return tuple(-depth * abs(i - (index - 1)) / max(n - 1, 1) for i in range(n))


def build_detection(
    box: Optional[BoundingBox] = None,
    confidence: float = 0.9,
    logits_h: Optional[Sequence[float]] = None,
    logits_v: Optional[Sequence[float]] = None,
    class_scores: Sequence[float] = (0.9, 0.1, 0.05),
) -> Detection:
    return Detection(
        bbox=box or build_box(),
        confidence=confidence,
        class_scores=tuple(class_scores),
        beam_logits_h=tuple(logits_h if logits_h is not None else (0.0,) * 4),
        beam_logits_v=tuple(logits_v if logits_v is not None else (0.0,) * 4),
    )


def build_report(
    ve_id: int, f_h: int, f_v: int, n_h: int = 4, n_v: int = 4, frame: int = 0
) -> BeamReport:
    return BeamReport(ve_id=ve_id, frame=frame, f_h=f_h, f_v=f_v, n_h=n_h, n_v=n_v)


def build_radar(n_az: int = 8, n_el: int = 1, pose: Optional[Pose] = None):
    """Return the default chirp and a small array at the origin facing +x."""
    waveform = RadarWaveform()
    array = RadarArray.uniform(
        pose or Pose((0.0, 0.0, 0.0)), n_az, n_el, waveform.wavelength
    )
    return waveform, array


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
