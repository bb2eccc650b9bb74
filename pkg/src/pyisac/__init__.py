"""Radar-aided beamspace association simulator."""
from pathlib import Path
from typing import List, Optional

from pyisac.config import ExperimentSpec, load_spec
from pyisac.harness import CurvePoint, FrameResult, run_pipeline
from pyisac.harness import sweep_clutter as _sweep_clutter
from pyisac.harness import sweep_matrix as _sweep_matrix
from pyisac.harness import sweep_snr as _sweep_snr

__all__ = [
    "CurvePoint",
    "ExperimentSpec",
    "FrameResult",
    "load_spec",
    "run_pipeline",
    "sweep_clutter",
    "sweep_matrix",
    "sweep_snr",
]


async def sweep_snr(
    spec: ExperimentSpec, out_path: Optional[Path] = None, *, progress: bool = False
) -> List[CurvePoint]:
    """Sweep SNR per antenna for every configured array size.

    Returns one point per (array size, SNR); writes a CSV when out_path is set.
    """
    return await _sweep_snr(spec, out_path, progress)


async def sweep_clutter(
    spec: ExperimentSpec, out_path: Optional[Path] = None, *, progress: bool = False
) -> List[CurvePoint]:
    """Sweep the clutter count with two VEs at the fixed sweep SNR."""
    return await _sweep_clutter(spec, out_path, progress)


async def sweep_matrix(
    spec: ExperimentSpec, out_path: Optional[Path] = None, *, progress: bool = False
) -> List[CurvePoint]:
    """Sweep VE count against clutter count for the matrix array size."""
    return await _sweep_matrix(spec, out_path, progress)
