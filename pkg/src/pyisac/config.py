"""Experiment configuration loaded from YAML."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import logging
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, TypeVar

import yaml

from pyisac.const import (
    BEAM_LOGIT_SHARPNESS,
    BS_ARRAY_SIZES,
    CFAR_FLOOR_DB,
    CFAR_GUARD,
    CFAR_MERGE_RADIUS,
    CFAR_PFA,
    CFAR_TRAIN,
    CHIRP_FULL_SWEEP,
    COMM_F0_HZ,
    COST_BCE,
    COST_CCE,
    GAMMA_CLASS,
    GRID_R_MAX_M,
    GRID_R_MIN_M,
    INTERP_LINEAR,
    INTERP_MODES,
    LABEL_SNR_DB,
    LOS_POWER_SHARE,
    MATCH_IOU,
    MAX_DETECTIONS,
    NMS_IOU,
    RADAR_BS_HZ,
    RADAR_DYNAMIC_RANGE_DB,
    RADAR_F0_HZ,
    RADAR_FS_HZ,
    RADAR_N_AZ,
    RADAR_N_EL,
    RADAR_SNR_DB,
    RADAR_SNR_REF_RANGE_M,
    RADAR_TC_S,
    RADAR_TP_S,
    RADAR_UPSAMPLE,
    SCENE_A,
    SCENE_LOOKUP,
    SNR_MAX_DB,
    SNR_MIN_DB,
    TAPER_HANN,
    TAPERS,
    TIME_STEP_S,
    VE_ARRAY,
)
from pyisac.exceptions import ConfigError
from pyisac.io import PathLike, spec_hash

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T", bound="_Section")

DESK_GRID = (256, 64)
DESK_FRAMES = 20
DESK_TRIALS = 50
SWEEP_SNR_DB = -20.0
MATRIX_ARRAY = (8, 8)


def _as_tuple(value: Any) -> Any:
    """Turn YAML lists (nested too) into tuples."""
    if isinstance(value, list):
        return tuple(_as_tuple(item) for item in value)
    return value


class _Section:
    """Mixin mapping a YAML mapping onto a frozen dataclass."""

    section = ""

    @classmethod
    def from_dict(cls: Type[T], data: Optional[Mapping[str, Any]]) -> T:
        """Build the section, rejecting unknown keys."""
        data = dict(data or {})
        known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
        for key in data:
            if key not in known:
                raise ConfigError(f"Unknown key [{key}] in section [{cls.section}]")
        return cls(**{key: _as_tuple(value) for key, value in data.items()})

    def as_dict(self) -> Dict[str, Any]:
        """Return the section as plain data."""
        return {f.name: getattr(self, f.name) for f in fields(self)}  # type: ignore[arg-type]


@dataclass(frozen=True)
class ScenarioSection(_Section):
    """Scene preset and timing."""

    section = "scenario"

    kind: str = SCENE_A
    n_ve: int = 1
    n_clutter: int = 0
    frames: int = DESK_FRAMES
    dt: float = TIME_STEP_S

    def __post_init__(self) -> None:
        """Validate the section."""
        if self.kind not in SCENE_LOOKUP:
            raise ConfigError(f"Unknown scenario kind [{self.kind}]")
        if not 0 <= self.n_ve <= 4:
            raise ConfigError(f"n_ve must be in 0..4 [{self.n_ve}]")
        if self.n_clutter < 0 or self.frames < 1 or self.dt <= 0:
            raise ConfigError("Invalid clutter count, frame count or time step")


@dataclass(frozen=True)
class RadarSection(_Section):
    """Chirp, virtual array, image grid and noise."""

    section = "radar"

    f0_hz: float = RADAR_F0_HZ
    bs_hz: float = RADAR_BS_HZ
    tc_s: float = RADAR_TC_S
    tp_s: float = RADAR_TP_S
    fs_hz: float = RADAR_FS_HZ
    n_az: int = RADAR_N_AZ
    n_el: int = RADAR_N_EL
    chirp_convention: str = CHIRP_FULL_SWEEP
    upsample: int = RADAR_UPSAMPLE
    interpolation: str = INTERP_LINEAR
    taper: str = TAPER_HANN
    snr_db: Optional[float] = RADAR_SNR_DB
    snr_ref_range_m: float = RADAR_SNR_REF_RANGE_M
    grid_n_r: int = DESK_GRID[0]
    grid_n_a: int = DESK_GRID[1]
    r_min_m: float = GRID_R_MIN_M
    r_max_m: float = GRID_R_MAX_M
    half_fov_deg: float = 60.0
    dynamic_range_db: float = RADAR_DYNAMIC_RANGE_DB

    def __post_init__(self) -> None:
        """Validate the section."""
        if self.taper not in TAPERS:
            raise ConfigError(f"Unknown taper [{self.taper}]")
        if self.interpolation not in INTERP_MODES:
            raise ConfigError(f"Unknown interpolation [{self.interpolation}]")
        if self.grid_n_r < 2 or self.grid_n_a < 2:
            raise ConfigError(f"Grid too small [{self.grid_n_r}x{self.grid_n_a}]")
        if not 0 < self.r_min_m < self.r_max_m:
            raise ConfigError(f"Invalid range window [{self.r_min_m}, {self.r_max_m}]")
        if not 0 < self.half_fov_deg < 90:
            raise ConfigError(f"Invalid half field of view [{self.half_fov_deg}]")
        if self.upsample < 1:
            raise ConfigError(f"Upsampling must be >= 1 [{self.upsample}]")

    @property
    def half_fov_rad(self) -> float:
        """Return the half field of view in radians."""
        return math.radians(self.half_fov_deg)


@dataclass(frozen=True)
class CommSection(_Section):
    """Arrays, SNR grid and channel model."""

    section = "comm"

    f0_hz: float = COMM_F0_HZ
    array_sizes: Tuple[Tuple[int, int], ...] = BS_ARRAY_SIZES
    snr_grid_db: Tuple[float, ...] = tuple(
        float(v) for v in range(int(SNR_MIN_DB), int(SNR_MAX_DB) + 1, 5)
    )
    ve_array: Tuple[int, int] = VE_ARRAY
    los_share: float = LOS_POWER_SHARE
    ground_reflection: bool = True
    n_pilots: int = 1
    label_snr_db: Optional[float] = LABEL_SNR_DB

    def __post_init__(self) -> None:
        """Validate the section."""
        if not self.array_sizes or not self.snr_grid_db:
            raise ConfigError("Array sizes and SNR grid must be nonempty")
        for size in self.array_sizes:
            if len(size) != 2 or min(size) < 1:
                raise ConfigError(f"Invalid array size [{size}]")
        if not 0.0 < self.los_share <= 1.0:
            raise ConfigError(f"LOS share must be in (0, 1] [{self.los_share}]")
        if self.n_pilots < 1:
            raise ConfigError(f"n_pilots must be >= 1 [{self.n_pilots}]")


@dataclass(frozen=True)
class DetectSection(_Section):
    """Reference detector options."""

    section = "detect"

    guard: int = CFAR_GUARD
    train: int = CFAR_TRAIN
    pfa: float = CFAR_PFA
    min_pixels: int = 1
    merge_radius: int = CFAR_MERGE_RADIUS
    floor_db: float = CFAR_FLOOR_DB
    max_detections: int = MAX_DETECTIONS
    nms_iou: float = NMS_IOU
    gamma_class: float = GAMMA_CLASS
    kappa: float = BEAM_LOGIT_SHARPNESS
    psf_margin_px: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        """Validate the section."""
        if not 0.0 < self.nms_iou < 1.0:
            raise ConfigError(f"nms_iou must be in (0, 1) [{self.nms_iou}]")
        if not 0.0 <= self.gamma_class <= 1.0:
            raise ConfigError(f"gamma_class must be in [0, 1] [{self.gamma_class}]")


@dataclass(frozen=True)
class AssocSection(_Section):
    """Association cost and scoring options."""

    section = "assoc"

    cost: str = COST_CCE
    max_cost: Optional[float] = None
    count_missed: bool = True
    match_iou: float = MATCH_IOU

    def __post_init__(self) -> None:
        """Validate the section."""
        if self.cost not in (COST_CCE, COST_BCE):
            raise ConfigError(f"Unknown association cost [{self.cost}]")
        if not 0.0 < self.match_iou < 1.0:
            raise ConfigError(f"match_iou must be in (0, 1) [{self.match_iou}]")


@dataclass(frozen=True)
class ExperimentSection(_Section):
    """Monte Carlo protocol."""

    section = "experiment"

    seed: int = 0
    trials: int = DESK_TRIALS
    threads: int = 1
    sweep_snr_db: float = SWEEP_SNR_DB
    clutter_grid: Tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    ve_grid: Tuple[int, ...] = (1, 2, 3, 4)
    matrix_array: Tuple[int, int] = MATRIX_ARRAY
    dump_images: bool = False

    def __post_init__(self) -> None:
        """Validate the section."""
        if self.trials < 1 or self.threads < 1:
            raise ConfigError(f"Need trials >= 1 and threads >= 1 [{self.trials}, {self.threads}]")
        if not self.clutter_grid or not self.ve_grid:
            raise ConfigError("Clutter and VE grids must be nonempty")


_SECTIONS = {
    "scenario": ScenarioSection,
    "radar": RadarSection,
    "comm": CommSection,
    "detect": DetectSection,
    "assoc": AssocSection,
    "experiment": ExperimentSection,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Full experiment definition."""

    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    radar: RadarSection = field(default_factory=RadarSection)
    comm: CommSection = field(default_factory=CommSection)
    detect: DetectSection = field(default_factory=DetectSection)
    assoc: AssocSection = field(default_factory=AssocSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> ExperimentSpec:
        """Build a spec from parsed YAML."""
        data = dict(data or {})
        for key in data:
            if key not in _SECTIONS:
                raise ConfigError(f"Unknown section [{key}]")
        sections = {}
        for name, section in _SECTIONS.items():
            value = data.get(name)
            if value is not None and not isinstance(value, Mapping):
                raise ConfigError(f"Section [{name}] must be a mapping")
            sections[name] = section.from_dict(value)
        return cls(**sections)

    def as_dict(self) -> Dict[str, Any]:
        """Return the spec as plain data."""
        return {name: getattr(self, name).as_dict() for name in _SECTIONS}

    @property
    def digest(self) -> str:
        """Return the hash recorded in every output file; threads do not count."""
        data = self.as_dict()
        data["experiment"].pop("threads")
        return spec_hash(data)

    def override(
        self,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
        dump_images: Optional[bool] = None,
    ) -> ExperimentSpec:
        """Return a copy with command line overrides applied."""
        changes = {
            key: value
            for key, value in (("seed", seed), ("threads", threads), ("dump_images", dump_images))
            if value is not None
        }
        if not changes:
            return self
        return replace(self, experiment=replace(self.experiment, **changes))


def load_spec(path: Optional[PathLike] = None) -> ExperimentSpec:
    """Load an experiment from a YAML file, or the defaults without one."""
    if path is None:
        return ExperimentSpec()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as ex:
        raise ConfigError(f"Invalid YAML in [{path}]: {ex}") from ex
    except OSError as ex:
        raise ConfigError(f"Cannot read [{path}]: {ex.strerror}") from ex
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"Top level of [{path}] must be a mapping")
    spec = ExperimentSpec.from_dict(data)
    _LOGGER.debug("Loaded %s (%s)", path, spec.digest[:12])
    return spec
