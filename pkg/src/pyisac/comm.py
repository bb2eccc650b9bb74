"""Planar arrays, DFT codebooks, two-path channel and exhaustive beam training."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from pyisac.const import (
    AXIS_HORIZONTAL,
    AXIS_VERTICAL,
    COMM_F0_HZ,
    LOS_POWER_SHARE,
    SNR_MAX_DB,
    SNR_MIN_DB,
    SPEED_OF_LIGHT,
    TWO_PI,
    VE_ARRAY,
)
from pyisac.exceptions import ConfigError, DimensionMismatchError, ParseError
from pyisac.geometry import ArrayFrame, Pose, VehiclePose, unit
from pyisac.io import PathLike, read_jsonl, require, write_jsonl

_LOGGER = logging.getLogger(__name__)

_TIE_RTOL = 1e-9
_TINY = 1e-30


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array of n_h x n_v elements."""

    n_h: int
    n_v: int
    spacing: float = SPEED_OF_LIGHT / COMM_F0_HZ / 2.0
    f0: float = COMM_F0_HZ

    def __post_init__(self) -> None:
        """Validate the array."""
        if self.n_h < 1 or self.n_v < 1:
            raise ConfigError(f"Array needs at least one element [{self.n_h}x{self.n_v}]")
        if self.spacing <= 0:
            raise ConfigError(f"Element spacing must be positive [{self.spacing}]")

    @property
    def n(self) -> int:
        """Return the number of elements."""
        return self.n_h * self.n_v

    @property
    def spacing_wavelengths(self) -> float:
        """Return the spacing in carrier wavelengths."""
        return self.spacing * self.f0 / SPEED_OF_LIGHT


@dataclass(frozen=True)
class HybridConfig:
    """Sub-connected hybrid architecture."""

    n_antennas: int
    n_rf: int

    def __post_init__(self) -> None:
        """Validate the split into sub-arrays."""
        if self.n_rf < 1 or self.n_antennas % self.n_rf:
            raise ConfigError(
                f"RF chains [{self.n_rf}] must divide antennas [{self.n_antennas}]"
            )

    @property
    def block(self) -> int:
        """Return the number of antennas per sub-array."""
        return self.n_antennas // self.n_rf


class HybridViolation(Enum):
    """Constraint violated by a hybrid precoder."""

    SHAPE = "shape"
    BLOCK_DIAGONAL = "block_diagonal"
    MODULUS = "modulus"
    POWER = "power"


@dataclass(frozen=True)
class PathParams:
    """One propagation path; angles are (azimuth, elevation) in array frames."""

    alpha: complex
    doppler_nu: float
    dod: Tuple[float, float]
    doa: Tuple[float, float]
    sigma_p2: float


@dataclass(frozen=True)
class PathModel:
    """LOS path plus an optional ground bounce."""

    ground_reflection: bool = True
    los_share: float = LOS_POWER_SHARE

    def __post_init__(self) -> None:
        """Validate the power split."""
        if not 0.0 < self.los_share <= 1.0:
            raise ConfigError(f"LOS share must be in (0, 1] [{self.los_share}]")

    @property
    def shares(self) -> Tuple[float, ...]:
        """Return the power share of each path."""
        if not self.ground_reflection or self.los_share == 1.0:
            return (1.0,)
        return (self.los_share, 1.0 - self.los_share)


@dataclass(eq=False)
class ChannelRealization:
    """Narrowband MIMO channel snapshot, matrix shape [N_R, N_T]."""

    paths: Tuple[PathParams, ...]
    rho: float
    matrix: NDArray[Any]
    bs_geometry: ArrayGeometry
    ve_geometry: ArrayGeometry


@dataclass(eq=False)
class Codebook:
    """DFT beams stored as the columns of an N x N matrix."""

    axis: str
    beams: NDArray[Any]

    def __post_init__(self) -> None:
        """Validate the codebook."""
        if self.axis not in (AXIS_HORIZONTAL, AXIS_VERTICAL):
            raise ConfigError(f"Unknown codebook axis [{self.axis}]")
        if self.beams.ndim != 2 or self.beams.shape[0] != self.beams.shape[1]:
            raise DimensionMismatchError(f"Codebook must be square [{self.beams.shape}]")

    @property
    def n(self) -> int:
        """Return the number of beams."""
        return self.beams.shape[1]

    def beam(self, index: int) -> NDArray[Any]:
        """Return the beam with the given 1-based index."""
        return self.beams[:, index - 1]

    def design_sines(self, spacing_wavelengths: float = 0.5) -> NDArray[Any]:
        """Return the direction sine each beam points to."""
        u = (2.0 * np.arange(self.n) - self.n + 1) / self.n
        return u / (2.0 * spacing_wavelengths)

    def gains(self, response: NDArray[Any]) -> NDArray[Any]:
        """Return |f_i^H a|^2 for every beam."""
        return np.abs(self.beams.conj().T @ response) ** 2


@dataclass(eq=False)
class CodebookPair:
    """Horizontal and vertical codebooks of one planar array."""

    horizontal: Codebook
    vertical: Codebook

    @classmethod
    def dft(cls, n_h: int, n_v: int) -> CodebookPair:
        """Return DFT codebooks for an n_h x n_v array."""
        return cls(dft_codebook(n_h, AXIS_HORIZONTAL), dft_codebook(n_v, AXIS_VERTICAL))

    @property
    def matrix(self) -> NDArray[Any]:
        """Return every composed beam as a column, horizontal index major."""
        return np.kron(self.horizontal.beams, self.vertical.beams)


@dataclass(frozen=True)
class BeamReport:
    """Outcome of beam training for one VE; beam indices are 1-based."""

    ve_id: int
    frame: int
    f_h: int
    f_v: int
    n_h: int
    n_v: int
    rx_beam: int = 1
    snr_db: Optional[float] = None
    best_power_db: float = 0.0
    rx_power_table: Optional[NDArray[Any]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        """Validate the indices."""
        if not (1 <= self.f_h <= self.n_h and 1 <= self.f_v <= self.n_v):
            raise ValueError(
                f"Beam pair [{self.f_h}, {self.f_v}] outside"
                f" [{self.n_h}x{self.n_v}] codebooks"
            )

    @property
    def y_h(self) -> NDArray[Any]:
        """Return the one-hot horizontal selection."""
        return np.eye(self.n_h)[self.f_h - 1]

    @property
    def y_v(self) -> NDArray[Any]:
        """Return the one-hot vertical selection."""
        return np.eye(self.n_v)[self.f_v - 1]


@dataclass(frozen=True)
class InterferenceReport:
    """Per-VE signal and intra-cell interference after beam selection."""

    ve_id: int
    signal_db: float
    interference_db: float
    sinr_db: float
    frame: int = 0


def _axis_response(n: int, phase: float) -> NDArray[Any]:
    """Return exp(j * index * phase) for n elements."""
    return np.exp(1j * np.arange(n) * phase)


def steering_vector(geom: ArrayGeometry, az: float, el: float) -> NDArray[Any]:
    """Return the unit-norm response of a planar array toward (az, el)."""
    d = geom.spacing_wavelengths
    a_h = _axis_response(geom.n_h, TWO_PI * d * math.cos(el) * math.sin(az))
    a_v = _axis_response(geom.n_v, TWO_PI * d * math.sin(el))
    return np.kron(a_h, a_v) / math.sqrt(geom.n)


def dft_codebook(n: int, axis: str) -> Codebook:
    """Return the half-shifted DFT codebook with n beams.

    Beam i points to sine (2i - n + 1)/n, so beams are symmetric about
    broadside and ordered from negative to positive angles.
    """
    if n < 1:
        raise ConfigError(f"Codebook needs at least one beam [{n}]")
    u = (2.0 * np.arange(n) - n + 1) / n
    beams = np.exp(1j * math.pi * np.outer(np.arange(n), u)) / math.sqrt(n)
    return Codebook(axis, beams)


def compose_beam(
    f_h: NDArray[Any], f_v: NDArray[Any], geometry: Optional[ArrayGeometry] = None
) -> NDArray[Any]:
    """Return f_h kron f_v."""
    f_h = np.asarray(f_h)
    f_v = np.asarray(f_v)
    if f_h.ndim != 1 or f_v.ndim != 1:
        raise DimensionMismatchError("Beams must be vectors")
    if geometry is not None and (len(f_h), len(f_v)) != (geometry.n_h, geometry.n_v):
        raise DimensionMismatchError(
            f"Beams [{len(f_h)}x{len(f_v)}] do not fit array"
            f" [{geometry.n_h}x{geometry.n_v}]"
        )
    return np.kron(f_h, f_v)


def path_loss(distance: float, f0: float = COMM_F0_HZ) -> float:
    """Return the free-space path loss (4 pi d f0 / c)^2."""
    return (4.0 * math.pi * distance * f0 / SPEED_OF_LIGHT) ** 2


def generate_channel(
    bs_pose: Pose,
    ve_pose: VehiclePose,
    rng: np.random.Generator,
    path_model: PathModel = PathModel(),
    bs_geometry: ArrayGeometry = ArrayGeometry(2, 2),
    ve_geometry: ArrayGeometry = ArrayGeometry(*VE_ARRAY),
) -> ChannelRealization:
    """Draw a block-fading channel between the BS and a VE antenna."""
    bs = bs_pose.origin
    ve = ve_pose.origin
    bs_frame = ArrayFrame.facing(bs_pose.yaw)
    ve_frame = ArrayFrame.rooftop(ve_pose.heading)
    mirror = np.array([1.0, 1.0, -1.0])
    # Ground bounce follows the image method on the z = 0 plane.
    departures = [ve - bs, ve * mirror - bs]
    arrivals = [bs - ve, bs * mirror - ve]
    rho = path_loss(float(np.linalg.norm(ve - bs)), bs_geometry.f0)
    shares = path_model.shares
    draws = rng.standard_normal((len(shares), 2))
    velocity = np.asarray(ve_pose.velocity, dtype=float)
    wavelength = SPEED_OF_LIGHT / bs_geometry.f0
    paths: List[PathParams] = []
    matrix = np.zeros((ve_geometry.n, bs_geometry.n), dtype=complex)
    for index, share in enumerate(shares):
        alpha = complex(
            math.sqrt(share / 2.0) * draws[index, 0],
            math.sqrt(share / 2.0) * draws[index, 1],
        )
        dod = bs_frame.angles(departures[index])
        doa = ve_frame.angles(arrivals[index])
        nu = float(velocity @ unit(arrivals[index])) / wavelength
        paths.append(PathParams(alpha, nu, dod, doa, share))
        matrix += alpha * np.outer(
            steering_vector(ve_geometry, *doa),
            steering_vector(bs_geometry, *dod).conj(),
        )
    matrix *= math.sqrt(ve_geometry.n * bs_geometry.n / rho)
    return ChannelRealization(tuple(paths), rho, matrix, bs_geometry, ve_geometry)


def _combiner(rx_cb: Union[CodebookPair, NDArray[Any]]) -> NDArray[Any]:
    """Return the receive beams as columns."""
    if isinstance(rx_cb, CodebookPair):
        return rx_cb.matrix
    return np.atleast_2d(np.asarray(rx_cb))


def measurement_noise_power(matrix: NDArray[Any], snr_db: float) -> float:
    """Return the noise variance of one beam measurement at an SNR per antenna.

    The reference is the average per-antenna channel gain.
    """
    n_r, n_t = matrix.shape
    gain = float(np.sum(np.abs(matrix) ** 2)) / (n_r * n_t)
    return gain / 10.0 ** (snr_db / 10.0)


def _stable_argmax(values: NDArray[Any]) -> int:
    """Return the lowest flat index within a relative tolerance of the maximum."""
    flat = values.reshape(-1)
    best = float(flat.max())
    if best <= 0.0:
        return 0
    return int(np.flatnonzero(flat >= best * (1.0 - _TIE_RTOL))[0])


def beam_responses(
    matrix: NDArray[Any],
    tx_cb_h: Codebook,
    tx_cb_v: Codebook,
    combiner: NDArray[Any],
) -> NDArray[Any]:
    """Return w_r^H H (f_i kron f_j) for every (i, j, r)."""
    n_r, n_t = matrix.shape
    if n_t != tx_cb_h.n * tx_cb_v.n:
        raise DimensionMismatchError(
            f"Channel has [{n_t}] Tx antennas, codebooks [{tx_cb_h.n}x{tx_cb_v.n}]"
        )
    if combiner.shape[0] != n_r:
        raise DimensionMismatchError(
            f"Channel has [{n_r}] Rx antennas, combiner [{combiner.shape[0]}]"
        )
    g = (combiner.conj().T @ matrix).reshape(-1, tx_cb_h.n, tx_cb_v.n)
    return np.einsum("rmn,mi,nj->ijr", g, tx_cb_h.beams, tx_cb_v.beams)


def beam_training(
    channel: ChannelRealization,
    tx_cb_h: Codebook,
    tx_cb_v: Codebook,
    rx_cb: Union[CodebookPair, NDArray[Any]],
    snr_db: Optional[float],
    rng: Optional[np.random.Generator] = None,
    ve_id: int = 0,
    frame: int = 0,
    keep_table: bool = False,
    n_pilots: int = 1,
) -> BeamReport:
    """Measure every Tx/Rx beam combination and report the strongest Tx pair.

    Noise is circular Gaussian per measurement with variance equal to the
    average per-antenna channel gain divided by the SNR; `snr_db=None`
    measures noiselessly.
    """
    combiner = _combiner(rx_cb)
    response = beam_responses(channel.matrix, tx_cb_h, tx_cb_v, combiner)
    if snr_db is None:
        power = np.abs(response) ** 2
    else:
        if not SNR_MIN_DB <= snr_db <= SNR_MAX_DB:
            _LOGGER.debug("SNR %.1f dB outside the usual sweep range", snr_db)
        generator = rng if rng is not None else np.random.default_rng()
        sigma2 = measurement_noise_power(channel.matrix, snr_db)
        draws = generator.standard_normal((n_pilots, *response.shape, 2))
        noise = math.sqrt(sigma2 / 2.0) * (draws[..., 0] + 1j * draws[..., 1])
        power = np.mean(np.abs(response[None, ...] + noise) ** 2, axis=0)
    best = _stable_argmax(power)
    i, j, r = np.unravel_index(best, power.shape)
    table = None
    if keep_table:
        table = 10.0 * np.log10(np.maximum(power.reshape(-1, power.shape[2]), _TINY))
    return BeamReport(
        ve_id=ve_id,
        frame=frame,
        f_h=int(i) + 1,
        f_v=int(j) + 1,
        n_h=tx_cb_h.n,
        n_v=tx_cb_v.n,
        rx_beam=int(r) + 1,
        snr_db=snr_db,
        best_power_db=10.0 * math.log10(max(float(power.reshape(-1)[best]), _TINY)),
        rx_power_table=table,
    )


def validate_hybrid(
    F_RF: NDArray[Any],
    F_BB: NDArray[Any],
    tol: float = 1e-9,
) -> List[HybridViolation]:
    """Check a sub-connected hybrid precoder against its constraints."""
    F_RF = np.atleast_2d(np.asarray(F_RF))
    F_BB = np.atleast_2d(np.asarray(F_BB))
    n, n_rf = F_RF.shape
    if n_rf == 0 or n % n_rf or F_BB.shape[0] != n_rf:
        return [HybridViolation.SHAPE]
    violations: List[HybridViolation] = []
    block = n // n_rf
    on_block = np.kron(np.eye(n_rf), np.ones((block, 1))).astype(bool)
    if np.any(np.abs(F_RF[~on_block]) > tol):
        violations.append(HybridViolation.BLOCK_DIAGONAL)
    if np.any(np.abs(np.abs(F_RF[on_block]) - 1.0 / math.sqrt(n)) > tol):
        violations.append(HybridViolation.MODULUS)
    n_streams = F_BB.shape[1]
    power = float(np.sum(np.abs(F_RF @ F_BB) ** 2))
    if abs(power - n_streams) > tol:
        violations.append(HybridViolation.POWER)
    return violations


def build_hybrid_precoder(
    subarray_beams: Sequence[NDArray[Any]], n_streams: int
) -> Tuple[NDArray[Any], NDArray[Any]]:
    """Stack unit-norm sub-array beams into (F_RF, F_BB) meeting the constraints."""
    n_rf = len(subarray_beams)
    if not 1 <= n_streams <= n_rf:
        raise ConfigError(f"Streams [{n_streams}] must be in [1, {n_rf}]")
    block = len(subarray_beams[0])
    if any(len(beam) != block for beam in subarray_beams):
        raise DimensionMismatchError("Sub-array beams must share a length")
    n = n_rf * block
    F_RF = np.zeros((n, n_rf), dtype=complex)
    for index, beam in enumerate(subarray_beams):
        F_RF[index * block : (index + 1) * block, index] = (
            np.asarray(beam) * math.sqrt(block / n)
        )
    selection = np.eye(n_rf, n_streams, dtype=complex)
    norm = float(np.linalg.norm(F_RF @ selection))
    return F_RF, selection * math.sqrt(n_streams) / norm


def intra_cell_interference(
    channels: Mapping[int, ChannelRealization],
    reports: Mapping[int, BeamReport],
    tx_cb_h: Codebook,
    tx_cb_v: Codebook,
    rx_cb: Union[CodebookPair, NDArray[Any]],
    noise_power: Union[float, Mapping[int, float]] = 0.0,
) -> List[InterferenceReport]:
    """Return signal, interference and SINR of each VE when all are served at once.

    `noise_power` is one variance for every VE or a variance per VE id.
    """
    combiner = _combiner(rx_cb)
    beams = {
        ve_id: compose_beam(
            tx_cb_h.beam(report.f_h), tx_cb_v.beam(report.f_v)
        )
        for ve_id, report in reports.items()
    }
    out: List[InterferenceReport] = []
    for ve_id in sorted(reports):
        w = combiner[:, reports[ve_id].rx_beam - 1]
        matrix = channels[ve_id].matrix
        signal = abs(w.conj() @ matrix @ beams[ve_id]) ** 2
        interference = sum(
            abs(w.conj() @ matrix @ beams[other]) ** 2
            for other in sorted(reports)
            if other != ve_id
        )
        noise = (
            float(noise_power.get(ve_id, 0.0))
            if isinstance(noise_power, Mapping)
            else float(noise_power)
        )
        sinr = signal / max(interference + noise, _TINY)
        out.append(
            InterferenceReport(
                ve_id=ve_id,
                signal_db=10.0 * math.log10(max(signal, _TINY)),
                interference_db=10.0 * math.log10(max(interference, _TINY)),
                sinr_db=10.0 * math.log10(max(sinr, _TINY)),
                frame=reports[ve_id].frame,
            )
        )
    return out


def write_codebook(path: PathLike, codebook: Codebook) -> None:
    """Dump a codebook as text: axis and N, then one row of complex entries per line."""
    lines = [f"{codebook.axis} {codebook.n}"]
    for row in codebook.beams:
        lines.append(" ".join(f"{v.real!r},{v.imag!r}" for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write("\n".join(lines) + "\n")


def read_codebook(path: PathLike) -> Codebook:
    """Read a codebook written by write_codebook."""
    with open(path, encoding="utf-8") as fp:
        lines = fp.read().splitlines()
    try:
        axis, size = lines[0].split()
        n = int(size)
        rows = [
            [complex(*map(float, item.split(","))) for item in line.split()]
            for line in lines[1 : n + 1]
        ]
    except (ValueError, IndexError) as ex:
        raise ParseError(f"Malformed codebook [{path}]") from ex
    beams = np.array(rows, dtype=complex)
    if beams.shape != (n, n):
        raise ParseError(f"Codebook [{path}] is not {n}x{n}")
    return Codebook(axis, beams)


def _report_record(report: BeamReport) -> Dict[str, object]:
    """Return the file record of a beam report."""
    return {
        "frame": report.frame,
        "ve_id": report.ve_id,
        "f_h": report.f_h,
        "f_v": report.f_v,
        "n_h": report.n_h,
        "n_v": report.n_v,
        "rx_beam": report.rx_beam,
        "snr_db": report.snr_db,
        "best_power_db": report.best_power_db,
    }


def write_beam_reports(
    path: PathLike,
    reports: Sequence[BeamReport],
    meta: Dict[str, object],
    interference: Sequence[InterferenceReport] = (),
) -> None:
    """Write beam reports as newline-delimited records.

    A report with a matching (frame, ve_id) interference entry also gets
    `interference_db` and `sinr_db`.
    """
    by_key = {(item.frame, item.ve_id): item for item in interference}

    def record(report: BeamReport) -> Dict[str, object]:
        out = _report_record(report)
        item = by_key.get((report.frame, report.ve_id))
        if item is not None:
            out["interference_db"] = item.interference_db
            out["sinr_db"] = item.sinr_db
        return out

    write_jsonl(path, (record(report) for report in reports), header=meta)


def read_beam_reports(path: PathLike) -> List[BeamReport]:
    """Read beam reports written by write_beam_reports."""
    reports = []
    for line_number, record in read_jsonl(path):
        if "header" in record:
            continue
        try:
            reports.append(
                BeamReport(
                    ve_id=int(require(record, "ve_id", line_number)),
                    frame=int(require(record, "frame", line_number)),
                    f_h=int(require(record, "f_h", line_number)),
                    f_v=int(require(record, "f_v", line_number)),
                    n_h=int(require(record, "n_h", line_number)),
                    n_v=int(require(record, "n_v", line_number)),
                    rx_beam=int(record.get("rx_beam", 1)),
                    snr_db=record.get("snr_db"),
                    best_power_db=float(require(record, "best_power_db", line_number)),
                )
            )
        except (TypeError, ValueError) as ex:
            if isinstance(ex, ParseError):
                raise
            raise ParseError(str(ex), line_number) from ex
    return reports
