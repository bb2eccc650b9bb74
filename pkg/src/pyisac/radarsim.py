"""FMCW MIMO radar: echo synthesis, range compression and back-projection."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
import logging
import math
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.signal import get_window

from pyisac.const import (
    CHIRP_CONVENTIONS,
    CHIRP_FULL_SWEEP,
    GRID_HALF_FOV_RAD,
    GRID_N_A,
    GRID_N_R,
    GRID_R_MAX_M,
    GRID_R_MIN_M,
    INTERP_EXACT,
    INTERP_LINEAR,
    INTERP_MODES,
    INTERP_NEAREST,
    RADAR_AMPLITUDE,
    RADAR_BS_HZ,
    RADAR_DYNAMIC_RANGE_DB,
    RADAR_F0_HZ,
    RADAR_FS_HZ,
    RADAR_TC_S,
    RADAR_TP_S,
    RADAR_UPSAMPLE,
    SCALE_DB,
    SCALE_LINEAR,
    SPEED_OF_LIGHT,
    TAPER_HANN,
    TAPER_NONE,
    TAPERS,
    TWO_PI,
)
from pyisac.exceptions import (
    ConfigError,
    DegenerateGeometryError,
    DimensionMismatchError,
    RangeAmbiguityError,
)
from pyisac.geometry import Pose, as_point

_LOGGER = logging.getLogger(__name__)

_TINY = 1e-12
_EXACT_CHUNK = 2048

GainFunction = Callable[[NDArray[Any]], NDArray[Any]]
RngLike = Union[None, int, np.random.Generator]


@dataclass(frozen=True)
class RadarWaveform:
    """Linear FMCW chirp."""

    f0: float = RADAR_F0_HZ
    bs: float = RADAR_BS_HZ
    tc: float = RADAR_TC_S
    tp: float = RADAR_TP_S
    amplitude: float = RADAR_AMPLITUDE
    chirp_convention: str = CHIRP_FULL_SWEEP

    def __post_init__(self) -> None:
        """Validate the chirp."""
        if not 0 < self.tc <= self.tp:
            raise ConfigError(f"Need 0 < tc <= tp, got [{self.tc}, {self.tp}]")
        if self.bs <= 0:
            raise ConfigError(f"Sweep bandwidth must be positive [{self.bs}]")
        if self.f0 <= self.bs:
            raise ConfigError(f"Carrier must exceed the bandwidth [{self.f0}]")
        if self.chirp_convention not in CHIRP_CONVENTIONS:
            raise ConfigError(f"Unknown chirp convention [{self.chirp_convention}]")

    @property
    def mu(self) -> float:
        """Return the chirp rate in Hz/s."""
        if self.chirp_convention == CHIRP_FULL_SWEEP:
            return self.bs / self.tc
        return self.bs / (2.0 * self.tc)

    @property
    def wavelength(self) -> float:
        """Return the carrier wavelength."""
        return SPEED_OF_LIGHT / self.f0

    @property
    def alpha(self) -> float:
        """Return the range compression gain Tc*Bs*A."""
        return self.tc * self.bs * self.amplitude

    @property
    def range_resolution(self) -> float:
        """Return c/(2 Bs)."""
        return SPEED_OF_LIGHT / (2.0 * self.bs)

    def sample_count(self, fs: float) -> int:
        """Return the number of fast-time samples per chirp."""
        return int(round(self.tc * fs))

    def max_delay(self, fs: float) -> float:
        """Return the largest delay whose beat tone is below Nyquist."""
        return min(self.tc, fs / (2.0 * self.mu))


@dataclass(eq=False)
class RadarArray:
    """Tx and Rx element positions; virtual channels are enumerated tx-major."""

    tx_positions: NDArray[Any]
    rx_positions: NDArray[Any]
    element_gain: Optional[GainFunction] = None
    layout: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        """Normalize the position arrays."""
        self.tx_positions = np.atleast_2d(np.asarray(self.tx_positions, dtype=float))
        self.rx_positions = np.atleast_2d(np.asarray(self.rx_positions, dtype=float))
        if self.tx_positions.shape[1] != 3 or self.rx_positions.shape[1] != 3:
            raise DimensionMismatchError("Antenna positions must be 3D")

    @classmethod
    def uniform(
        cls,
        pose: Pose,
        n_az: int,
        n_el: int,
        wavelength: float,
        spacing: Optional[float] = None,
    ) -> RadarArray:
        """Build a single-Tx array with an n_az x n_el Rx grid centred on the pose."""
        if n_az < 1 or n_el < 1:
            raise ConfigError(f"Array needs at least one element [{n_az}x{n_el}]")
        d = wavelength / 2.0 if spacing is None else spacing
        origin = pose.origin
        az_offsets = (np.arange(n_az) - (n_az - 1) / 2.0) * d
        el_offsets = (np.arange(n_el) - (n_el - 1) / 2.0) * d
        rx = (
            origin[None, None, :]
            + az_offsets[:, None, None] * pose.lateral[None, None, :]
            + el_offsets[None, :, None] * pose.normal[None, None, :]
        ).reshape(-1, 3)
        return cls(origin[None, :], rx, layout=(n_az, n_el))

    @property
    def n_channels(self) -> int:
        """Return L = L_tx * L_rx."""
        return len(self.tx_positions) * len(self.rx_positions)

    @cached_property
    def channel_tx(self) -> NDArray[Any]:
        """Return the Tx position of every virtual channel."""
        return np.repeat(self.tx_positions, len(self.rx_positions), axis=0)

    @cached_property
    def channel_rx(self) -> NDArray[Any]:
        """Return the Rx position of every virtual channel."""
        return np.tile(self.rx_positions, (len(self.tx_positions), 1))

    def channel_weights(self, taper: str = TAPER_NONE) -> NDArray[Any]:
        """Return per-channel imaging weights with unit mean."""
        if taper not in TAPERS:
            raise ConfigError(f"Unknown taper [{taper}]")
        if taper == TAPER_NONE or self.layout is None:
            return np.ones(self.n_channels)
        n_az, n_el = self.layout
        window = get_window("hann", n_az + 2, fftbins=False)[1:-1]
        rx_weights = np.repeat(window, n_el)
        weights = np.tile(rx_weights, len(self.tx_positions))
        return weights / weights.mean()

    def gains(self, origins: NDArray[Any], point: NDArray[Any]) -> NDArray[Any]:
        """Return the element power gain toward a point for each origin."""
        if self.element_gain is None:
            return np.ones(len(origins))
        directions = point[None, :] - origins
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return np.asarray(self.element_gain(directions), dtype=float)


@dataclass(frozen=True)
class PointScatterer:
    """Point scatterer in world coordinates."""

    position: Tuple[float, float, float]
    rcs: float
    phase: float = 0.0
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        """Validate the reflectivity."""
        if self.rcs < 0:
            raise ValueError(f"RCS must be nonnegative [{self.rcs}]")


@dataclass(eq=False)
class RadarFrame:
    """Dechirped samples of one PRI, shape [L, N_t]."""

    k: int
    samples: NDArray[Any]
    fs: float
    noise_sigma2: float = 0.0

    @property
    def n_t(self) -> int:
        """Return the number of fast-time samples."""
        return self.samples.shape[1]


@dataclass(eq=False)
class PixelGrid:
    """Range-angle pixel grid on the radar slant plane.

    Rows follow `ranges`, columns follow `angles`.
    """

    ranges: NDArray[Any]
    angles: NDArray[Any]
    origin: Pose
    kind: str = "range_angle"

    def __post_init__(self) -> None:
        """Validate the axes."""
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.angles = np.asarray(self.angles, dtype=float)
        for name, axis in (("ranges", self.ranges), ("angles", self.angles)):
            if axis.ndim != 1 or len(axis) < 2 or np.any(np.diff(axis) <= 0):
                raise ConfigError(f"Grid axis [{name}] must be strictly increasing")
        if self.ranges[0] <= 0:
            raise ConfigError("Grid ranges must be positive")

    @classmethod
    def uniform(
        cls,
        origin: Pose,
        n_r: int = GRID_N_R,
        n_a: int = GRID_N_A,
        r_min: float = GRID_R_MIN_M,
        r_max: float = GRID_R_MAX_M,
        half_fov: float = GRID_HALF_FOV_RAD,
    ) -> PixelGrid:
        """Build a uniformly spaced grid."""
        return cls(
            np.linspace(r_min, r_max, n_r),
            np.linspace(-half_fov, half_fov, n_a),
            origin,
        )

    @property
    def shape(self) -> Tuple[int, int]:
        """Return (N_r, N_a)."""
        return len(self.ranges), len(self.angles)

    @property
    def range_step(self) -> float:
        """Return the range spacing."""
        return float(self.ranges[1] - self.ranges[0])

    @property
    def angle_step(self) -> float:
        """Return the angle spacing."""
        return float(self.angles[1] - self.angles[0])

    def pixel_of(self, rng: float, az: float) -> Tuple[float, float]:
        """Return the fractional (row, col) of a slant-plane position."""
        row = (rng - self.ranges[0]) / self.range_step
        col = (az - self.angles[0]) / self.angle_step
        return float(row), float(col)

    def polar_of(self, row: float, col: float) -> Tuple[float, float]:
        """Return (range, azimuth) of a fractional pixel."""
        return (
            float(self.ranges[0] + row * self.range_step),
            float(self.angles[0] + col * self.angle_step),
        )

    def contains(self, row: float, col: float) -> bool:
        """Tell whether a fractional pixel lies on the grid."""
        n_r, n_a = self.shape
        return 0.0 <= row <= n_r - 1 and 0.0 <= col <= n_a - 1

    @cached_property
    def world_points(self) -> NDArray[Any]:
        """Return the 3D position of every pixel, shape [N_r, N_a, 3]."""
        direction = (
            np.cos(self.angles)[:, None] * self.origin.boresight[None, :]
            + np.sin(self.angles)[:, None] * self.origin.lateral[None, :]
        )
        return (
            self.origin.origin[None, None, :]
            + self.ranges[:, None, None] * direction[None, :, :]
        )


@dataclass(eq=False)
class RadarImage:
    """Complex back-projected image."""

    pixels: NDArray[Any]
    grid: PixelGrid
    k: int
    noise_power: float = 0.0


@dataclass(eq=False)
class RangeAngleMap:
    """Normalized magnitude image; `empty` flags an all-zero source image."""

    values: NDArray[Any]
    empty: bool
    peak: float = 0.0


class RangeProfile:
    """Range-compressed channels.

    `samples` holds the native grid [L, N_t]; `fine` the zero-padded grid
    [L, upsample * N_t] used for back-projection.
    """

    def __init__(
        self,
        fine: NDArray[Any],
        windowed: NDArray[Any],
        waveform: RadarWaveform,
        fs: float,
        upsample: int,
        noise_sigma2: float = 0.0,
        window: Optional[NDArray[Any]] = None,
    ) -> None:
        """Initialize the profile."""
        self.fine = fine
        self.windowed = windowed
        self.waveform = waveform
        self.fs = fs
        self.upsample = upsample
        self.noise_sigma2 = noise_sigma2
        n_t = windowed.shape[1]
        self.window = np.ones(n_t) if window is None else window
        self.n_t = n_t
        self.delays = np.arange(fine.shape[1]) * self.delay_step

    @property
    def samples(self) -> NDArray[Any]:
        """Return the profile on the native delay grid."""
        return self.fine[:, :: self.upsample]

    @property
    def delay_step(self) -> float:
        """Return the spacing of the fine delay grid."""
        return self.fs / (self.fine.shape[1] * self.waveform.mu)

    @property
    def scale(self) -> float:
        """Return the compression scale so that a unit tone peaks at alpha."""
        return self.waveform.bs * self.waveform.tc / self.n_t

    @property
    def n_channels(self) -> int:
        """Return L."""
        return self.fine.shape[0]

    def _video(self, delays: NDArray[Any]) -> NDArray[Any]:
        """Return the phase removed before interpolating."""
        mu = self.waveform.mu
        span = (self.n_t - 1) / self.fs
        return np.exp(1j * math.pi * mu * delays * (delays - span))

    @cached_property
    def smooth(self) -> NDArray[Any]:
        """Return the fine profile with its chirp-like phase removed."""
        return self.fine * self._video(self.delays)[None, :]

    def sample_channel(
        self, channel: int, delays: NDArray[Any], mode: str = INTERP_LINEAR
    ) -> NDArray[Any]:
        """Evaluate one compressed channel at arbitrary delays.

        Delays outside the compressed support evaluate to zero.
        """
        delays = np.asarray(delays, dtype=float)
        out = np.zeros(delays.shape, dtype=complex)
        pos = delays / self.delay_step
        last = self.fine.shape[1] - 1
        valid = (pos >= 0.0) & (pos <= last)
        if not np.any(valid):
            return out
        tau = delays[valid]
        if mode == INTERP_EXACT:
            out[valid] = self._exact(channel, tau)
            return out
        row = self.smooth[channel]
        if mode == INTERP_NEAREST:
            values = row[np.rint(pos[valid]).astype(int)]
        elif mode == INTERP_LINEAR:
            p = pos[valid]
            i0 = np.minimum(np.floor(p).astype(int), last - 1)
            frac = p - i0
            values = row[i0] * (1.0 - frac) + row[i0 + 1] * frac
        else:
            raise ConfigError(f"Unknown interpolation mode [{mode}]")
        out[valid] = values / self._video(tau)
        return out

    def _exact(self, channel: int, tau: NDArray[Any]) -> NDArray[Any]:
        """Evaluate the compression sum directly at each delay."""
        mu = self.waveform.mu
        t_n = np.arange(self.n_t) / self.fs
        y = self.windowed[channel]
        values = np.empty(len(tau), dtype=complex)
        for start in range(0, len(tau), _EXACT_CHUNK):
            chunk = tau[start : start + _EXACT_CHUNK]
            kernel = np.exp(1j * TWO_PI * mu * chunk[:, None] * t_n[None, :])
            values[start : start + _EXACT_CHUNK] = kernel @ y
        return self.scale * values * np.exp(-1j * math.pi * mu * tau**2)


def two_way_delay(p: NDArray[Any], tx: NDArray[Any], rx: NDArray[Any]) -> float:
    """Return (|p - tx| + |rx - p|) / c."""
    p, tx, rx = as_point(p), as_point(tx), as_point(rx)
    d_tx = float(np.linalg.norm(p - tx))
    d_rx = float(np.linalg.norm(rx - p))
    if d_tx < _TINY or d_rx < _TINY:
        raise DegenerateGeometryError(f"Scatterer [{tuple(p)}] sits on an antenna")
    return (d_tx + d_rx) / SPEED_OF_LIGHT


def _channel_geometry(
    scatterer: PointScatterer, array: RadarArray
) -> Tuple[NDArray[Any], NDArray[Any], NDArray[Any]]:
    """Return per-channel Tx leg, Rx leg and two-way delay."""
    p = as_point(scatterer.position)
    r_tx = np.linalg.norm(p[None, :] - array.channel_tx, axis=1)
    r_rx = np.linalg.norm(array.channel_rx - p[None, :], axis=1)
    if np.any(r_tx < _TINY) or np.any(r_rx < _TINY):
        raise DegenerateGeometryError(
            f"Scatterer [{scatterer.position}] sits on an antenna"
        )
    return r_tx, r_rx, (r_tx + r_rx) / SPEED_OF_LIGHT


def channel_amplitudes(
    scatterer: PointScatterer, array: RadarArray, waveform: RadarWaveform, k: int = 0
) -> NDArray[Any]:
    """Return the scattering amplitude of a scatterer on every channel."""
    r_tx, r_rx, _ = _channel_geometry(scatterer, array)
    p = as_point(scatterer.position)
    lam = waveform.wavelength
    gain = array.gains(array.channel_tx, p) * array.gains(array.channel_rx, p)
    magnitude = np.sqrt(
        (4.0 * math.pi) ** -3 * lam**2 * gain * scatterer.rcs / (r_tx**2 * r_rx**2)
    )
    line_of_sight = (p[None, :] - array.channel_tx) / r_tx[:, None]
    radial_velocity = line_of_sight @ as_point(scatterer.velocity)
    doppler = 2.0 * radial_velocity / lam
    phase = scatterer.phase + TWO_PI * doppler * k * waveform.tp
    return magnitude * np.exp(1j * phase)


def scattering_amplitude(
    scatterer: PointScatterer,
    array: RadarArray,
    channel: int,
    waveform: RadarWaveform,
    k: int = 0,
) -> complex:
    """Return the complex scattering amplitude on one virtual channel."""
    return complex(channel_amplitudes(scatterer, array, waveform, k)[channel])


def synthesize_rx(
    scatterers: Sequence[PointScatterer],
    waveform: RadarWaveform,
    array: RadarArray,
    k: int = 0,
    fs: float = RADAR_FS_HZ,
    noise_sigma2: float = 0.0,
    rng: RngLike = None,
) -> RadarFrame:
    """Synthesize the dechirped echo of every virtual channel."""
    n_t = waveform.sample_count(fs)
    mu = waveform.mu
    t_n = np.arange(n_t) / fs
    samples = np.zeros((array.n_channels, n_t), dtype=complex)
    max_delay = waveform.max_delay(fs)
    for scatterer in scatterers:
        _, _, tau = _channel_geometry(scatterer, array)
        if np.any(tau >= max_delay):
            raise RangeAmbiguityError(
                f"Delay [{tau.max():.3e}] s exceeds the unambiguous window"
                f" [{max_delay:.3e}] s"
            )
        if scatterer.rcs == 0:
            continue
        beta = channel_amplitudes(scatterer, array, waveform, k)
        static = (
            waveform.amplitude
            * beta
            * np.exp(-1j * (TWO_PI * waveform.f0 * tau - math.pi * mu * tau**2))
        )
        samples += static[:, None] * np.exp(
            -1j * TWO_PI * mu * tau[:, None] * t_n[None, :]
        )
    if noise_sigma2 > 0:
        generator = np.random.default_rng(rng)
        noise = generator.standard_normal((array.n_channels, n_t, 2))
        samples += math.sqrt(noise_sigma2 / 2.0) * (noise[..., 0] + 1j * noise[..., 1])
    return RadarFrame(k=k, samples=samples, fs=fs, noise_sigma2=noise_sigma2)


def noise_sigma2_for_snr(
    waveform: RadarWaveform,
    array: RadarArray,
    fs: float,
    snr_db: float,
    ref_range: float,
) -> float:
    """Return the per-sample noise power giving a 1 m2 point at ref_range snr_db.

    The SNR is measured on the back-projected image without tapers.
    """
    n_t = waveform.sample_count(fs)
    n_ch = array.n_channels
    beta = waveform.wavelength / ((4.0 * math.pi) ** 1.5 * ref_range**2)
    peak = waveform.alpha * n_ch * beta
    scale = waveform.bs * waveform.tc / n_t
    return peak**2 / (n_ch * scale**2 * n_t * 10.0 ** (snr_db / 10.0))


def range_compress(
    frame: RadarFrame,
    waveform: RadarWaveform,
    upsample: int = RADAR_UPSAMPLE,
    taper: str = TAPER_NONE,
) -> RangeProfile:
    """Compress every channel from beat frequency to delay."""
    n_t = frame.n_t
    if n_t != waveform.sample_count(frame.fs):
        raise DimensionMismatchError(
            f"Frame has [{n_t}] samples, waveform expects"
            f" [{waveform.sample_count(frame.fs)}]"
        )
    if upsample < 1:
        raise ConfigError(f"Upsampling factor must be >= 1 [{upsample}]")
    if taper not in TAPERS:
        raise ConfigError(f"Unknown taper [{taper}]")
    window = np.ones(n_t)
    if taper == TAPER_HANN:
        window = get_window("hann", n_t + 2, fftbins=False)[1:-1]
        window = window / window.mean()
    windowed = frame.samples * window[None, :]
    m = upsample * n_t
    raw = np.fft.ifft(windowed, n=m, axis=1) * m
    delays = np.arange(m) * frame.fs / (m * waveform.mu)
    scale = waveform.bs * waveform.tc / n_t
    fine = scale * raw * np.exp(-1j * math.pi * waveform.mu * delays**2)[None, :]
    return RangeProfile(
        fine,
        windowed,
        waveform,
        frame.fs,
        upsample,
        noise_sigma2=frame.noise_sigma2,
        window=window,
    )


def _backproject_block(
    profile: RangeProfile,
    array: RadarArray,
    points: NDArray[Any],
    weights: NDArray[Any],
    mode: str,
) -> NDArray[Any]:
    """Accumulate all channels, in channel order, for a block of pixels."""
    f0 = profile.waveform.f0
    acc = np.zeros(len(points), dtype=complex)
    for channel in range(array.n_channels):
        tau = (
            np.linalg.norm(points - array.channel_tx[channel], axis=1)
            + np.linalg.norm(points - array.channel_rx[channel], axis=1)
        ) / SPEED_OF_LIGHT
        values = profile.sample_channel(channel, tau, mode)
        acc += weights[channel] * values * np.exp(1j * TWO_PI * f0 * tau)
    return acc


def backproject(
    profile: RangeProfile,
    array: RadarArray,
    grid: PixelGrid,
    k: int = 0,
    mode: str = INTERP_LINEAR,
    taper: str = TAPER_NONE,
    workers: int = 1,
) -> RadarImage:
    """Form the complex image by back-projecting every channel onto the grid."""
    if mode not in INTERP_MODES:
        raise ConfigError(f"Unknown interpolation mode [{mode}]")
    if profile.n_channels != array.n_channels:
        raise DimensionMismatchError(
            f"Profile has [{profile.n_channels}] channels, array"
            f" [{array.n_channels}]"
        )
    weights = array.channel_weights(taper)
    points = grid.world_points.reshape(-1, 3)
    blocks: List[NDArray[Any]] = np.array_split(np.arange(len(points)), max(1, workers))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(
                    lambda idx: _backproject_block(
                        profile, array, points[idx], weights, mode
                    ),
                    blocks,
                )
            )
    else:
        parts = [
            _backproject_block(profile, array, points[idx], weights, mode)
            for idx in blocks
        ]
    pixels = np.concatenate(parts).reshape(grid.shape)
    noise_power = (
        profile.noise_sigma2
        * profile.scale**2
        * float(np.sum(profile.window**2))
        * float(np.sum(weights**2))
    )
    _LOGGER.debug(
        "Back-projected %d channels onto %s grid", array.n_channels, grid.shape
    )
    return RadarImage(pixels=pixels, grid=grid, k=k, noise_power=noise_power)


def to_range_angle_image(
    image: RadarImage,
    dynamic_range_db: float = RADAR_DYNAMIC_RANGE_DB,
    scale: str = SCALE_DB,
) -> RangeAngleMap:
    """Normalize |I| to [0, 1], in decibels or linearly."""
    if image.pixels.size == 0:
        raise DimensionMismatchError("Cannot normalize an empty image")
    magnitude = np.abs(image.pixels)
    peak = float(magnitude.max())
    if peak == 0.0:
        return RangeAngleMap(np.zeros_like(magnitude), empty=True, peak=0.0)
    if scale == SCALE_LINEAR:
        return RangeAngleMap(magnitude / peak, empty=False, peak=peak)
    if scale != SCALE_DB:
        raise ConfigError(f"Unknown image scale [{scale}]")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(magnitude / peak)
    db = np.clip(db, -dynamic_range_db, 0.0)
    return RangeAngleMap(1.0 + db / dynamic_range_db, empty=False, peak=peak)


@dataclass
class RadarChain:
    """Waveform, array and processing options applied to every frame."""

    waveform: RadarWaveform
    array: RadarArray
    grid: PixelGrid
    fs: float = RADAR_FS_HZ
    noise_sigma2: float = 0.0
    upsample: int = RADAR_UPSAMPLE
    interpolation: str = INTERP_LINEAR
    taper: str = TAPER_NONE
    workers: int = 1

    def image(
        self, scatterers: Sequence[PointScatterer], k: int = 0, rng: RngLike = None
    ) -> RadarImage:
        """Run synthesis, range compression and back-projection."""
        frame = synthesize_rx(
            scatterers, self.waveform, self.array, k, self.fs, self.noise_sigma2, rng
        )
        profile = range_compress(frame, self.waveform, self.upsample, self.taper)
        return backproject(
            profile,
            self.array,
            self.grid,
            k=k,
            mode=self.interpolation,
            taper=self.taper,
            workers=self.workers,
        )
