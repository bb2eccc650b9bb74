"""Radar simulation tests."""
import math

import numpy as np
import pytest
from scipy.signal import find_peaks

from pyisac.const import INTERP_EXACT, INTERP_LINEAR, INTERP_NEAREST, SCALE_LINEAR
from pyisac.exceptions import (
    ConfigError,
    DegenerateGeometryError,
    DimensionMismatchError,
    RangeAmbiguityError,
)
from pyisac.geometry import Pose
from pyisac.radarsim import (
    PixelGrid,
    PointScatterer,
    RadarImage,
    RadarWaveform,
    backproject,
    channel_amplitudes,
    noise_sigma2_for_snr,
    range_compress,
    scattering_amplitude,
    synthesize_rx,
    to_range_angle_image,
    two_way_delay,
)

from .util import build_radar

FS = 64e6
ORIGIN = Pose((0.0, 0.0, 0.0))


def _profile(scatterers, n_az=1, upsample=8):
    waveform, array = build_radar(n_az)
    frame = synthesize_rx(scatterers, waveform, array, fs=FS)
    return range_compress(frame, waveform, upsample)


def test_waveform_defaults():
    waveform = RadarWaveform()

    assert waveform.sample_count(FS) == 768
    assert waveform.range_resolution == pytest.approx(0.1875, rel=1e-3)
    assert waveform.alpha == pytest.approx(12e-6 * 800e6)
    assert waveform.max_delay(FS) * 3e8 / 2 == pytest.approx(72.0, rel=1e-3)


def test_waveform_validation():
    with pytest.raises(ConfigError):
        RadarWaveform(tc=20e-6, tp=15e-6)
    with pytest.raises(ConfigError):
        RadarWaveform(chirp_convention="sawtooth")
    assert RadarWaveform(chirp_convention="half_sweep").mu == pytest.approx(
        RadarWaveform().mu / 2
    )


def test_uniform_array_layout():
    waveform, array = build_radar(4, 2)

    assert array.n_channels == 8
    assert array.layout == (4, 2)
    spacing = np.linalg.norm(array.rx_positions[2] - array.rx_positions[0])
    assert spacing == pytest.approx(waveform.wavelength / 2)
    np.testing.assert_allclose(array.rx_positions.mean(axis=0), 0.0, atol=1e-12)
    weights = array.channel_weights("hann")
    assert weights.mean() == pytest.approx(1.0)
    assert weights[0] < weights[3]


def test_two_way_delay_rejects_coincident_points():
    with pytest.raises(DegenerateGeometryError):
        two_way_delay(np.zeros(3), np.zeros(3), np.ones(3))


def test_scattering_amplitude_follows_radar_equation():
    waveform, array = build_radar(1)
    target = PointScatterer((30.0, 0.0, 0.0), rcs=2.0, phase=0.3)

    beta = scattering_amplitude(target, array, 0, waveform)

    expected = waveform.wavelength * math.sqrt(2.0) / ((4 * math.pi) ** 1.5 * 30.0**2)
    assert abs(beta) == pytest.approx(expected)
    assert np.angle(beta) == pytest.approx(0.3)


def test_doppler_rotates_phase_between_pulses():
    waveform, array = build_radar(1)
    target = PointScatterer((30.0, 0.0, 0.0), rcs=1.0, velocity=(-10.0, 0.0, 0.0))

    first = channel_amplitudes(target, array, waveform, k=0)[0]
    second = channel_amplitudes(target, array, waveform, k=1)[0]

    doppler = 2 * -10.0 / waveform.wavelength
    expected = 2 * math.pi * doppler * waveform.tp
    assert np.angle(second / first) == pytest.approx(
        math.remainder(expected, 2 * math.pi), abs=1e-9
    )


def test_synthesis_rejects_ambiguous_range():
    waveform, array = build_radar(1)

    with pytest.raises(RangeAmbiguityError):
        synthesize_rx([PointScatterer((80.0, 0.0, 0.0), 1.0)], waveform, array, fs=FS)


def test_range_compression_peaks_at_target_delay():
    target = PointScatterer((30.0, 0.0, 0.0), rcs=1.0)
    profile = _profile([target])

    magnitude = np.abs(profile.fine[0])
    peak = int(np.argmax(magnitude))

    assert profile.delays[peak] == pytest.approx(2 * 30.0 / 299792458.0, abs=profile.delay_step)
    assert profile.samples.shape == (1, 768)


def test_range_compression_rejects_mismatched_frame():
    waveform, array = build_radar(1)
    frame = synthesize_rx([], waveform, array, fs=FS)

    with pytest.raises(DimensionMismatchError):
        range_compress(frame, RadarWaveform(tc=10e-6), 8)
    with pytest.raises(ConfigError):
        range_compress(frame, waveform, 0)


def _count_peaks(separation: float) -> int:
    first = PointScatterer((30.0, 0.0, 0.0), rcs=1.0)
    second_at = 30.0 + separation
    alone = [
        _profile([first]).fine[0],
        _profile([PointScatterer((second_at, 0.0, 0.0), rcs=1.0)]).fine[0],
    ]
    midpoint = int(
        round(0.5 * (np.argmax(np.abs(alone[0])) + np.argmax(np.abs(alone[1]))))
    )
    # Put the two responses in quadrature so they add in power.
    shift = np.angle(alone[0][midpoint]) - np.angle(alone[1][midpoint]) + math.pi / 2
    second = PointScatterer((second_at, 0.0, 0.0), rcs=1.0, phase=shift % (2 * math.pi))
    profile = _profile([first, second])
    magnitude = np.abs(profile.fine[0])
    window = slice(midpoint - 64, midpoint + 64)
    local = magnitude[window]
    peaks, _ = find_peaks(local, height=0.5 * local.max())
    return len(peaks)


def test_range_resolution():
    assert _count_peaks(0.25) == 2
    assert _count_peaks(0.05) == 1


def test_backprojection_peak_magnitude_on_grid():
    waveform, array = build_radar(8)
    r0, a0 = 30.0, 0.1
    target = PointScatterer(tuple(ORIGIN.slant_point(r0, a0)), rcs=1.0)
    grid = PixelGrid(
        np.array([r0 - 0.05, r0, r0 + 0.05]), np.array([a0 - 0.01, a0, a0 + 0.01]), ORIGIN
    )
    frame = synthesize_rx([target], waveform, array, fs=FS)
    profile = range_compress(frame, waveform, 8)

    image = backproject(profile, array, grid, mode=INTERP_EXACT)

    betas = channel_amplitudes(target, array, waveform)
    expected = waveform.alpha * np.sum(np.abs(betas))
    assert abs(image.pixels[1, 1]) == pytest.approx(expected, rel=1e-6)
    assert np.argmax(np.abs(image.pixels)) == 4


def test_backprojection_peak_location():
    waveform, array = build_radar(128)
    r0, a0 = 30.0, 0.2
    target = PointScatterer(tuple(ORIGIN.slant_point(r0, a0)), rcs=1.0)
    grid = PixelGrid(
        r0 + 0.05 * np.arange(-10, 11), a0 + 0.004 * np.arange(-10, 11), ORIGIN
    )
    frame = synthesize_rx([target], waveform, array, fs=FS)
    profile = range_compress(frame, waveform, 8)

    image = backproject(profile, array, grid, mode=INTERP_LINEAR, workers=2)

    row, col = np.unravel_index(np.argmax(np.abs(image.pixels)), grid.shape)
    assert abs(grid.ranges[row] - r0) <= 0.5 * waveform.range_resolution
    assert abs(grid.angles[col] - a0) <= 1.0 / 128



@pytest.mark.slow
def test_backprojection_peak_location_random_placements():
    waveform, array = build_radar(128)
    gen = np.random.default_rng(5)
    for _ in range(50):
        r0 = float(gen.uniform(20.0, 45.0))
        a0 = float(gen.uniform(-0.5, 0.5))
        target = PointScatterer(tuple(ORIGIN.slant_point(r0, a0)), rcs=1.0)
        dr, da = gen.uniform(-0.5, 0.5, 2)
        grid = PixelGrid(
            r0 + 0.05 * (np.arange(-10, 11) + dr), a0 + 0.004 * (np.arange(-10, 11) + da), ORIGIN
        )
        profile = range_compress(synthesize_rx([target], waveform, array, fs=FS), waveform, 8)

        image = backproject(profile, array, grid)

        row, col = np.unravel_index(np.argmax(np.abs(image.pixels)), grid.shape)
        assert abs(grid.ranges[row] - r0) <= 0.5 * waveform.range_resolution
        assert abs(grid.angles[col] - a0) <= 1.0 / (128 * math.cos(a0))


def test_synthesis_and_imaging_are_linear():
    waveform, array = build_radar(8)
    first = PointScatterer((25.0, 3.0, 0.0), rcs=1.0, phase=0.4)
    second = PointScatterer((32.0, -4.0, 0.5), rcs=2.5, phase=1.9)
    grid = PixelGrid.uniform(ORIGIN, 16, 16, 20.0, 40.0, 0.5)

    frames = [synthesize_rx(s, waveform, array, fs=FS) for s in ([first], [second], [first, second])]
    total = frames[0].samples + frames[1].samples
    np.testing.assert_allclose(frames[2].samples, total, rtol=0.0, atol=1e-12 * np.abs(total).max())

    images = [backproject(range_compress(f, waveform, 4), array, grid).pixels for f in frames]
    np.testing.assert_allclose(
        images[2], images[0] + images[1], rtol=0.0, atol=1e-9 * np.abs(images[2]).max()
    )


def test_backprojection_workers_do_not_change_pixels():
    waveform, array = build_radar(8)
    target = PointScatterer((25.0, 3.0, 0.0), rcs=1.0)
    grid = PixelGrid.uniform(ORIGIN, 16, 16, 20.0, 30.0, 0.5)
    profile = range_compress(synthesize_rx([target], waveform, array, fs=FS), waveform, 4)

    single = backproject(profile, array, grid, workers=1)
    threaded = backproject(profile, array, grid, workers=3)

    np.testing.assert_array_equal(single.pixels, threaded.pixels)


def test_image_noise_power():
    waveform, array = build_radar(16)
    grid = PixelGrid.uniform(ORIGIN, 64, 64, 10.0, 60.0, math.radians(60))
    frame = synthesize_rx([], waveform, array, fs=FS, noise_sigma2=1.0, rng=3)
    profile = range_compress(frame, waveform, 8)

    image = backproject(profile, array, grid, mode=INTERP_NEAREST)

    measured = float(np.mean(np.abs(image.pixels) ** 2))
    assert measured == pytest.approx(image.noise_power, rel=0.15)


def test_noise_sigma2_scales_with_snr():
    waveform, array = build_radar(8)

    low = noise_sigma2_for_snr(waveform, array, FS, 20.0, 30.0)
    high = noise_sigma2_for_snr(waveform, array, FS, 30.0, 30.0)

    assert low / high == pytest.approx(10.0)


def test_noise_sigma2_sets_image_snr():
    waveform, array = build_radar(8)
    r0 = 30.0
    target = PointScatterer((r0, 0.0, 0.0), rcs=1.0)
    grid = PixelGrid(np.array([r0 - 0.05, r0, r0 + 0.05]), np.array([-0.01, 0.0, 0.01]), ORIGIN)
    sigma2 = noise_sigma2_for_snr(waveform, array, FS, 25.0, r0)
    profile = range_compress(synthesize_rx([target], waveform, array, fs=FS), waveform, 8)
    profile.noise_sigma2 = sigma2

    image = backproject(profile, array, grid, mode=INTERP_EXACT)

    snr = abs(image.pixels[1, 1]) ** 2 / image.noise_power
    assert 10 * math.log10(snr) == pytest.approx(25.0, abs=0.01)


def test_range_angle_image_scales():
    grid = PixelGrid.uniform(ORIGIN, 4, 4, 10.0, 20.0, 0.5)
    pixels = np.zeros((4, 4), dtype=complex)
    pixels[1, 2] = 2.0
    pixels[3, 0] = 0.02
    image = RadarImage(pixels, grid, 0)

    linear = to_range_angle_image(image, 60.0, SCALE_LINEAR)
    db = to_range_angle_image(image, 60.0)

    assert linear.peak == 2.0
    assert linear.values[1, 2] == 1.0
    assert linear.values[3, 0] == pytest.approx(0.01)
    assert db.values[1, 2] == 1.0
    assert db.values[3, 0] == pytest.approx(1.0 - 40.0 / 60.0)
    assert db.values[0, 0] == 0.0


def test_range_angle_image_of_empty_scene():
    grid = PixelGrid.uniform(ORIGIN, 4, 4, 10.0, 20.0, 0.5)

    rmap = to_range_angle_image(RadarImage(np.zeros((4, 4), dtype=complex), grid, 0))

    assert rmap.empty
    assert not rmap.values.any()


def test_pixel_grid_validation():
    with pytest.raises(ConfigError):
        PixelGrid(np.array([10.0, 9.0]), np.array([0.0, 0.1]), ORIGIN)
    with pytest.raises(ConfigError):
        PixelGrid(np.array([0.0, 1.0]), np.array([0.0, 0.1]), ORIGIN)

    grid = PixelGrid.uniform(ORIGIN, 11, 21, 10.0, 20.0, 0.5)
    row, col = grid.pixel_of(15.0, 0.0)
    assert (row, col) == pytest.approx((5.0, 10.0))
    assert grid.polar_of(row, col) == pytest.approx((15.0, 0.0))
    assert not grid.contains(-0.5, 3.0)
