import numpy as np
import pytest
from src.core.exceptions import EmptyImageError
from src.models.preprocessing import FrequencyConfig, SpatialConfig, SpectralImage
from src.services.frequency_service import (
    FrequencyPipeline,
    clip_at_percentile,
    dft_magnitude,
    frequency_representation,
    low_frequency_energy_fraction,
    normalized_spectrum,
)
from src.services.spatial_service import gaussian_blur


def naive_dft(image):
    rows, cols = image.shape
    u = np.arange(rows)[:, None]
    v = np.arange(cols)[:, None]
    row_basis = np.exp(-2j * np.pi * u * np.arange(rows)[None, :] / rows)
    col_basis = np.exp(-2j * np.pi * v * np.arange(cols)[None, :] / cols)
    spectrum = np.zeros((rows, cols), dtype=complex)
    for k in range(rows):
        for l in range(cols):
            spectrum[k, l] = np.sum(image * np.outer(row_basis[k], col_basis[l]))
    return spectrum


def test_dft_magnitude_of_constant_image_is_a_centered_spike():
    image = np.full((8, 8), 0.25)

    spectrum = dft_magnitude(image)

    expected = np.zeros((8, 8))
    expected[4, 4] = 0.25 * 64
    assert np.allclose(spectrum.magnitude, expected, atol=1e-9)


def test_dft_magnitude_of_corner_impulse_is_flat():
    image = np.zeros((8, 8))
    image[0, 0] = 1.0

    spectrum = dft_magnitude(image)

    assert np.allclose(spectrum.magnitude, 1.0)


def test_dft_magnitude_of_cosine_has_two_symmetric_peaks():
    x = np.arange(16)
    image = np.tile(np.cos(2 * np.pi * 3 * x / 16), (16, 1))

    magnitude = dft_magnitude(image).magnitude

    peaks = {tuple(int(i) for i in index) for index in np.argwhere(magnitude > 1e-6)}
    assert peaks == {(8, 5), (8, 11)}
    assert magnitude[8, 5] == pytest.approx(128.0)
    assert magnitude[8, 11] == pytest.approx(128.0)


def test_dft_magnitude_matches_direct_summation(rng):
    image = rng.random((8, 6))

    magnitude = dft_magnitude(image).magnitude

    expected = np.fft.fftshift(np.abs(naive_dft(image)))
    assert np.allclose(magnitude, expected, rtol=1e-6, atol=1e-9)


def test_dft_magnitude_satisfies_parseval(rng):
    image = rng.random((12, 12))

    magnitude = dft_magnitude(image).magnitude

    assert np.sum(magnitude**2) == pytest.approx(144 * np.sum(image**2), rel=1e-9)


def test_dft_magnitude_is_point_symmetric_for_real_input(rng):
    image = rng.random((8, 8))

    unshifted = np.fft.ifftshift(dft_magnitude(image).magnitude)

    indices = (-np.arange(8)) % 8
    assert np.allclose(unshifted, unshifted[np.ix_(indices, indices)])


def test_dft_magnitude_rejects_empty_and_color_input():
    with pytest.raises(EmptyImageError):
        dft_magnitude(np.zeros((0, 0)))
    with pytest.raises(ValueError):
        dft_magnitude(np.zeros((4, 4, 3)))


def test_clip_at_percentile_keeps_flat_spectrum():
    spectrum = SpectralImage(magnitude=np.full((4, 4), 3.0))

    clipped = clip_at_percentile(spectrum, 0.99)

    assert np.array_equal(clipped.magnitude, spectrum.magnitude)
    assert clipped.clip_percentile == 0.99


def test_clip_at_percentile_caps_at_order_statistic():
    values = np.arange(1, 101, dtype=np.float64).reshape(10, 10)
    spectrum = SpectralImage(magnitude=values)

    top = clip_at_percentile(spectrum, 0.99).magnitude
    capped = clip_at_percentile(spectrum, 0.9).magnitude

    assert top.max() == 100.0
    assert capped.max() == 91.0
    assert np.array_equal(capped[values <= 91], values[values <= 91])


def test_clip_at_percentile_one_is_identity(rng):
    spectrum = SpectralImage(magnitude=rng.random((9, 9)))

    clipped = clip_at_percentile(spectrum, 1.0)

    assert np.array_equal(clipped.magnitude, spectrum.magnitude)


def test_clip_at_percentile_is_idempotent(rng):
    spectrum = dft_magnitude(rng.random((32, 32)))

    once = clip_at_percentile(spectrum, 0.99)
    twice = clip_at_percentile(once, 0.99)

    assert np.array_equal(once.magnitude, twice.magnitude)


def test_clip_at_percentile_rejects_out_of_range():
    with pytest.raises(ValueError):
        clip_at_percentile(SpectralImage(magnitude=np.ones((2, 2))), 0.0)


def test_normalized_spectrum_of_constant_image_is_one_at_center():
    image = np.full((8, 8, 3), 0.4, dtype=np.float32)

    spectrum = normalized_spectrum(image, 0.99)

    expected = np.zeros((8, 8))
    expected[4, 4] = 1.0
    assert spectrum.normalized
    assert np.allclose(spectrum.magnitude, expected, atol=1e-12)


def test_frequency_representation_replicates_channels(fundus_image):
    representation = frequency_representation(fundus_image, FrequencyConfig(), 48)

    assert representation.shape == (48, 48, 3)
    assert representation.min() >= 0.0
    assert representation.max() <= 1.0
    assert np.array_equal(representation[..., 0], representation[..., 2])


def test_blur_moves_energy_to_low_frequencies(rng):
    image = rng.random((64, 64)).astype(np.float32)

    sharp = low_frequency_energy_fraction(dft_magnitude(image))
    blurred = low_frequency_energy_fraction(dft_magnitude(gaussian_blur(image, 2.0)))

    assert blurred > sharp


def test_frequency_pipeline_is_deterministic_and_ignores_rng(
    fundus_image, tiny_spatial_config
):
    pipeline = FrequencyPipeline(
        tiny_spatial_config.model_copy(update={"crop_size": 96}), FrequencyConfig(), 48
    )

    plain = pipeline(fundus_image)
    with_rng = pipeline(fundus_image, np.random.default_rng(3))

    assert tuple(plain.shape) == (3, 48, 48)
    assert np.array_equal(plain.numpy(), with_rng.numpy())


def test_frequency_pipeline_dump_spectrum_writes_png(fundus_image, tmp_path):
    pipeline = FrequencyPipeline(SpatialConfig(crop_size=96), FrequencyConfig(), 48)

    path = pipeline.dump_spectrum(fundus_image, tmp_path / "spectrum.png")

    assert path.is_file()
