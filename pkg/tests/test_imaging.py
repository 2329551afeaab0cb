import numpy as np
import pytest

from privedit.imaging import (
    GrayImage,
    Image,
    SoftMask,
    canny_edges,
    decode_image,
    encode_image,
    gaussian_blur,
    gaussian_kernel1d,
    sample_bilinear,
    to_grayscale,
)


def test_grayscale_white_is_one():
    img = Image(np.ones((4, 4, 3)))
    assert np.allclose(to_grayscale(img).data, 1.0)


def test_grayscale_uniform_gray_passthrough():
    img = Image(np.full((5, 7, 3), 0.37))
    assert np.allclose(to_grayscale(img).data, 0.37)


def test_grayscale_pure_red():
    data = np.zeros((1, 1, 3))
    data[0, 0, 0] = 1.0
    assert to_grayscale(Image(data)).data[0, 0] == pytest.approx(0.299)


def test_grayscale_idempotent_on_neutral():
    g = np.linspace(0, 1, 24).reshape(4, 6)
    img = Image(np.stack([g, g, g], axis=2))
    once = to_grayscale(img).data
    again = to_grayscale(Image(np.stack([once] * 3, axis=2))).data
    # The weights sum to 1 only up to float rounding: equal to ~1 ulp.
    assert np.allclose(once, again, rtol=0.0, atol=1e-15)


def test_blur_preserves_constant():
    img = GrayImage(np.full((16, 16), 0.42))
    for sigma in (0.5, 1.0, 3.0):
        assert np.allclose(gaussian_blur(img, sigma).data, 0.42)


def test_blur_sigma_zero_identity():
    data = np.random.default_rng(0).uniform(size=(8, 8))
    img = GrayImage(data)
    assert np.array_equal(gaussian_blur(img, 0.0).data, data)


def test_blur_impulse_matches_analytic_kernel():
    data = np.zeros((15, 15))
    data[7, 7] = 1.0
    out = gaussian_blur(GrayImage(data), 1.0).data
    k = gaussian_kernel1d(1.0)
    expected = np.outer(k, k)
    assert np.allclose(out[4:11, 4:11], expected, atol=1e-6)
    assert np.allclose(out[:4], 0.0)


def test_blur_mass_preserved_away_from_borders():
    mask = np.zeros((40, 40))
    mask[15:25, 15:25] = 1.0
    sigma = 2.0
    out = gaussian_blur(SoftMask(mask), sigma)
    assert out.alpha.sum() == pytest.approx(mask.sum(), abs=1e-4)


def test_blur_negative_sigma_rejected():
    with pytest.raises(ValueError):
        gaussian_blur(GrayImage(np.zeros((4, 4))), -1.0)


def test_canny_constant_image_empty():
    out = canny_edges(GrayImage(np.full((20, 20), 0.6)), 0.1, 0.3)
    assert out.alpha.sum() == 0


def test_canny_vertical_step_single_column():
    data = np.zeros((20, 20))
    data[:, 10:] = 1.0
    out = canny_edges(GrayImage(data), 0.2, 0.5, sigma=0.0).alpha
    cols = np.nonzero(out.any(axis=0))[0]
    assert len(cols) == 1
    assert abs(cols[0] - 10) <= 1


def test_canny_step_below_low_threshold_empty():
    # Sobel response of a step of height h is exactly h with unit normalization.
    data = np.zeros((20, 20))
    data[:, 10:] = 0.15
    out = canny_edges(GrayImage(data), 0.2, 0.5, sigma=0.0)
    assert out.alpha.sum() == 0


def test_canny_output_binary():
    rng = np.random.default_rng(3)
    img = GrayImage(rng.uniform(size=(32, 32)))
    out = canny_edges(img, 0.1, 0.25).alpha
    assert set(np.unique(out)) <= {0.0, 1.0}


def test_canny_invariant_to_constant_shift():
    rng = np.random.default_rng(4)
    base = rng.uniform(0.0, 0.5, size=(24, 24))
    a = canny_edges(GrayImage(base), 0.05, 0.15).alpha
    b = canny_edges(GrayImage(base + 0.3), 0.05, 0.15).alpha
    assert np.array_equal(a, b)


def test_canny_threshold_order_enforced():
    with pytest.raises(ValueError):
        canny_edges(GrayImage(np.zeros((4, 4))), 0.5, 0.2)


def test_bilinear_integer_lattice_exact():
    rng = np.random.default_rng(5)
    img = Image(rng.uniform(size=(6, 7, 3)))
    for y in range(6):
        for x in range(7):
            assert np.array_equal(sample_bilinear(img, float(x), float(y)), img.data[y, x])


def test_bilinear_midpoint_average():
    img = Image(np.zeros((2, 2, 3)))
    img.data[0, 0] = 0.2
    img.data[0, 1] = 0.8
    assert np.allclose(sample_bilinear(img, 0.5, 0.0), 0.5)


def test_bilinear_clamps_out_of_range():
    rng = np.random.default_rng(6)
    img = Image(rng.uniform(size=(5, 5, 3)))
    assert np.array_equal(sample_bilinear(img, -5.0, 2.0), sample_bilinear(img, 0.0, 2.0))
    assert np.array_equal(sample_bilinear(img, 4.7e3, 1.0), img.data[1, 4])


def test_png_roundtrip_lossless_at_8bit():
    rng = np.random.default_rng(7)
    img = Image(np.round(rng.uniform(size=(12, 9, 3)) * 255) / 255.0)
    again = decode_image(encode_image(img, format="png"))
    assert np.array_equal(again.data, img.data)


def test_encoding_deterministic():
    img = Image(np.random.default_rng(8).uniform(size=(16, 16, 3)))
    assert encode_image(img, format="png") == encode_image(img, format="png")
    assert encode_image(img, format="jpeg") == encode_image(img, format="jpeg")


def test_image_range_validated():
    with pytest.raises(ValueError):
        Image(np.full((2, 2, 3), 1.5))
    with pytest.raises(ValueError):
        SoftMask(np.full((2, 2), -0.1))
