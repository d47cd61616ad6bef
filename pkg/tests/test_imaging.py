import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bgaug import imaging


def reference_bilinear(img, new_w, new_h):
    """Per-pixel scalar bilinear with half-pixel centres and clamped edges."""
    h, w = img.shape
    out = np.zeros((new_h, new_w), dtype=np.uint8)
    for j in range(new_h):
        sy = min(max((j + 0.5) * h / new_h - 0.5, 0.0), h - 1)
        y0 = int(math.floor(sy)); y1 = min(y0 + 1, h - 1); ty = sy - y0
        for i in range(new_w):
            sx = min(max((i + 0.5) * w / new_w - 0.5, 0.0), w - 1)
            x0 = int(math.floor(sx)); x1 = min(x0 + 1, w - 1); tx = sx - x0
            top = img[y0, x0] * (1 - tx) + img[y0, x1] * tx
            bot = img[y1, x0] * (1 - tx) + img[y1, x1] * tx
            v = top * (1 - ty) + bot * ty
            out[j, i] = min(255, max(0, math.floor(v + 0.5)))
    return out


def test_grayscale_examples():
    rgb = np.array([[[255, 255, 255], [0, 0, 0], [100, 150, 50]]], dtype=np.uint8)
    assert imaging.to_grayscale(rgb).tolist() == [[255, 0, 124]]


def test_grayscale_rejects_gray_input():
    with pytest.raises(ValueError):
        imaging.to_grayscale(np.zeros((4, 4), np.uint8))


def test_resize_identity_is_bit_exact():
    img = np.random.default_rng(0).integers(0, 256, (160, 160), dtype=np.uint8)
    assert np.array_equal(imaging.resize_bilinear(img, 160, 160), img)


@pytest.mark.parametrize("size", [(1, 1), (7, 3), (320, 200)])
def test_resize_constant(size):
    img = np.full((13, 9), 77, np.uint8)
    out = imaging.resize_bilinear(img, *size)
    assert out.shape == (size[1], size[0])
    assert np.all(out == 77)


def test_resize_ramp_matches_reference_and_is_monotone():
    img = np.array([[0, 255]], dtype=np.uint8)
    out = imaging.resize_bilinear(img, 4, 1)
    assert np.array_equal(out, reference_bilinear(img, 4, 1))
    assert out[0, 0] == 0 and out[0, -1] == 255
    assert np.all(np.diff(out[0].astype(int)) >= 0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))),
       st.integers(1, 20), st.integers(1, 20))
def test_resize_matches_scalar_reference(img, new_w, new_h):
    assert np.array_equal(imaging.resize_bilinear(img, new_w, new_h), reference_bilinear(img, new_w, new_h))


def test_resize_rejects_empty_target():
    with pytest.raises(ValueError):
        imaging.resize_bilinear(np.zeros((4, 4), np.uint8), 0, 4)


def test_crop_examples():
    img = np.arange(160 * 160, dtype=np.uint32).reshape(160, 160)
    assert np.array_equal(imaging.crop(img, 0, 0, 160, 160), img)
    assert np.array_equal(imaging.crop(img, 0, 32, 160, 96), img[32:128])
    with pytest.raises(IndexError):
        imaging.crop(img, 0, 200, 160, 96)


@given(st.data())
def test_crop_composes(data):
    h, w = 20, 24
    img = np.arange(h * w).reshape(h, w)
    x0 = data.draw(st.integers(0, w - 1)); y0 = data.draw(st.integers(0, h - 1))
    cw = data.draw(st.integers(1, w - x0)); ch = data.draw(st.integers(1, h - y0))
    x1 = data.draw(st.integers(0, cw - 1)); y1 = data.draw(st.integers(0, ch - 1))
    cw2 = data.draw(st.integers(1, cw - x1)); ch2 = data.draw(st.integers(1, ch - y1))
    nested = imaging.crop(imaging.crop(img, x0, y0, cw, ch), x1, y1, cw2, ch2)
    assert np.array_equal(nested, imaging.crop(img, x0 + x1, y0 + y1, cw2, ch2))


@pytest.mark.parametrize("sigma", [0.3, 1.0, 1.5, 2.7])
def test_kernel_normalized_with_expected_radius(sigma):
    k = imaging.gaussian_kernel(sigma)
    assert len(k) == 2 * math.ceil(3 * sigma) + 1
    assert abs(k.sum() - 1.0) < 1e-6
    assert np.allclose(k, k[::-1])


def test_blur_zero_sigma_identity():
    plane = np.random.default_rng(1).normal(size=(9, 11))
    assert imaging.gaussian_blur(plane, 0) is plane


def test_blur_constant_plane():
    plane = np.full((20, 30), 123.25)
    out = imaging.gaussian_blur(plane, 1.0)
    assert np.max(np.abs(out - 123.25)) < 1e-6
    assert abs(out.mean() - 123.25) < 1e-6


def test_blur_impulse_center():
    # Oracle: 1-D kernel from the formula, radius ceil(3 sigma) = 3.
    k = np.arange(-3, 4)
    w = np.exp(-k**2 / 2.0)
    w /= w.sum()
    plane = np.zeros((9, 9))
    plane[4, 4] = 1.0
    out = imaging.gaussian_blur(plane, 1.0)
    assert out[4, 4] == pytest.approx(w[3] ** 2, abs=1e-12)
    np.testing.assert_allclose(out[1:8, 1:8], np.outer(w, w), atol=1e-12)


def test_blur_edge_clamp_keeps_border_level():
    plane = np.zeros((10, 10))
    plane[:, :5] = 100.0
    out = imaging.gaussian_blur(plane, 1.0)
    # Replicated border: the left edge column sees only 100s horizontally.
    assert out[0, 0] == pytest.approx(100.0)


def test_blur_rejects_negative_sigma():
    with pytest.raises(ValueError):
        imaging.gaussian_blur(np.zeros((3, 3)), -1)


def test_quantize_round_half_up_and_clamp():
    plane = np.array([[-3.0, 0.5, 1.49, 2.5, 254.5, 300.0]])
    assert imaging.quantize(plane).tolist() == [[0, 1, 1, 3, 255, 255]]


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_gray_io_roundtrip(tmp_path, suffix):
    img = np.random.default_rng(2).integers(0, 256, (17, 23), dtype=np.uint8)
    path = tmp_path / f"img{suffix}"
    imaging.write_gray(path, img)
    assert np.array_equal(imaging.read_gray(path), img)
    assert imaging.image_size(path) == (23, 17)


def test_pgm_header(tmp_path):
    path = tmp_path / "a.pgm"
    imaging.write_gray(path, np.zeros((2, 3), np.uint8))
    assert path.read_bytes() == b"P5\n3 2\n255\n" + bytes(6)


def test_read_rgb_png_to_gray(tmp_path):
    from PIL import Image
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[0, 0] = (100, 150, 50)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    assert imaging.read_gray(tmp_path / "c.png")[0, 0] == 124
