"""Raster primitives: grayscale conversion, resize, crop, blur and image I/O.

Rasters are ``numpy.uint8`` arrays of shape ``(height, width)``. Float planes
are ``float64`` arrays of the same shape and serve as the working precision
inside filter chains; :func:`quantize` brings them back to 8 bits once, at
the end of a chain.
"""

from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def quantize(plane: np.ndarray) -> np.ndarray:
    """Round half up and clamp to [0, 255]."""
    return np.clip(np.floor(plane + 0.5), 0, 255).astype(np.uint8)


def to_float(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Convert an ``(H, W, 3)`` 8-bit RGB image to an 8-bit luma raster."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {rgb.shape}")
    r, g, b = (rgb[..., c].astype(np.float64) for c in range(3))
    luma = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    return quantize(luma)


def _linear_taps(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel centres: output sample i sits at input coordinate (i + 0.5) * n_in / n_out - 0.5.
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize of an 8-bit raster to exactly ``(new_w, new_h)``."""
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be positive, got {new_w}x{new_h}")
    h, w = img.shape
    if (w, h) == (new_w, new_h):
        return img.copy()
    plane = img.astype(np.float64)
    x0, x1, tx = _linear_taps(w, new_w)
    plane = plane[:, x0] * (1.0 - tx) + plane[:, x1] * tx
    y0, y1, ty = _linear_taps(h, new_h)
    ty = ty[:, None]
    plane = plane[y0, :] * (1.0 - ty) + plane[y1, :] * ty
    return quantize(plane)


def crop(img: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    """Copy the ``w`` x ``h`` rectangle whose top-left corner is ``(x0, y0)``."""
    height, width = img.shape[:2]
    if x0 < 0 or y0 < 0 or w < 1 or h < 1 or x0 + w > width or y0 + h > height:
        raise IndexError(
            f"crop rectangle ({x0}, {y0}, {w}, {h}) outside {width}x{height} image"
        )
    return img[y0 : y0 + h, x0 : x0 + w].copy()


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps over offsets ``-ceil(3 sigma) .. ceil(3 sigma)``."""
    if sigma <= 0:
        raise ValueError(f"kernel sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def _correlate_clamped(plane: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(plane, pad, mode="edge")
    n = plane.shape[axis]
    out = np.zeros_like(plane)
    for offset, weight in enumerate(kernel):
        if axis == 0:
            out += weight * padded[offset : offset + n, :]
        else:
            out += weight * padded[:, offset : offset + n]
    return out


def gaussian_blur(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate borders. ``sigma == 0`` is a no-op."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return plane
    kernel = gaussian_kernel(sigma)
    out = _correlate_clamped(np.asarray(plane, dtype=np.float64), kernel, axis=1)
    return _correlate_clamped(out, kernel, axis=0)


# --- I/O ---------------------------------------------------------------------

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".pgm", ".bmp"}


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Decode an image file to an 8-bit gray ``(H, W)`` or RGB ``(H, W, 3)`` array."""
    with Image.open(path) as im:
        im.load()
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8).copy()
        if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
            raise FormatError(f"{path}: only 8-bit images are supported (mode {im.mode})")
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def read_gray(path: str | os.PathLike) -> np.ndarray:
    """Decode an image and convert it to an 8-bit grayscale raster."""
    img = read_image(path)
    return img if img.ndim == 2 else to_grayscale(img)


def image_size(path: str | os.PathLike) -> tuple[int, int]:
    """Return ``(width, height)`` without decoding pixel data."""
    with Image.open(path) as im:
        return im.size


def write_gray(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write an 8-bit raster as PNG, or binary PGM (P5) for ``.pgm`` paths."""
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError(f"expected a 2-D uint8 raster, got {img.dtype} {img.shape}")
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        h, w = img.shape
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(np.ascontiguousarray(img).tobytes())
        return
    Image.fromarray(img).save(path, format="PNG")
