"""Image planes, color conversion, resampling baselines, and quality metrics.

A *plane* is a 2-D ``uint8`` ndarray of intensities in [0, 255]; a *float
plane* is the same layout with real values. All operations here are pure
functions and safe to call concurrently.
"""

import math

import numpy as np
from PIL import Image
from scipy.ndimage import correlate1d

from .errors import InvalidInputError

PSNR_CAP_DB = 100.0

# Studio-range BT.601 luma coefficients, applied to 8-bit RGB.
_Y_COEF = np.array([65.481, 128.553, 24.966])


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round real intensities to uint8: half away from zero, clamp [0, 255]."""
    v = np.floor(np.abs(values) + 0.5) * np.sign(values)
    return np.clip(v, 0, 255).astype(np.uint8)


def validate_plane(plane: np.ndarray, name: str = "plane") -> np.ndarray:
    if not isinstance(plane, np.ndarray) or plane.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D array")
    if plane.size == 0:
        raise InvalidInputError(f"{name} is empty")
    return plane


def rgb_to_y(image: np.ndarray) -> np.ndarray:
    """Convert an interleaved 8-bit RGB image to its Y (luma) plane.

    Uses studio-range BT.601: ``Y = 16 + (65.481 R + 128.553 G + 24.966 B)/255``,
    rounded and clamped, so in-range RGB always lands in [16, 235].

    Args:
        image: (H, W, 3) uint8 array.

    Returns:
        (H, W) uint8 Y plane.
    """
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInputError("expected an interleaved (H, W, 3) RGB image")
    if image.dtype != np.uint8:
        raise InvalidInputError("RGB channels must be 8-bit")
    y = 16.0 + image.astype(np.float64) @ _Y_COEF / 255.0
    return quantize_u8(y)


def _keys_cubic(x: np.ndarray) -> np.ndarray:
    """Keys bicubic kernel with a = -0.5, support 2."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = 1.5 * ax3 - 2.5 * ax2 + 1.0
    outer = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def _triangle(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(x))


_KERNELS = {"bilinear": (_triangle, 1.0), "bicubic": (_keys_cubic, 2.0)}


def _resample_matrix(n_in: int, n_out: int, kernel: str, antialias: bool) -> np.ndarray:
    """Weight matrix W (n_out, n_in) for 1-D center-aligned resampling.

    When reducing, the kernel is stretched by the scale factor (antialias),
    matching the convention SR evaluation protocols use for LR generation.
    Out-of-range taps are clamped to the edge samples.
    """
    fn, support = _KERNELS[kernel]
    ratio = n_in / n_out
    shrink = n_out / n_in if (antialias and n_out < n_in) else 1.0
    width = support / shrink
    centers = (np.arange(n_out) + 0.5) * ratio - 0.5
    left = np.floor(centers - width).astype(np.int64) + 1
    taps = int(math.ceil(2.0 * width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = fn(shrink * (centers[:, None] - idx)) * shrink
    w /= w.sum(axis=1, keepdims=True)
    np.clip(idx, 0, n_in - 1, out=idx)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(np.arange(n_out), taps), idx.ravel()), w.ravel())
    return mat


def _nearest_indices(n_in: int, n_out: int) -> np.ndarray:
    centers = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(np.floor(centers + 0.5).astype(np.int64), 0, n_in - 1)


def resize(
    plane: np.ndarray,
    out_h: int,
    out_w: int,
    kernel: str = "bicubic",
    antialias: bool = True,
) -> np.ndarray:
    """Resample a plane to (out_h, out_w).

    Kernels: ``nearest``, ``bilinear``, ``bicubic`` (Keys, a = -0.5). Edges
    are handled by coordinate clamping; the result is rounded half away from
    zero and clamped to [0, 255].
    """
    validate_plane(plane)
    if out_h < 1 or out_w < 1:
        raise InvalidInputError("output dims must be >= 1")
    if kernel == "nearest":
        return plane[np.ix_(_nearest_indices(plane.shape[0], out_h),
                            _nearest_indices(plane.shape[1], out_w))].copy()
    if kernel not in _KERNELS:
        raise InvalidInputError(f"unknown kernel {kernel!r}")
    rows = _resample_matrix(plane.shape[0], out_h, kernel, antialias)
    cols = _resample_matrix(plane.shape[1], out_w, kernel, antialias)
    out = rows @ plane.astype(np.float64) @ cols.T
    return quantize_u8(out)


def resize_rgb(image: np.ndarray, out_h: int, out_w: int,
               kernel: str = "bicubic", antialias: bool = True) -> np.ndarray:
    """Per-channel resize of an interleaved RGB image."""
    if image.ndim == 2:
        return resize(image, out_h, out_w, kernel, antialias)
    return np.stack(
        [resize(image[:, :, c], out_h, out_w, kernel, antialias) for c in range(image.shape[2])],
        axis=2,
    )


def _crop(plane: np.ndarray, border: int) -> np.ndarray:
    if border == 0:
        return plane
    return plane[border:-border, border:-border]


def _check_pair(a: np.ndarray, b: np.ndarray, border_crop: int) -> None:
    validate_plane(a, "a")
    validate_plane(b, "b")
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if border_crop < 0 or 2 * border_crop >= min(a.shape):
        raise InvalidInputError(f"border_crop {border_crop} too large for {a.shape}")


def psnr(a: np.ndarray, b: np.ndarray, border_crop: int = 0) -> float:
    """Peak signal-to-noise ratio in dB over the border-cropped region.

    Identical inputs (zero MSE) return the 100 dB sentinel; the value is
    capped there in general so the metric stays finite.
    """
    _check_pair(a, b, border_crop)
    diff = _crop(a, border_crop).astype(np.float64) - _crop(b, border_crop).astype(np.float64)
    mse = np.mean(diff * diff)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0 ** 2 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def ssim(a: np.ndarray, b: np.ndarray, border_crop: int = 0) -> float:
    """Mean structural similarity over the border-cropped region.

    11x11 Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255;
    the local map is averaged over the valid (fully-windowed) region.
    """
    _check_pair(a, b, border_crop)
    x = _crop(a, border_crop).astype(np.float64)
    y = _crop(b, border_crop).astype(np.float64)
    win = 11
    if min(x.shape) < win:
        raise InvalidInputError(f"image {x.shape} smaller than the {win}x{win} window")
    g = _gaussian_window(win)

    def smooth(img):
        t = correlate1d(img, g, axis=0, mode="constant")
        t = correlate1d(t, g, axis=1, mode="constant")
        m = win // 2
        return t[m:-m, m:-m]

    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    mu_x = smooth(x)
    mu_y = smooth(y)
    sxx = smooth(x * x) - mu_x * mu_x
    syy = smooth(y * y) - mu_y * mu_y
    sxy = smooth(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def load_png(path) -> np.ndarray:
    """Read a PNG as uint8: (H, W) for grayscale, (H, W, 3) for color."""
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_png(path, image: np.ndarray) -> None:
    """Write a uint8 grayscale plane or interleaved RGB image as PNG."""
    if image.dtype != np.uint8 or image.ndim not in (2, 3):
        raise InvalidInputError("expected a uint8 plane or RGB image")
    Image.fromarray(image).save(path, format="PNG")
