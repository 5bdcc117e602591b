"""Training data: Y-channel planes with on-the-fly bicubic degradation.

HR images are converted to studio-range BT.601 luma, cropped to
scale-divisible dims, and downscaled with the standard center-aligned Keys
bicubic (a = -0.5, kernel stretched when reducing). Batches are random
aligned HR/LR crops.
"""

import math
from pathlib import Path

import numpy as np
from PIL import Image


def load_y(path) -> np.ndarray:
    """uint8 luma plane of a PNG (grayscale passes through)."""
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    y = 16.0 + rgb @ np.array([65.481, 128.553, 24.966]) / 255.0
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def _keys(x):
    ax = np.abs(x)
    return np.where(ax <= 1.0, 1.5 * ax ** 3 - 2.5 * ax ** 2 + 1.0,
                    np.where(ax < 2.0, -0.5 * ax ** 3 + 2.5 * ax ** 2 - 4.0 * ax + 2.0,
                             0.0))


def _resample_1d(n_in, n_out):
    ratio = n_in / n_out
    shrink = n_out / n_in if n_out < n_in else 1.0
    width = 2.0 / shrink
    centers = (np.arange(n_out) + 0.5) * ratio - 0.5
    left = np.floor(centers - width).astype(np.int64) + 1
    taps = int(math.ceil(2 * width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = _keys(shrink * (centers[:, None] - idx)) * shrink
    w /= w.sum(axis=1, keepdims=True)
    np.clip(idx, 0, n_in - 1, out=idx)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(np.arange(n_out), taps), idx.ravel()), w.ravel())
    return mat


def bicubic_down(plane: np.ndarray, scale: int) -> np.ndarray:
    h, w = plane.shape
    rows = _resample_1d(h, h // scale)
    cols = _resample_1d(w, w // scale)
    out = rows @ plane.astype(np.float64) @ cols.T
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


class PatchDataset:
    """Aligned (LR, HR) patch batches from a directory of images."""

    def __init__(self, data_dir, scale: int, patch_size: int = 48):
        if patch_size % scale:
            raise ValueError(f"patch size {patch_size} must divide by scale {scale}")
        self.scale = scale
        self.patch = patch_size
        self.pairs = []
        for path in sorted(Path(data_dir).glob("*.png")):
            hr = load_y(path)
            hr = hr[:hr.shape[0] - hr.shape[0] % scale,
                    :hr.shape[1] - hr.shape[1] % scale]
            if min(hr.shape) < patch_size:
                continue
            self.pairs.append((bicubic_down(hr, scale), hr))
        if not self.pairs:
            raise ValueError(f"no usable training images in {data_dir}")

    def batch(self, rng: np.random.Generator, batch_size: int):
        s = self.scale
        lp = self.patch // s
        lr_b = np.empty((batch_size, lp, lp), dtype=np.float32)
        hr_b = np.empty((batch_size, self.patch, self.patch), dtype=np.float32)
        for i in range(batch_size):
            lr, hr = self.pairs[rng.integers(len(self.pairs))]
            r = rng.integers(lr.shape[0] - lp + 1)
            c = rng.integers(lr.shape[1] - lp + 1)
            lr_b[i] = lr[r:r + lp, c:c + lp]
            hr_b[i] = hr[r * s:(r + lp) * s, c * s:(c + lp) * s]
        return lr_b, hr_b
