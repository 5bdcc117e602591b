import os
from pathlib import Path

import numpy as np
import pytest


def _procedural_photo(h=256, w=256, seed=7):
    """Deterministic photo-like plane: gradients, edges, and texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 110 + 60 * np.sin(2 * np.pi * xx / 97.0) * np.cos(2 * np.pi * yy / 61.0)
    img += 40 * ((xx // 32 + yy // 32) % 2)
    img += 25 * np.exp(-((xx - w / 2) ** 2 + (yy - h / 2) ** 2) / (2 * 40.0 ** 2))
    img += rng.normal(0, 4, size=(h, w))
    return np.clip(img, 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def photo():
    """A real photograph when scikit-image ships one, else a procedural plane."""
    try:
        from skimage.data import camera

        return camera()
    except Exception:
        return _procedural_photo()


@pytest.fixture(scope="session")
def photo_rgb():
    try:
        from skimage.data import astronaut

        return astronaut()
    except Exception:
        g = _procedural_photo()
        return np.stack([g, np.roll(g, 3, axis=1), 255 - g], axis=2)


def set5_dir():
    """Directory holding the Set5 HR images, if the dataset is present."""
    for cand in (os.environ.get("AUTOLUT_DATA_DIR"),
                 Path(__file__).resolve().parent.parent / "data"):
        if not cand:
            continue
        p = Path(cand) / "Set5"
        if p.is_dir() and any(p.glob("*.png")) or p.is_dir() and any(p.glob("*.bmp")):
            return p
    return None


requires_set5 = pytest.mark.skipif(
    set5_dir() is None,
    reason="Set5 dataset not available (set AUTOLUT_DATA_DIR or place data/Set5)",
)
