import os
import shutil

import numpy as np
import pytest
import torch

# two hardware threads in CI-sized sandboxes; oversubscription thrashes
torch.set_num_threads(min(2, os.cpu_count() or 1))

ENGINE_CLI = shutil.which("autolut")

requires_engine = pytest.mark.skipif(
    ENGINE_CLI is None, reason="engine CLI (autolut) not installed")


def procedural_photo(h=192, w=192, seed=7):
    """Deterministic photo-like plane: gradients, edges, texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 110 + 60 * np.sin(2 * np.pi * xx / 97.0) * np.cos(2 * np.pi * yy / 61.0)
    img += 40 * ((xx // 32 + yy // 32) % 2)
    img += 25 * np.exp(-((xx - w / 2) ** 2 + (yy - h / 2) ** 2) / (2 * 40.0 ** 2))
    img += rng.normal(0, 4, size=(h, w))
    return np.clip(img, 0, 255).astype(np.uint8)
