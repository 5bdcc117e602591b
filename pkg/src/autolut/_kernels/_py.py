"""Pure-numpy group kernel: sample both planes, blend, look up, average.

Accumulation order is pinned (zero-init, then terms in (i, j) order; five
lookup vertices left-associated; branches in index order) so the compiled
kernel can reproduce it bit-for-bit.
"""

import numpy as np

from ..lut import interpolate_flat, simplex_parts


def _weighted_patch_sum(padded: np.ndarray, weights: np.ndarray, h: int, w: int) -> np.ndarray:
    """quad[y, x, c] = sum_{i,j} padded[y+i, x+j] * weights[i, j, c]."""
    k = weights.shape[0]
    quad = np.zeros((h, w, 4))
    for c in range(4):
        acc = np.zeros((h, w))
        for i in range(k):
            for j in range(k):
                acc += padded[i:i + h, j:j + w] * weights[i, j, c]
        quad[:, :, c] = acc
    return quad


def group_forward(
    x_prev_pad: np.ndarray,   # (H+k-1, W+k-1) f64, edge-padded bottom/right
    x_prev2_pad: np.ndarray,
    w_curr: np.ndarray,       # (b, k, k, 4) f64, softmax-normalized
    w_prev: np.ndarray,
    w_res: np.ndarray,        # (b, 4) f64 in [0, 1], quad row-major
    luts: np.ndarray,         # (b, 83521, C) uint8
    k: int,
) -> np.ndarray:
    """One group over a full plane: (H, W, C) real-valued branch average."""
    h = x_prev_pad.shape[0] - (k - 1)
    w = x_prev_pad.shape[1] - (k - 1)
    branches, _, channels = luts.shape
    out = np.zeros((h, w, channels))
    for br in range(branches):
        quad_curr = _weighted_patch_sum(x_prev_pad, w_curr[br], h, w)
        quad_prev = _weighted_patch_sum(x_prev2_pad, w_prev[br], h, w)
        coords = (1.0 - w_res[br]) * quad_curr + w_res[br] * quad_prev
        flat_idx, weights, _ = simplex_parts(coords)
        out += interpolate_flat(luts[br], flat_idx, weights)
    return out / branches
