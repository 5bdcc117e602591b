"""Bounded residual fusion of the current and previous sampled quads.

Blends two 2x2 coordinate quads with per-position weights in [0, 1]. Being a
per-position convex combination, the result stays inside [min, max] of the
two inputs — residual information flows between stages without ever leaving
the table's [0, 255] input range.
"""

import numpy as np

from .errors import ContractViolationError, InvalidInputError

RESIDUAL_SHAPE = (2, 2)


def clamp_weights(raw) -> np.ndarray:
    """Elementwise clamp of raw 2x2 blend weights to [0, 1]."""
    w = np.asarray(raw, dtype=np.float64)
    if w.shape != RESIDUAL_SHAPE:
        raise InvalidInputError(f"residual weights must be 2x2, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("residual weights must be finite")
    return np.clip(w, 0.0, 1.0)


def check_weights(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != RESIDUAL_SHAPE:
        raise InvalidInputError(f"residual weights must be 2x2, got {w.shape}")
    if np.any(w < 0.0) or np.any(w > 1.0) or not np.all(np.isfinite(w)):
        raise ContractViolationError(f"residual weights outside [0, 1]: {w}")
    return w


def combine(p_curr: np.ndarray, p_prev: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-position blend: (1 - w) * p_curr + w * p_prev.

    Every output lies between the two inputs at that position, hence in
    [0, 255] whenever both quads are.
    """
    w = check_weights(weights)
    a = np.asarray(p_curr, dtype=np.float64)
    b = np.asarray(p_prev, dtype=np.float64)
    if a.shape != RESIDUAL_SHAPE or b.shape != RESIDUAL_SHAPE:
        raise InvalidInputError("quads must be 2x2")
    for q in (a, b):
        if np.any(q < 0.0) or np.any(q > 255.0):
            raise InvalidInputError("quad values outside [0, 255]")
    return (1.0 - w) * a + w * b
