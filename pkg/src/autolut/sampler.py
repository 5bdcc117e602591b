"""Learnable sampling: a softmax-weighted k x k reduction to a 2x2 coord quad.

Each of the four output channels is a convex combination of the k x k input
patch, so outputs can never leave [min(patch), max(patch)]. The four channels
are arranged row-major into a 2x2 grid of LUT coordinates (channel 0 top-left,
1 top-right, 2 bottom-left, 3 bottom-right) — the same pixel-shuffle
orientation the trainer and the depth-to-space stage use.

Logits are the canonical stored form; softmax normalization happens at load
time so the sum-to-one invariant is re-derivable from any checkpoint.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InvalidConfigError, InvalidInputError

QUAD_CHANNELS = 4
WEIGHT_SUM_TOL = 1e-4


@dataclass(frozen=True)
class SamplerWeights:
    """Pre-softmax sampling logits, shape (k, k, 4)."""

    logits: np.ndarray

    def __post_init__(self):
        lg = np.array(self.logits, dtype=np.float64)  # owned copy; frozen below
        if lg.ndim != 3 or lg.shape[0] != lg.shape[1] or lg.shape[2] != QUAD_CHANNELS:
            raise InvalidConfigError("logits must have shape (k, k, 4)")
        k = lg.shape[0]
        if k < 1 or k % 2 == 0:
            raise InvalidConfigError(f"sample size {k} must be odd and >= 1")
        if not np.all(np.isfinite(lg)):
            raise InvalidInputError("logits must be finite")
        object.__setattr__(self, "logits", lg)
        lg.setflags(write=False)

    @property
    def k(self) -> int:
        return self.logits.shape[0]


def normalize(weights: SamplerWeights) -> np.ndarray:
    """Softmax the logits over the k x k spatial positions, per channel.

    Returns a (k, k, 4) array where each channel is non-negative and sums
    to 1, so the weighted patch reduction is a convex combination.
    """
    lg = weights.logits
    shifted = lg - lg.max(axis=(0, 1), keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=(0, 1), keepdims=True)


def check_normalized(w: np.ndarray) -> np.ndarray:
    """Validate a (k, k, 4) weight array is softmax-normalized."""
    w = np.asarray(w, dtype=np.float64)
    sums = w.sum(axis=(0, 1))
    if np.any(np.abs(sums - 1.0) > WEIGHT_SUM_TOL) or np.any(w < 0.0):
        raise ContractViolationError(f"sampling weights not normalized (sums {sums})")
    return w


def sample(patch: np.ndarray, normalized_weights: np.ndarray) -> np.ndarray:
    """Reduce a k x k patch to the 2x2 quad of sampled coordinates.

    Args:
        patch: (k, k) values in [0, 255].
        normalized_weights: (k, k, 4) convex weights (see normalize()).

    Returns:
        (2, 2) float64 grid, channel c at row-major position c.
    """
    w = check_normalized(normalized_weights)
    p = np.asarray(patch, dtype=np.float64)
    if p.shape != w.shape[:2]:
        raise InvalidInputError(f"patch {p.shape} does not match weights {w.shape[:2]}")
    if np.any(p < 0.0) or np.any(p > 255.0):
        raise InvalidInputError("patch values outside [0, 255]")
    quad = np.tensordot(p, w, axes=([0, 1], [0, 1]))
    return quad.reshape(2, 2)


def effective_receptive_field(k: int) -> int:
    """Side length covered by one sampler after the rotation ensemble: 2k-1."""
    if k < 1 or k % 2 == 0:
        raise InvalidConfigError(f"sample size {k} must be odd and >= 1")
    return 2 * k - 1
