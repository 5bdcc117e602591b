"""Trainer for the LUT super-resolution engine.

Optimizes backbone networks jointly with the sampling logits and residual
blend weights on LR/HR patch pairs, then emits the two-file checkpoint
(manifest.json + weights.bin) the engine's export command consumes.
"""

from .checkpoint import TrainerCheckpoint, read, write
from .data import PatchDataset, bicubic_down, load_y
from .model import SrNet, init_net
from .train import build_net, train

__version__ = "0.1.0"
