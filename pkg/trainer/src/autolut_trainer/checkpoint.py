"""Checkpoint container: manifest.json + weights.bin.

The manifest lists the pipeline topology (scale, per-group branch count,
sample size, output channels, backbone layer descriptors) and a tensor
directory {name, shape, dtype=f32, byte_offset}; the blob is contiguous
little-endian f32. Tensor names follow
``g{gi}.b{bi}.{sampler_curr|sampler_prev|residual|backbone.{li}.weight|bias}``.
Writes are atomic (temp file + rename).
"""

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "weights.bin"


@dataclass(frozen=True)
class LayerSpec:
    kind: str            # "dense-2x2-reduce" | "pointwise"
    in_channels: int
    out_channels: int
    activation: str      # "relu" | "none"


@dataclass(frozen=True)
class GroupSpec:
    branches: int
    k: int
    out_channels: int
    backbone: tuple  # LayerSpec


@dataclass(frozen=True)
class TrainerCheckpoint:
    scale: int
    ensemble: bool
    groups: tuple        # GroupSpec
    tensors: dict        # name -> np.ndarray f32


def tensor_names(groups):
    """Canonical tensor iteration order shared with the engine."""
    for gi, g in enumerate(groups):
        for bi in range(g.branches):
            prefix = f"g{gi}.b{bi}"
            yield f"{prefix}.sampler_curr", (g.k, g.k, 4)
            yield f"{prefix}.sampler_prev", (g.k, g.k, 4)
            yield f"{prefix}.residual", (2, 2)
            for li, layer in enumerate(g.backbone):
                yield f"{prefix}.backbone.{li}.weight", (layer.out_channels, layer.in_channels)
                yield f"{prefix}.backbone.{li}.bias", (layer.out_channels,)


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write(directory, ckpt: TrainerCheckpoint) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    chunks = []
    offset = 0
    for name, shape in tensor_names(ckpt.groups):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        if arr.shape != shape:
            raise ValueError(f"tensor {name!r} has shape {arr.shape}, expected {shape}")
        records.append({"name": name, "shape": list(shape), "dtype": "f32",
                        "byte_offset": offset})
        chunks.append(arr.tobytes())
        offset += len(chunks[-1])
    manifest = {
        "format": "autolut-checkpoint",
        "version": 1,
        "scale": ckpt.scale,
        "ensemble": ckpt.ensemble,
        "groups": [
            {
                "branches": g.branches,
                "k": g.k,
                "out_channels": g.out_channels,
                "backbone": [
                    {"kind": l.kind, "in_channels": l.in_channels,
                     "out_channels": l.out_channels, "activation": l.activation}
                    for l in g.backbone
                ],
            }
            for g in ckpt.groups
        ],
        "tensors": records,
    }
    _atomic_write(directory / MANIFEST_NAME,
                  json.dumps(manifest, indent=1).encode())
    _atomic_write(directory / BLOB_NAME, b"".join(chunks))


def read(directory) -> TrainerCheckpoint:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    blob = (directory / BLOB_NAME).read_bytes()
    groups = tuple(
        GroupSpec(
            branches=g["branches"],
            k=g["k"],
            out_channels=g["out_channels"],
            backbone=tuple(LayerSpec(l["kind"], l["in_channels"],
                                     l["out_channels"], l["activation"])
                           for l in g["backbone"]),
        )
        for g in manifest["groups"]
    )
    tensors = {}
    for t in manifest["tensors"]:
        shape = tuple(t["shape"])
        n = int(np.prod(shape))
        tensors[t["name"]] = np.frombuffer(
            blob, dtype="<f4", count=n, offset=t["byte_offset"]).reshape(shape)
    return TrainerCheckpoint(scale=manifest["scale"],
                             ensemble=manifest.get("ensemble", True),
                             groups=groups, tensors=tensors)
