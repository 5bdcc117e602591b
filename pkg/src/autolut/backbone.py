"""Backbone evaluation, LUT export, checkpoint reading, storage accounting.

A backbone is the small per-quad network whose outputs get cached into a
table: a 4-input reduce layer followed by pointwise layers. Export
enumerates all 17^4 lattice quads (the virtual 256 knot clamps to 255),
evaluates the backbone, and rounds the results into 8-bit entries.

Checkpoints arrive from the trainer as two files: ``manifest.json`` (tensor
directory plus pipeline topology) and ``weights.bin`` (contiguous
little-endian f32). The backbone architecture lives in the manifest, not in
code constants.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import lut, pipeline
from .errors import InvalidCheckpointError
from .residual import clamp_weights
from .sampler import SamplerWeights

KIND_REDUCE = "dense-2x2-reduce"
KIND_POINTWISE = "pointwise"
ACTIVATIONS = ("relu", "none")

DEFAULT_HIDDEN = 64
DEFAULT_DEPTH = 4  # pointwise hidden layers between reduce and head

CHECKPOINT_MANIFEST = "manifest.json"
CHECKPOINT_BLOB = "weights.bin"


@dataclass(frozen=True)
class Layer:
    kind: str
    weight: np.ndarray  # (out_channels, in_channels) f32
    bias: np.ndarray    # (out_channels,) f32
    activation: str

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float32)
        b = np.asarray(self.bias, dtype=np.float32)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise InvalidCheckpointError(f"layer weight {w.shape} / bias {b.shape} mismatch")
        if self.kind not in (KIND_REDUCE, KIND_POINTWISE):
            raise InvalidCheckpointError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise InvalidCheckpointError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class BackboneWeights:
    layers: tuple

    def __post_init__(self):
        ls = tuple(self.layers)
        if not ls:
            raise InvalidCheckpointError("backbone has no layers")
        if ls[0].kind != KIND_REDUCE or ls[0].in_channels != lut.DIMS:
            raise InvalidCheckpointError("first layer must reduce the 2x2 quad (4 inputs)")
        if ls[-1].activation != "none":
            raise InvalidCheckpointError("last layer must have no activation")
        for prev, nxt in zip(ls, ls[1:]):
            if nxt.kind != KIND_POINTWISE:
                raise InvalidCheckpointError("only the first layer may be the reduce layer")
            if nxt.in_channels != prev.out_channels:
                raise InvalidCheckpointError(
                    f"channel mismatch {prev.out_channels} -> {nxt.in_channels}")
        object.__setattr__(self, "layers", ls)

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels


def forward_backbone(weights: BackboneWeights, quads) -> np.ndarray:
    """Evaluate the backbone on quads in [0, 256] -> (..., C) in [0, 255].

    Inputs are normalized by 1/255 before the first layer and the outputs
    mapped back by x255, clamped.
    """
    q = np.asarray(quads, dtype=np.float64)
    single = q.ndim == 1
    x = q.reshape(-1, lut.DIMS) / 255.0
    if np.any(q < 0.0) or np.any(q > 256.0):
        raise InvalidCheckpointError("quad values outside [0, 256]")
    for layer in weights.layers:
        x = x @ layer.weight.T.astype(np.float64) + layer.bias.astype(np.float64)
        if layer.activation == "relu":
            np.maximum(x, 0.0, out=x)
    out = np.clip(x * 255.0, 0.0, 255.0)
    return out[0] if single else out.reshape(q.shape[:-1] + (weights.out_channels,))


def export_lut(weights: BackboneWeights, out_channels=None) -> lut.LutTable:
    """Materialize a backbone into a table by exhaustive lattice enumeration."""
    if out_channels is not None and out_channels != weights.out_channels:
        raise InvalidCheckpointError(
            f"backbone emits {weights.out_channels} channels, expected {out_channels}")
    quads = np.minimum(lut.lattice_quads(), 255.0)  # knot 16 evaluates at 255
    vals = forward_backbone(weights, quads)
    entries = np.floor(vals + 0.5).astype(np.uint8)  # values >= 0: half away == half up
    return lut.LutTable.from_flat(entries, weights.out_channels)


def random_backbone(rng: np.random.Generator, out_channels: int,
                    hidden: int = DEFAULT_HIDDEN, depth: int = DEFAULT_DEPTH) -> BackboneWeights:
    """Fan-in-scaled random backbone (the default reduce + pointwise shape)."""
    dims = [lut.DIMS] + [hidden] * (depth + 1) + [out_channels]
    layers = []
    for i, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
        std = np.sqrt(2.0 / n_in)
        w = rng.normal(0.0, std, size=(n_out, n_in)).astype(np.float32)
        b = np.zeros(n_out, dtype=np.float32)
        kind = KIND_REDUCE if i == 0 else KIND_POINTWISE
        act = "none" if i == len(dims) - 2 else "relu"
        layers.append(Layer(kind, w, b, act))
    return BackboneWeights(tuple(layers))


def storage_size(cfg: pipeline.PipelineConfig) -> dict:
    """Byte breakdown of a pipeline's learned state.

    lut_bytes counts uncompressed 8-bit entries, sampler_bytes the two f32
    logit sets per branch, residual_bytes the 2x2 f32 blend weights.
    """
    lut_bytes = sampler_bytes = residual_bytes = 0
    for g in cfg.groups:
        b = len(g.branches)
        lut_bytes += b * lut.TABLE_POINTS * g.out_channels
        sampler_bytes += b * 2 * (g.k * g.k * 4) * 4
        residual_bytes += b * 4 * 4
    return {
        "lut_bytes": lut_bytes,
        "sampler_bytes": sampler_bytes,
        "residual_bytes": residual_bytes,
        "total": lut_bytes + sampler_bytes + residual_bytes,
    }


# --- checkpoint container (manifest.json + weights.bin) ---------------------

@dataclass(frozen=True)
class LayerMeta:
    kind: str
    in_channels: int
    out_channels: int
    activation: str


@dataclass(frozen=True)
class GroupMeta:
    branches: int
    k: int
    out_channels: int
    backbone: tuple  # LayerMeta


@dataclass(frozen=True)
class Checkpoint:
    scale: int
    ensemble: bool
    groups: tuple  # GroupMeta
    tensors: dict  # name -> f32 ndarray


def _expected_tensors(groups):
    for gi, g in enumerate(groups):
        for bi in range(g.branches):
            prefix = f"g{gi}.b{bi}"
            yield f"{prefix}.sampler_curr", (g.k, g.k, 4)
            yield f"{prefix}.sampler_prev", (g.k, g.k, 4)
            yield f"{prefix}.residual", (2, 2)
            for li, layer in enumerate(g.backbone):
                yield f"{prefix}.backbone.{li}.weight", (layer.out_channels, layer.in_channels)
                yield f"{prefix}.backbone.{li}.bias", (layer.out_channels,)


def load_checkpoint(directory) -> Checkpoint:
    """Read and validate a trainer checkpoint directory."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / CHECKPOINT_MANIFEST).read_text())
        blob = (directory / CHECKPOINT_BLOB).read_bytes()
    except OSError as e:
        raise InvalidCheckpointError(f"unreadable checkpoint: {e}") from e

    try:
        groups = tuple(
            GroupMeta(
                branches=int(g["branches"]),
                k=int(g["k"]),
                out_channels=int(g["out_channels"]),
                backbone=tuple(
                    LayerMeta(l["kind"], int(l["in_channels"]), int(l["out_channels"]),
                              l["activation"])
                    for l in g["backbone"]
                ),
            )
            for g in manifest["groups"]
        )
        scale = int(manifest["scale"])
        ensemble = bool(manifest.get("ensemble", True))
        tensor_list = manifest["tensors"]
    except (KeyError, TypeError) as e:
        raise InvalidCheckpointError(f"malformed manifest: {e}") from e

    seen = {}
    spans = []
    for t in tensor_list:
        name = t["name"]
        if name in seen:
            raise InvalidCheckpointError(f"tensor {name!r} appears twice")
        if t.get("dtype", "f32") != "f32":
            raise InvalidCheckpointError(f"tensor {name!r} has non-f32 dtype")
        shape = tuple(int(d) for d in t["shape"])
        offset = int(t["byte_offset"])
        nbytes = int(np.prod(shape)) * 4
        if offset < 0 or offset + nbytes > len(blob):
            raise InvalidCheckpointError(f"tensor {name!r} exceeds blob")
        spans.append((offset, offset + nbytes, name))
        seen[name] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4,
                                   offset=offset).reshape(shape)
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise InvalidCheckpointError(f"tensors {n0!r} and {n1!r} overlap")

    for name, shape in _expected_tensors(groups):
        if name not in seen:
            raise InvalidCheckpointError(f"missing tensor {name!r}")
        if seen[name].shape != shape:
            raise InvalidCheckpointError(
                f"tensor {name!r} has shape {seen[name].shape}, expected {shape}")
    return Checkpoint(scale=scale, ensemble=ensemble, groups=groups, tensors=seen)


def write_checkpoint(directory, ckpt: Checkpoint) -> None:
    """Write a checkpoint in canonical tensor order (used by tests/tools)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    chunks = []
    offset = 0
    for name, shape in _expected_tensors(ckpt.groups):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        if arr.shape != shape:
            raise InvalidCheckpointError(f"tensor {name!r} shape {arr.shape} != {shape}")
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
    (directory / CHECKPOINT_MANIFEST).write_text(json.dumps(manifest, indent=1))
    (directory / CHECKPOINT_BLOB).write_bytes(b"".join(chunks))


def backbone_from_checkpoint(ckpt: Checkpoint, gi: int, bi: int) -> BackboneWeights:
    meta = ckpt.groups[gi]
    layers = []
    for li, lm in enumerate(meta.backbone):
        prefix = f"g{gi}.b{bi}.backbone.{li}"
        layers.append(Layer(lm.kind, ckpt.tensors[f"{prefix}.weight"],
                            ckpt.tensors[f"{prefix}.bias"], lm.activation))
    return BackboneWeights(tuple(layers))


def export_pipeline(ckpt: Checkpoint) -> pipeline.PipelineConfig:
    """Materialize a full pipeline: one exported table per branch."""
    groups = []
    for gi, g in enumerate(ckpt.groups):
        branches = []
        for bi in range(g.branches):
            prefix = f"g{gi}.b{bi}"
            table = export_lut(backbone_from_checkpoint(ckpt, gi, bi), g.out_channels)
            branches.append(pipeline.BranchConfig(
                sampler_curr=SamplerWeights(ckpt.tensors[f"{prefix}.sampler_curr"].astype(np.float64)),
                sampler_prev=SamplerWeights(ckpt.tensors[f"{prefix}.sampler_prev"].astype(np.float64)),
                residual=clamp_weights(ckpt.tensors[f"{prefix}.residual"].astype(np.float64)),
                table=table,
            ))
        groups.append(pipeline.GroupConfig(tuple(branches)))
    return pipeline.PipelineConfig(scale=ckpt.scale, groups=tuple(groups),
                                   ensemble=ckpt.ensemble)
