"""Multi-stage group execution and the pipeline container.

A pipeline is an ordered list of groups. Group n consumes the two previous
feature planes (the first group sees the input twice): every branch samples
both planes into 2x2 coordinate quads, blends them with its residual
weights, and feeds the result through its table; branch outputs are
averaged. Feature planes are re-quantized to 8 bits between groups; the
final group emits scale^2 channels that depth-to-space into the output.

The sampling window for output pixel p has its top-left corner at p
(replicate padding past the bottom/right edges), so the four rotations of
the ensemble sweep a (2k-1)-wide field around p instead of re-reading the
same k x k cells.
"""

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, lut
from .errors import FormatError, InvalidConfigError, InvalidInputError
from .planes import quantize_u8, validate_plane
from .residual import clamp_weights
from .sampler import SamplerWeights, check_normalized, normalize

_MAGIC = b"ALSR"
# version 1 semantics: rotation ensemble averages per group (not once over
# the whole network) and feature planes re-quantize to 8 bits between groups.
_VERSION = 1
_HEADER = struct.Struct("<4sHBB")
_GROUP_HEADER = struct.Struct("<BBH")

PRESET_GRID = ((2, 3), (3, 3), (3, 5), (3, 7), (4, 3), (1, 5))
SPF_LIGHT_GROUPS = 6


@dataclass(frozen=True)
class BranchConfig:
    """One sampling + blending + table unit inside a group."""

    sampler_curr: SamplerWeights
    sampler_prev: SamplerWeights
    residual: np.ndarray  # (2, 2) in [0, 1]
    table: lut.LutTable

    def __post_init__(self):
        if self.sampler_curr.k != self.sampler_prev.k:
            raise InvalidConfigError("the two sampler sets of a branch must share k")
        object.__setattr__(self, "residual", clamp_weights(self.residual))
        self.residual.setflags(write=False)

    @property
    def k(self) -> int:
        return self.sampler_curr.k


@dataclass(frozen=True)
class GroupConfig:
    branches: tuple

    def __post_init__(self):
        bs = tuple(self.branches)
        if not bs:
            raise InvalidConfigError("a group needs at least one branch")
        if len({b.k for b in bs}) != 1:
            raise InvalidConfigError("branches in a group must share sample size")
        if len({b.table.out_channels for b in bs}) != 1:
            raise InvalidConfigError("branch tables in a group must share out_channels")
        object.__setattr__(self, "branches", bs)

    @property
    def k(self) -> int:
        return self.branches[0].k

    @property
    def out_channels(self) -> int:
        return self.branches[0].table.out_channels


@dataclass(frozen=True)
class PipelineConfig:
    scale: int
    groups: tuple
    ensemble: bool = True

    def __post_init__(self):
        gs = tuple(self.groups)
        if self.scale < 1:
            raise InvalidConfigError(f"scale {self.scale} must be >= 1")
        if not gs:
            raise InvalidConfigError("pipeline needs at least one group")
        for g in gs[:-1]:
            if g.out_channels != 1:
                raise InvalidConfigError("feature groups must have out_channels 1")
        if gs[-1].out_channels != self.scale ** 2:
            raise InvalidConfigError(
                f"final group out_channels {gs[-1].out_channels} != scale^2 {self.scale ** 2}"
            )
        object.__setattr__(self, "groups", gs)

    @property
    def receptive_radius(self) -> int:
        """Halo width one output pixel's value can depend on, in LR pixels."""
        return sum(g.k - 1 for g in self.groups)


def extract_patch(plane: np.ndarray, at, k: int) -> np.ndarray:
    """k x k window centered at ``at`` with replicate padding at borders."""
    if k < 1 or k % 2 == 0:
        raise InvalidInputError(f"patch size {k} must be odd")
    r, c = at
    half = (k - 1) // 2
    rows = np.clip(np.arange(r - half, r + half + 1), 0, plane.shape[0] - 1)
    cols = np.clip(np.arange(c - half, c + half + 1), 0, plane.shape[1] - 1)
    return plane[np.ix_(rows, cols)].astype(np.float64)


def _pad_for_window(plane: np.ndarray, k: int) -> np.ndarray:
    padded = np.pad(np.ascontiguousarray(plane, dtype=np.float64),
                    ((0, k - 1), (0, k - 1)), mode="edge")
    return np.ascontiguousarray(padded)


def _group_arrays(g: GroupConfig):
    w_curr = np.stack([check_normalized(normalize(b.sampler_curr)) for b in g.branches])
    w_prev = np.stack([check_normalized(normalize(b.sampler_prev)) for b in g.branches])
    w_res = np.stack([b.residual.reshape(4) for b in g.branches])
    luts = np.stack([b.table.flat for b in g.branches])
    return w_curr, w_prev, w_res, luts


def run_group(x_prev: np.ndarray, x_prev2: np.ndarray, g: GroupConfig,
              kernel: str = "active") -> np.ndarray:
    """One group over aligned feature planes; real-valued (H, W, C) output."""
    if x_prev.shape != x_prev2.shape:
        raise InvalidInputError(f"plane dims differ: {x_prev.shape} vs {x_prev2.shape}")
    validate_plane(x_prev, "x_prev")
    w_curr, w_prev, w_res, luts = _group_arrays(g)
    fwd = _kernels.get_group_forward(kernel)
    return fwd(_pad_for_window(x_prev, g.k), _pad_for_window(x_prev2, g.k),
               w_curr, w_prev, w_res, luts, g.k)


def depth_to_space(stack: np.ndarray, scale: int) -> np.ndarray:
    """(H, W, scale^2) -> (H*scale, W*scale), channels row-major per block."""
    h, w, c = stack.shape
    if c != scale * scale:
        raise InvalidInputError(f"stack has {c} channels, expected {scale * scale}")
    return stack.reshape(h, w, scale, scale).transpose(0, 2, 1, 3).reshape(h * scale, w * scale)


def space_to_depth(plane: np.ndarray, scale: int) -> np.ndarray:
    h, w = plane.shape
    if h % scale or w % scale:
        raise InvalidInputError("plane dims must divide by scale")
    return plane.reshape(h // scale, scale, w // scale, scale).transpose(0, 2, 1, 3).reshape(
        h // scale, w // scale, scale * scale)


def rotation_ensemble(run, x: np.ndarray, block: int = 1) -> np.ndarray:
    """Average ``run`` over the four quarter rotations of ``x``.

    ``run`` maps a plane to a plane (block=1) or to a (h, w, block^2) stack
    whose channels form a block x block tile; stacks are rotated back through
    their spatial arrangement. Terms are reduced as (t0+t2)+(t1+t3), which
    makes the ensemble commute with quarter rotations bit-exactly.
    """
    terms = []
    for j in range(4):
        out = run(np.rot90(x, j))
        if block == 1:
            out = out[:, :, 0] if out.ndim == 3 else out
            terms.append(np.rot90(out, -j))
        else:
            terms.append(np.rot90(depth_to_space(out, block), -j))
    return ((terms[0] + terms[2]) + (terms[1] + terms[3])) * 0.25


def _ensemble_pair(x_prev, x_prev2, g: GroupConfig, block: int) -> np.ndarray:
    terms = []
    for j in range(4):
        stack = run_group(np.rot90(x_prev, j), np.rot90(x_prev2, j), g)
        if block == 1:
            terms.append(np.rot90(stack[:, :, 0], -j))
        else:
            terms.append(np.rot90(depth_to_space(stack, block), -j))
    return ((terms[0] + terms[2]) + (terms[1] + terms[3])) * 0.25


def _run_pipeline(x: np.ndarray, cfg: PipelineConfig, stage_times=None) -> np.ndarray:
    import time

    planes = [x]
    for idx, g in enumerate(cfg.groups):
        t0 = time.perf_counter()
        x_prev = planes[-1]
        x_prev2 = planes[-2] if len(planes) >= 2 else planes[-1]
        final = idx == len(cfg.groups) - 1
        block = cfg.scale if final else 1
        if cfg.ensemble:
            real = _ensemble_pair(x_prev, x_prev2, g, block)
        else:
            stack = run_group(x_prev, x_prev2, g)
            real = depth_to_space(stack, block) if final else stack[:, :, 0]
        out = quantize_u8(real)
        if stage_times is not None:
            stage_times.append(time.perf_counter() - t0)
        if final:
            return out
        planes.append(out)
    raise AssertionError("unreachable")


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = int(os.environ.get("AUTOLUT_THREADS", "1"))
    return max(1, threads)


def super_resolve(x: np.ndarray, cfg: PipelineConfig, threads=None,
                  stage_times=None) -> np.ndarray:
    """Upscale a plane by cfg.scale; output dims are exactly scale * input.

    With more than one worker the image is split into row bands, each
    processed with a halo of ``cfg.receptive_radius`` LR pixels; outputs are
    byte-identical to the single-threaded run.
    """
    validate_plane(x)
    workers = resolve_threads(threads)
    h = x.shape[0]
    if workers <= 1 or h < 2 * workers:
        return _run_pipeline(x, cfg, stage_times)

    radius = cfg.receptive_radius
    bounds = np.linspace(0, h, workers + 1, dtype=np.int64)
    s = cfg.scale

    def band(i):
        r0, r1 = int(bounds[i]), int(bounds[i + 1])
        lo = max(0, r0 - radius)
        hi = min(h, r1 + radius)
        out = _run_pipeline(x[lo:hi], cfg)
        return out[(r0 - lo) * s:(r1 - lo) * s]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(band, range(workers)))
    return np.concatenate(parts, axis=0)


def _affine_mean_table(out_channels: int) -> lut.LutTable:
    # entry = clamp(mean of the 4 raw knot values); exact for the identity
    # preset's on-diagonal lookups.
    quads = lut.lattice_quads()
    vals = np.clip(np.floor(quads.mean(axis=1) + 0.5), 0, 255).astype(np.uint8)
    return lut.LutTable.from_flat(np.repeat(vals[:, None], out_channels, axis=1), out_channels)


def _default_branch(k: int, out_channels: int, table=None) -> BranchConfig:
    zeros = np.zeros((k, k, 4))
    return BranchConfig(
        sampler_curr=SamplerWeights(zeros),
        sampler_prev=SamplerWeights(zeros.copy()),
        residual=np.full((2, 2), 0.5),
        table=table if table is not None else _affine_mean_table(out_channels),
    )


def build_config(scale: int, groups_spec, ensemble: bool = True) -> PipelineConfig:
    """Pipeline from (branches, k) pairs; last group emits scale^2 channels."""
    groups = []
    n = len(groups_spec)
    for i, (b, k) in enumerate(groups_spec):
        c = scale * scale if i == n - 1 else 1
        groups.append(GroupConfig(tuple(_default_branch(k, c) for _ in range(b))))
    return PipelineConfig(scale=scale, groups=tuple(groups), ensemble=ensemble)


def preset_names():
    names = [f"mulut-ours-{b}x{k}" for b, k in PRESET_GRID]
    return names + ["spf-light", "identity"]


def preset_config(name: str, scale: int = 4, ensemble: bool = True,
                  spf_groups: int = SPF_LIGHT_GROUPS) -> PipelineConfig:
    """Shipped architecture presets with default (untrained) weights.

    mulut-ours-BxK: two groups of B branches with sample size K.
    spf-light: a linear chain of ``spf_groups`` single-branch k=3 groups (a
    stand-in chain; the group count is configurable, not a fixed topology).
    identity: one k=1 group at scale 1, passing the input through.
    """
    if name == "identity":
        if scale != 1:
            raise InvalidConfigError("identity preset requires scale 1")
        return build_config(1, [(1, 1)], ensemble)
    if name == "spf-light":
        return build_config(scale, [(1, 3)] * spf_groups, ensemble)
    for b, k in PRESET_GRID:
        if name == f"mulut-ours-{b}x{k}":
            return build_config(scale, [(b, k), (b, k)], ensemble)
    raise InvalidConfigError(f"unknown preset {name!r}; choose from {preset_names()}")


def _pack_sampler(w: SamplerWeights) -> bytes:
    return struct.pack("<B", w.k) + w.logits.astype("<f4").tobytes()


def serialize_pipeline(cfg: PipelineConfig) -> bytes:
    """Encode the pipeline container (little-endian)."""
    parts = [_HEADER.pack(_MAGIC, _VERSION, cfg.scale, len(cfg.groups))]
    for g in cfg.groups:
        parts.append(_GROUP_HEADER.pack(len(g.branches), g.k, g.out_channels))
        for b in g.branches:
            parts.append(_pack_sampler(b.sampler_curr))
            parts.append(_pack_sampler(b.sampler_prev))
            parts.append(b.residual.astype("<f4").tobytes())
            parts.append(lut.serialize(b.table))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def deserialize_pipeline(data: bytes, ensemble: bool = True) -> PipelineConfig:
    rd = _Reader(data)
    magic, version, scale, n_groups = _HEADER.unpack(rd.take(_HEADER.size, "header"))
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    groups = []
    for _ in range(n_groups):
        n_branches, k, channels = _GROUP_HEADER.unpack(
            rd.take(_GROUP_HEADER.size, "group header"))
        branches = []
        for _ in range(n_branches):
            samplers = []
            for _ in range(2):
                at = rd.pos
                (ks,) = struct.unpack("<B", rd.take(1, "sampler size"))
                if ks != k:
                    raise FormatError(f"sampler k {ks} != group k {k}", at)
                raw = rd.take(ks * ks * 4 * 4, "sampler logits")
                logits = np.frombuffer(raw, dtype="<f4").reshape(ks, ks, 4).astype(np.float64)
                samplers.append(SamplerWeights(logits))
            res = np.frombuffer(rd.take(16, "residual weights"), dtype="<f4")
            res = res.astype(np.float64).reshape(2, 2)
            head_at = rd.pos
            head = rd.take(16, "lut header")
            (lut_channels,) = struct.unpack_from("<H", head, 9)
            body = rd.take(lut.TABLE_POINTS * lut_channels, "lut entries")
            try:
                table = lut.deserialize(head + body)
            except FormatError as e:
                raise FormatError(str(e), head_at + e.offset) from None
            branches.append(BranchConfig(samplers[0], samplers[1], res, table))
        group = GroupConfig(tuple(branches))
        if group.out_channels != channels:
            raise FormatError(f"group channels {channels} != table channels", rd.pos)
        groups.append(group)
    if rd.pos != len(data):
        raise FormatError("trailing bytes after pipeline", rd.pos)
    return PipelineConfig(scale=scale, groups=tuple(groups), ensemble=ensemble)


def save_pipeline(path, cfg: PipelineConfig) -> None:
    with open(path, "wb") as f:
        f.write(serialize_pipeline(cfg))


def load_pipeline(path, ensemble: bool = True) -> PipelineConfig:
    with open(path, "rb") as f:
        return deserialize_pipeline(f.read(), ensemble)
