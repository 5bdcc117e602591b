"""Torch modules mirroring the engine's inference semantics.

The float forward is the engine path with two differences: the per-quad
backbone network stands in for the (not yet exported) table, and feature
planes stay real-valued between groups (no 8-bit re-quantization during
training). Everything else matches: sampling windows anchor their top-left
corner at the output pixel with replicate padding, softmax is taken over
the k x k positions per output channel, residual blending is a per-position
convex combination, the rotation ensemble averages the four quarter-turns
per group, and the final group pixel-shuffles scale^2 channels (row-major).
"""

import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import GroupSpec, LayerSpec, TrainerCheckpoint


class AutoSampler(nn.Module):
    """Softmax-weighted k x k reduction to the 4 quad coordinates."""

    def __init__(self, k: int):
        super().__init__()
        self.k = k
        self.logits = nn.Parameter(torch.zeros(k, k, 4))

    def weights(self) -> torch.Tensor:
        flat = self.logits.reshape(self.k * self.k, 4)
        return F.softmax(flat, dim=0).reshape(self.k, self.k, 4)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B,1,H,W) -> (B,4,H,W)
        w = self.weights().permute(2, 0, 1).unsqueeze(1)  # (4,1,k,k)
        padded = F.pad(x, (0, self.k - 1, 0, self.k - 1), mode="replicate")
        return F.conv2d(padded, w)


class Backbone(nn.Module):
    """Per-quad network cached into a table at export: 1x1 layer chain."""

    def __init__(self, out_channels: int, hidden: int = 64, depth: int = 4):
        super().__init__()
        dims = [4] + [hidden] * (depth + 1) + [out_channels]
        self.linears = nn.ModuleList(nn.Conv2d(i, o, 1) for i, o in zip(dims, dims[1:]))

    def forward(self, quads: torch.Tensor) -> torch.Tensor:  # (B,4,H,W) in [0,255]
        x = quads / 255.0
        for i, layer in enumerate(self.linears):
            x = layer(x)
            if i < len(self.linears) - 1:
                x = F.relu(x)
        return torch.clamp(x * 255.0, 0.0, 255.0)

    def layer_specs(self):
        specs = []
        for i, layer in enumerate(self.linears):
            kind = "dense-2x2-reduce" if i == 0 else "pointwise"
            act = "none" if i == len(self.linears) - 1 else "relu"
            specs.append(LayerSpec(kind, layer.in_channels, layer.out_channels, act))
        return tuple(specs)


class Branch(nn.Module):
    def __init__(self, k: int, out_channels: int, hidden: int, depth: int):
        super().__init__()
        self.sampler_curr = AutoSampler(k)
        self.sampler_prev = AutoSampler(k)
        self.residual = nn.Parameter(torch.full((2, 2), 0.5))
        self.backbone = Backbone(out_channels, hidden, depth)

    def forward(self, x_prev, x_prev2):
        p_curr = self.sampler_curr(x_prev)
        p_prev = self.sampler_prev(x_prev2)
        w = self.residual.reshape(1, 4, 1, 1)
        blended = (1.0 - w) * p_curr + w * p_prev
        return self.backbone(blended)


class Group(nn.Module):
    def __init__(self, branches: int, k: int, out_channels: int,
                 hidden: int, depth: int):
        super().__init__()
        self.k = k
        self.out_channels = out_channels
        self.branches = nn.ModuleList(
            Branch(k, out_channels, hidden, depth) for _ in range(branches))

    def forward(self, x_prev, x_prev2):
        acc = None
        for b in self.branches:
            out = b(x_prev, x_prev2)
            acc = out if acc is None else acc + out
        return acc / len(self.branches)


def _rot(x, j):
    return torch.rot90(x, j, dims=(-2, -1))


class SrNet(nn.Module):
    """Full multi-group float pipeline with per-group rotation ensemble."""

    def __init__(self, scale: int, groups_spec, hidden: int = 64, depth: int = 4,
                 ensemble: bool = True):
        super().__init__()
        self.scale = scale
        self.ensemble = ensemble
        self.hidden = hidden
        self.depth = depth
        n = len(groups_spec)
        mods = []
        for i, (branches, k) in enumerate(groups_spec):
            c = scale * scale if i == n - 1 else 1
            mods.append(Group(branches, k, c, hidden, depth))
        self.groups = nn.ModuleList(mods)

    def _group_ensembled(self, g: Group, a, b, final: bool):
        rotations = range(4) if self.ensemble else (0,)
        terms = []
        for j in rotations:
            stack = g(_rot(a, j), _rot(b, j))
            if final and self.scale > 1:
                stack = F.pixel_shuffle(stack, self.scale)
            terms.append(_rot(stack, -j))
        if not self.ensemble:
            return terms[0]
        return ((terms[0] + terms[2]) + (terms[1] + terms[3])) * 0.25

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B,1,H,W) in [0,255]
        planes = [x]
        n = len(self.groups)
        for i, g in enumerate(self.groups):
            a = planes[-1]
            b = planes[-2] if len(planes) >= 2 else planes[-1]
            out = self._group_ensembled(g, a, b, final=i == n - 1)
            if i == n - 1:
                return out
            planes.append(out)
        raise AssertionError("unreachable")

    def float_forward(self, plane) -> "torch.Tensor":
        """Reference forward on one (H, W) array in [0, 255]."""
        with torch.no_grad():
            t = torch.as_tensor(plane, dtype=next(self.parameters()).dtype)
            return self(t.unsqueeze(0).unsqueeze(0))[0, 0]

    # -- checkpoint bridge ----------------------------------------------------

    def group_specs(self):
        return tuple(
            GroupSpec(branches=len(g.branches), k=g.k, out_channels=g.out_channels,
                      backbone=g.branches[0].backbone.layer_specs())
            for g in self.groups
        )

    def to_checkpoint(self) -> TrainerCheckpoint:
        tensors = {}
        for gi, g in enumerate(self.groups):
            for bi, br in enumerate(g.branches):
                prefix = f"g{gi}.b{bi}"
                tensors[f"{prefix}.sampler_curr"] = _np(br.sampler_curr.logits)
                tensors[f"{prefix}.sampler_prev"] = _np(br.sampler_prev.logits)
                tensors[f"{prefix}.residual"] = _np(br.residual)
                for li, layer in enumerate(br.backbone.linears):
                    tensors[f"{prefix}.backbone.{li}.weight"] = _np(
                        layer.weight.reshape(layer.out_channels, layer.in_channels))
                    tensors[f"{prefix}.backbone.{li}.bias"] = _np(layer.bias)
        return TrainerCheckpoint(scale=self.scale, ensemble=self.ensemble,
                                 groups=self.group_specs(), tensors=tensors)

    @classmethod
    def from_checkpoint(cls, ckpt: TrainerCheckpoint) -> "SrNet":
        spec = [(g.branches, g.k) for g in ckpt.groups]
        hidden = ckpt.groups[0].backbone[0].out_channels
        depth = len(ckpt.groups[0].backbone) - 2
        net = cls(ckpt.scale, spec, hidden=hidden, depth=depth,
                  ensemble=ckpt.ensemble)
        for gi, g in enumerate(net.groups):
            for bi, br in enumerate(g.branches):
                prefix = f"g{gi}.b{bi}"
                with torch.no_grad():
                    br.sampler_curr.logits.copy_(
                        torch.from_numpy(ckpt.tensors[f"{prefix}.sampler_curr"].copy()))
                    br.sampler_prev.logits.copy_(
                        torch.from_numpy(ckpt.tensors[f"{prefix}.sampler_prev"].copy()))
                    br.residual.copy_(
                        torch.from_numpy(ckpt.tensors[f"{prefix}.residual"].copy()))
                    for li, layer in enumerate(br.backbone.linears):
                        w = ckpt.tensors[f"{prefix}.backbone.{li}.weight"].copy()
                        layer.weight.copy_(torch.from_numpy(w).reshape(layer.weight.shape))
                        layer.bias.copy_(torch.from_numpy(
                            ckpt.tensors[f"{prefix}.backbone.{li}.bias"].copy()))
        return net


def _np(t: torch.Tensor):
    return t.detach().cpu().numpy().astype("float32")


def init_net(net: SrNet, seed: int) -> SrNet:
    """Seeded init: fan-in-scaled backbones, zero logits, residual 0.5."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for g in net.groups:
            for br in g.branches:
                br.sampler_curr.logits.zero_()
                br.sampler_prev.logits.zero_()
                br.residual.fill_(0.5)
                for layer in br.backbone.linears:
                    fan_in = layer.in_channels
                    std = (2.0 / fan_in) ** 0.5
                    layer.weight.normal_(0.0, std, generator=gen)
                    layer.bias.zero_()
    return net
