"""Training loop: Adam on MSE between the float forward and HR Y patches."""

import numpy as np
import torch

from .data import PatchDataset
from .model import SrNet, init_net


def clamp_residuals(net: SrNet) -> None:
    with torch.no_grad():
        for g in net.groups:
            for br in g.branches:
                br.residual.clamp_(0.0, 1.0)


def check_sampler_normalization(net: SrNet, tol: float = 1e-6) -> None:
    for g in net.groups:
        for br in g.branches:
            for s in (br.sampler_curr, br.sampler_prev):
                sums = s.weights().sum(dim=(0, 1))
                if (sums - 1.0).abs().max().item() > tol:
                    raise AssertionError(f"sampler weights drifted: {sums}")


def train(net: SrNet, dataset: PatchDataset, steps: int, lr: float = 1e-3,
          batch_size: int = 32, seed: int = 0, log_every: int = 100):
    """Runs `steps` updates; returns the per-step loss curve ([0,1] MSE)."""
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(net.parameters(), lr=lr, weight_decay=0.0)
    curve = []
    for step in range(steps):
        lr_b, hr_b = dataset.batch(rng, batch_size)
        x = torch.from_numpy(lr_b).unsqueeze(1)
        want = torch.from_numpy(hr_b).unsqueeze(1)
        out = net(x)
        loss = torch.mean(((out - want) / 255.0) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        clamp_residuals(net)
        check_sampler_normalization(net)
        curve.append(float(loss.item()))
        if log_every and (step + 1) % log_every == 0:
            recent = float(np.mean(curve[-log_every:]))
            print(f"step {step + 1}/{steps}  mse {recent:.5f}")
    return curve


def build_net(scale: int, groups_spec, hidden: int, depth: int, seed: int,
              ensemble: bool = True) -> SrNet:
    torch.manual_seed(seed)
    net = SrNet(scale, groups_spec, hidden=hidden, depth=depth, ensemble=ensemble)
    return init_net(net, seed)
