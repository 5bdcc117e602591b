import numpy as np
import torch

from autolut_trainer import build_net
from autolut_trainer.model import SrNet
from autolut_trainer.checkpoint import read, write


def test_constant_input_constant_output():
    net = build_net(2, [(1, 3), (1, 3)], hidden=8, depth=1, seed=0)
    out = net.float_forward(np.full((6, 8), 123.0)).numpy()
    assert out.shape == (12, 16)
    assert np.ptp(out) < 1e-4


def test_k1_identityish_backbone_replicates_pixels():
    # head averages hidden units that each carry the quad mean: the net
    # becomes nearest-neighbor upsampling for k=1 samplers
    net = build_net(2, [(1, 1)], hidden=4, depth=0, seed=0)
    with torch.no_grad():
        for br in net.groups[0].branches:
            reduce, head = br.backbone.linears
            reduce.weight.fill_(0.25)
            reduce.bias.zero_()
            head.weight.fill_(1.0 / reduce.out_channels)
            head.bias.zero_()
    x = np.random.default_rng(1).integers(0, 256, (5, 7)).astype(np.float64)
    out = net.float_forward(x).numpy()
    want = np.kron(x, np.ones((2, 2)))
    assert np.abs(out - want).max() < 1e-3


def test_sampler_weights_sum_to_one():
    net = build_net(4, [(2, 5), (2, 5)], hidden=8, depth=0, seed=9)
    with torch.no_grad():
        net.groups[0].branches[0].sampler_curr.logits.normal_(0, 3)
    for g in net.groups:
        for br in g.branches:
            for s in (br.sampler_curr, br.sampler_prev):
                sums = s.weights().sum(dim=(0, 1))
                assert (sums - 1.0).abs().max().item() < 1e-6
                assert s.weights().min().item() >= 0.0


def test_backbone_matches_documented_checkpoint_semantics(tmp_path):
    # independent numpy transcription of the contract: x/255 -> linear chain
    # with relu on all but the last layer -> x255, clamped to [0, 255]
    net = build_net(2, [(1, 3), (1, 3)], hidden=16, depth=2, seed=4)
    write(tmp_path, net.to_checkpoint())
    ck = read(tmp_path)

    rng = np.random.default_rng(0)
    quads = rng.uniform(0.0, 256.0, size=(1000, 4))

    def reference(prefix, n_layers):
        x = quads / 255.0
        for li in range(n_layers):
            w = ck.tensors[f"{prefix}.backbone.{li}.weight"].astype(np.float64)
            b = ck.tensors[f"{prefix}.backbone.{li}.bias"].astype(np.float64)
            x = x @ w.T + b
            if li < n_layers - 1:
                x = np.maximum(x, 0.0)
        return np.clip(x * 255.0, 0.0, 255.0)

    bb = net.groups[0].branches[0].backbone.double()
    with torch.no_grad():
        got = bb(torch.from_numpy(quads.T.reshape(1, 4, 1, -1))).numpy()
    got = got.reshape(bb.linears[-1].out_channels, -1).T
    want = reference("g0.b0", len(bb.linears))
    assert np.abs(got - want).max() < 1e-4


def test_checkpoint_reload_preserves_forward(tmp_path):
    net = build_net(4, [(2, 3), (2, 3)], hidden=8, depth=1, seed=11)
    with torch.no_grad():
        for g in net.groups:
            for br in g.branches:
                br.sampler_curr.logits.normal_(0, 1)
                br.residual.uniform_(0.2, 0.8)
    write(tmp_path, net.to_checkpoint())
    again = SrNet.from_checkpoint(read(tmp_path))
    x = np.random.default_rng(2).integers(0, 256, (9, 9)).astype(np.float64)
    a = net.float_forward(x).numpy()
    b = again.float_forward(x).numpy()
    assert np.array_equal(a, b)


def test_output_shape_and_range():
    net = build_net(4, [(1, 3), (1, 3)], hidden=8, depth=0, seed=5)
    x = np.random.default_rng(3).integers(0, 256, (13, 10)).astype(np.float64)
    out = net.float_forward(x).numpy()
    assert out.shape == (52, 40)
    assert out.min() >= 0.0 and out.max() <= 255.0
