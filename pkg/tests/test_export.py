import numpy as np
import pytest

from autolut import (
    BackboneWeights,
    Checkpoint,
    export_lut,
    export_pipeline,
    forward_backbone,
    load_checkpoint,
    storage_size,
    write_checkpoint,
)
from autolut.backbone import (
    GroupMeta,
    Layer,
    LayerMeta,
    backbone_from_checkpoint,
    random_backbone,
)
from autolut.errors import InvalidCheckpointError
from autolut.lut import TABLE_POINTS, lattice_quads, lookup, serialize
from autolut.pipeline import preset_config, serialize_pipeline


def mean_backbone():
    return BackboneWeights((Layer("dense-2x2-reduce",
                                  np.full((1, 4), 0.25, dtype=np.float32),
                                  np.zeros(1, dtype=np.float32), "none"),))


def const_backbone(beta):
    return BackboneWeights((Layer("dense-2x2-reduce",
                                  np.zeros((1, 4), dtype=np.float32),
                                  np.array([beta], dtype=np.float32), "none"),))


def test_forward_backbone_mean_layer():
    w = mean_backbone()
    quad = np.array([10.0, 20.0, 30.0, 40.0])
    assert forward_backbone(w, quad)[0] == pytest.approx(25.0, abs=1e-12)


def test_forward_backbone_bias_only():
    assert forward_backbone(const_backbone(0.5), [0, 0, 0, 0])[0] == pytest.approx(127.5)
    assert forward_backbone(const_backbone(2.0), [1, 2, 3, 4])[0] == 255.0  # clamped
    assert forward_backbone(const_backbone(-1.0), [9, 9, 9, 9])[0] == 0.0


def test_forward_backbone_validates():
    with pytest.raises(InvalidCheckpointError):
        forward_backbone(mean_backbone(), [0.0, 0.0, 0.0, 300.0])
    with pytest.raises(InvalidCheckpointError):
        BackboneWeights((Layer("pointwise", np.zeros((1, 4), dtype=np.float32),
                               np.zeros(1, dtype=np.float32), "none"),))
    with pytest.raises(InvalidCheckpointError):
        BackboneWeights((Layer("dense-2x2-reduce", np.zeros((2, 4), dtype=np.float32),
                               np.zeros(2, dtype=np.float32), "relu"),))


def test_export_mean_backbone_anchor_entry():
    table = export_lut(mean_backbone())
    # lattice index (0,16,16,0): knots (0,256,256,0) clamp to (0,255,255,0)
    flat = ((0 * 17 + 16) * 17 + 16) * 17 + 0
    assert table.flat[flat, 0] == 128  # round(127.5) half away from zero


def test_export_constant_backbone():
    table = export_lut(const_backbone(0.4))
    assert np.all(table.flat == 102)  # round(0.4*255)


def test_export_is_deterministic():
    rng1 = np.random.default_rng(1234)
    rng2 = np.random.default_rng(1234)
    t1 = export_lut(random_backbone(rng1, 4))
    t2 = export_lut(random_backbone(rng2, 4))
    assert serialize(t1) == serialize(t2)


def test_export_lattice_consistency():
    rng = np.random.default_rng(5)
    w = random_backbone(rng, 2)
    table = export_lut(w)
    quads = np.minimum(lattice_quads(), 255.0)
    idx = rng.integers(0, TABLE_POINTS, size=2000)
    # lattice points reachable by lookup: every index component <= 15
    comps = np.stack(np.unravel_index(idx, (17, 17, 17, 17)), axis=1)
    keep = idx[(comps <= 15).all(axis=1)]
    coords = np.minimum(lattice_quads()[keep], 255.0)
    got = lookup(table, coords)
    want = forward_backbone(w, quads[keep])
    assert np.abs(got - want).max() <= 0.5 + 1e-9


def test_export_interpolation_error_budget():
    # simplex lookup between exported entries vs the smooth backbone itself
    rng = np.random.default_rng(6)
    w = random_backbone(rng, 1)
    table = export_lut(w)
    coords = rng.uniform(0.0, 255.0, size=(4000, 4))
    approx = lookup(table, coords)[:, 0]
    exact = forward_backbone(w, coords)[:, 0]
    assert np.mean(np.abs(approx - exact)) <= 2.0


def test_storage_size_single_final_lut():
    cfg = preset_config("identity", scale=1)
    sizes = storage_size(cfg)
    assert sizes["lut_bytes"] == TABLE_POINTS

    final16 = preset_config("mulut-ours-1x5", scale=4)
    assert storage_size(final16)["lut_bytes"] == TABLE_POINTS * 1 + TABLE_POINTS * 16


def test_storage_matches_mulut_table_within_1pct():
    # two groups x three branches, C = 1 then 16: the 4.062 MB row
    cfg = preset_config("mulut-ours-3x5", scale=4)
    sizes = storage_size(cfg)
    assert sizes["lut_bytes"] == 3 * TABLE_POINTS + 3 * TABLE_POINTS * 16
    mb = sizes["total"] / 2 ** 20
    assert abs(mb - 4.062) / 4.062 < 0.01


def test_storage_weight_delta_within_1kb_of_table():
    cfg = preset_config("mulut-ours-3x5", scale=4)
    sizes = storage_size(cfg)
    delta = sizes["sampler_bytes"] + sizes["residual_bytes"]
    published_delta = (4.067 - 4.062) * 2 ** 20
    assert abs(delta - published_delta) < 1024


def test_storage_equals_container_minus_fixed_overhead():
    for name in ("mulut-ours-2x3", "mulut-ours-3x5", "spf-light"):
        cfg = preset_config(name, scale=4)
        total = storage_size(cfg)["total"]
        payload = len(serialize_pipeline(cfg))
        overhead = 8 + sum(4 + len(g.branches) * (2 * 1 + 16) for g in cfg.groups)
        assert payload - total == overhead


# -- checkpoint container -----------------------------------------------------

def make_checkpoint(rng, scale=2, groups_spec=((1, 3), (1, 3)), hidden=8, depth=1):
    metas = []
    tensors = {}
    n = len(groups_spec)
    for gi, (branches, k) in enumerate(groups_spec):
        c = scale * scale if gi == n - 1 else 1
        bb = random_backbone(rng, c, hidden=hidden, depth=depth)
        metas.append(GroupMeta(
            branches=branches, k=k, out_channels=c,
            backbone=tuple(LayerMeta(l.kind, l.in_channels, l.out_channels, l.activation)
                           for l in bb.layers)))
        for bi in range(branches):
            prefix = f"g{gi}.b{bi}"
            bb_b = random_backbone(rng, c, hidden=hidden, depth=depth)
            tensors[f"{prefix}.sampler_curr"] = rng.normal(0, 1, (k, k, 4)).astype(np.float32)
            tensors[f"{prefix}.sampler_prev"] = rng.normal(0, 1, (k, k, 4)).astype(np.float32)
            tensors[f"{prefix}.residual"] = rng.uniform(0, 1, (2, 2)).astype(np.float32)
            for li, l in enumerate(bb_b.layers):
                tensors[f"{prefix}.backbone.{li}.weight"] = l.weight
                tensors[f"{prefix}.backbone.{li}.bias"] = l.bias
    return Checkpoint(scale=scale, ensemble=True, groups=tuple(metas), tensors=tensors)


def test_checkpoint_roundtrip_byte_identical(tmp_path):
    rng = np.random.default_rng(11)
    ckpt = make_checkpoint(rng)
    d1 = tmp_path / "a"
    d2 = tmp_path / "b"
    write_checkpoint(d1, ckpt)
    again = load_checkpoint(d1)
    write_checkpoint(d2, again)
    assert (d1 / "manifest.json").read_bytes() == (d2 / "manifest.json").read_bytes()
    assert (d1 / "weights.bin").read_bytes() == (d2 / "weights.bin").read_bytes()


def test_checkpoint_validation_errors(tmp_path):
    import json

    rng = np.random.default_rng(12)
    ckpt = make_checkpoint(rng)
    write_checkpoint(tmp_path, ckpt)
    manifest = json.loads((tmp_path / "manifest.json").read_text())

    missing = dict(manifest)
    missing["tensors"] = manifest["tensors"][1:]
    (tmp_path / "manifest.json").write_text(json.dumps(missing))
    with pytest.raises(InvalidCheckpointError):
        load_checkpoint(tmp_path)

    overlap = json.loads(json.dumps(manifest))
    overlap["tensors"][1]["byte_offset"] = overlap["tensors"][0]["byte_offset"]
    (tmp_path / "manifest.json").write_text(json.dumps(overlap))
    with pytest.raises(InvalidCheckpointError):
        load_checkpoint(tmp_path)

    beyond = json.loads(json.dumps(manifest))
    beyond["tensors"][-1]["byte_offset"] = 10 ** 9
    (tmp_path / "manifest.json").write_text(json.dumps(beyond))
    with pytest.raises(InvalidCheckpointError):
        load_checkpoint(tmp_path)


def test_export_pipeline_from_checkpoint(tmp_path):
    rng = np.random.default_rng(13)
    ckpt = make_checkpoint(rng, scale=2)
    write_checkpoint(tmp_path, ckpt)
    loaded = load_checkpoint(tmp_path)
    cfg = export_pipeline(loaded)
    assert cfg.scale == 2
    assert len(cfg.groups) == 2
    assert cfg.groups[-1].out_channels == 4
    # exported tables agree with their backbones on the lattice
    bb = backbone_from_checkpoint(loaded, 0, 0)
    table = cfg.groups[0].branches[0].table
    quads = np.minimum(lattice_quads(), 255.0)[::997]
    want = np.floor(forward_backbone(bb, quads) + 0.5)
    assert np.array_equal(table.flat[::997].astype(np.float64), want)


def test_exported_pipeline_runs(tmp_path):
    from autolut import super_resolve

    rng = np.random.default_rng(14)
    ckpt = make_checkpoint(rng, scale=2)
    cfg = export_pipeline(ckpt)
    x = rng.integers(0, 256, (12, 10)).astype(np.uint8)
    out = super_resolve(x, cfg)
    assert out.shape == (24, 20)
