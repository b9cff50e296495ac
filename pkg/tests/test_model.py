import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import param_count_closed_form, reference_logits
from skewprune import autograd as ag
from skewprune.model import (
    BlockPruneState,
    ConfigError,
    ModelConfig,
    SwinMultimodal,
    TabularInput,
    count_flops,
    count_params,
    memory_footprint_bytes,
    param_stage,
    relative_position_index,
    shift_attention_mask,
    window_partition,
    window_reverse,
)


def tiny(**kw):
    base = dict(image_size=16, patch_size=2, embed_dim=8, depths=(2,), num_heads=(2,), window_size=4, mlp_ratio=2)
    base.update(kw)
    return ModelConfig(**base)


def batch(cfg, n, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 3, cfg.image_size, cfg.image_size)).astype(np.float32)
    tab = np.stack([rng.integers(0, 3, n), rng.integers(0, 22, n), rng.integers(0, 16, n)], 1)
    return images, tab


def roughen(model, seed=1, scale=0.3):
    rng = np.random.default_rng(seed)
    for t in model.params.values():
        t.data = t.data + rng.normal(0, scale, t.shape).astype(np.float32)
    return model


# ---------------------------------------------------------------- windows

def test_four_by_four_grid_window_two_gives_four_windows():
    x = ag.Tensor(np.arange(16, dtype=np.float32).reshape(1, 4, 4, 1))
    win = window_partition(x, 2).data[..., 0]
    np.testing.assert_array_equal(win, [[0, 1, 4, 5], [2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15]])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(4, 2), (8, 4), (8, 2), (6, 3)]), st.integers(0, 3), st.integers(1, 3))
def test_partition_reverse_round_trip(gw, shift, b):
    g, w = gw
    shift = shift % w
    x = np.random.default_rng(shift).random((b, g, g, 3)).astype(np.float32)
    back = window_reverse(window_partition(ag.Tensor(x), w, shift), w, g, shift)
    np.testing.assert_array_equal(back.data, x)


def test_relative_position_index_examples():
    idx = relative_position_index(2)
    # 3x3 table, centre (0, 0) offset is id 4
    np.testing.assert_array_equal(np.diag(idx), [4, 4, 4, 4])
    assert idx[0, 3] == 0 and idx[3, 0] == 8
    assert relative_position_index(4).max() == 48


def test_shift_mask_only_separates_wrapped_tokens():
    mask = shift_attention_mask(8, 4, 2)
    assert mask.shape == (4, 16, 16)
    assert not mask[0].any()
    # bottom-right window splits into four wrap regions of 4 tokens each
    assert (mask[3] == 0).sum() == 4 * 16


def test_shift_disabled_for_single_window():
    cfg = ModelConfig()
    assert cfg.shift_size(0, 1) == 2
    assert cfg.shift_size(1, 1) == 0
    assert cfg.shift_size(0, 0) == 0


# ---------------------------------------------------------------- forward

@pytest.mark.parametrize("cfg", [
    tiny(),
    tiny(use_rel_pos_bias=False),
    tiny(image_size=32, depths=(2, 1), num_heads=(2, 4), embed_dim=8),
], ids=["shifted", "no-rel-pos", "two-stage"])
def test_forward_matches_loop_reference(cfg):
    model = roughen(SwinMultimodal(cfg))
    images, tab = batch(cfg, 2)
    logits, _ = model.forward(images, tab)
    for i in range(2):
        ref = reference_logits(model, images[i], tab[i])
        np.testing.assert_allclose(logits.data[i], ref, rtol=1e-4, atol=1e-4)


def test_capture_shapes():
    cfg = ModelConfig()
    model = SwinMultimodal(cfg)
    images, tab = batch(cfg, 3)
    _, caps = model.forward(images, tab, capture="all")
    assert caps[(0, 0)]["A"].shape == (3 * 4, 16, 2, 16)
    assert caps[(0, 1)]["Z"].shape == (3 * 4, 16, 128)
    assert caps[(1, 0)]["A"].shape == (3, 16, 4, 16)
    assert caps[(1, 1)]["Z"].shape == (3, 16, 256)


def test_image_only_fusion_ignores_tabular():
    cfg = tiny(fusion_weights=(1.0, 0.0, 0.0, 0.0))
    model = roughen(SwinMultimodal(cfg))
    images, tab = batch(cfg, 4)
    a, _ = model.forward(images, tab)
    b, _ = model.forward(images, (tab + 1) % 3)
    np.testing.assert_array_equal(a.data, b.data)


def test_tabular_changes_logits_with_default_fusion():
    cfg = tiny()
    model = roughen(SwinMultimodal(cfg))
    images, tab = batch(cfg, 2)
    a, _ = model.forward(images, tab)
    b, _ = model.forward(images, (tab + 1) % 3)
    assert not np.array_equal(a.data, b.data)


def test_identical_rows_give_identical_logits():
    cfg = tiny()
    model = roughen(SwinMultimodal(cfg))
    images, tab = batch(cfg, 1)
    logits, _ = model.forward(np.repeat(images, 5, 0), np.repeat(tab, 5, 0))
    assert np.all(logits.data == logits.data[0])


def test_tabular_input_objects_accepted():
    cfg = tiny()
    model = SwinMultimodal(cfg)
    images, tab = batch(cfg, 2)
    objs = [TabularInput(*map(int, row)) for row in tab]
    np.testing.assert_array_equal(model.forward(images, objs)[0].data, model.forward(images, tab)[0].data)


def test_bad_image_shape_rejected():
    model = SwinMultimodal(tiny())
    with pytest.raises(ag.DimensionError):
        model.forward(np.zeros((1, 3, 8, 8), np.float32), np.zeros((1, 3), int))


def test_identity_block_formula():
    cfg = tiny(depths=(1,))
    model = roughen(SwinMultimodal(cfg))
    model.prune_state[(0, 0)] = BlockPruneState((), ())
    for k in [k for k in model.params if ".attn." in k or ".mlp." in k]:
        del model.params[k]
    model.check_consistency()
    x = ag.Tensor(np.random.default_rng(3).standard_normal((1, 8, 8, 8)).astype(np.float32))
    p = {k: v.data.astype(np.float64) for k, v in model.params.items()}

    def ln(v, g, b):
        mu = v.mean(-1, keepdims=True)
        return (v - mu) / np.sqrt(((v - mu) ** 2).mean(-1, keepdims=True) + cfg.ln_eps) * g + b

    x64 = x.data.astype(np.float64)
    x_hat = ln(x64, p["stages.0.blocks.0.norm1.gamma"], p["stages.0.blocks.0.norm1.beta"]) + x64
    out = ln(x_hat, p["stages.0.blocks.0.norm2.gamma"], p["stages.0.blocks.0.norm2.beta"]) + x_hat
    np.testing.assert_allclose(model._block(x, 0, 0, None).data, out, rtol=1e-5, atol=1e-5)


def test_zero_output_projection_makes_msa_vanish():
    cfg = tiny(depths=(1,))
    model = roughen(SwinMultimodal(cfg))
    model.params["stages.0.blocks.0.attn.w_o"].data[:] = 0
    model.params["stages.0.blocks.0.attn.b_o"].data[:] = 0
    model.params["stages.0.blocks.0.mlp.w2"].data[:] = 0
    model.params["stages.0.blocks.0.mlp.b2"].data[:] = 0
    x = ag.Tensor(np.random.default_rng(4).standard_normal((2, 8, 8, 8)).astype(np.float32))
    np.testing.assert_array_equal(model._block(x, 0, 0, None).data, x.data)


# ---------------------------------------------------------------- accounting

def test_default_model_counts():
    model = SwinMultimodal(ModelConfig())
    assert count_params(model) == param_count_closed_form(model.config) == 139251
    assert memory_footprint_bytes(model) == 4 * 139251
    # hand tally: stage 0 = 196608 + 10240 + 2 * 1800192, merge = 10240 + 262144,
    # stage 1 = 2 * 1686528, final norm 5120, classifier 896
    assert count_flops(model) == 7458688
    assert count_flops(model, batch=3) == 3 * 7458688


@pytest.mark.parametrize("kw", [
    dict(depths=(1, 1, 1), num_heads=(1, 2, 4), image_size=64),
    dict(use_rel_pos_bias=False, mlp_ratio=2),
    dict(depths=(0, 2), num_heads=(1, 8)),
])
def test_param_count_matches_hand_count(kw):
    cfg = ModelConfig(**kw)
    assert count_params(SwinMultimodal(cfg)) == param_count_closed_form(cfg)


def test_empty_stage_model_hand_count():
    cfg = ModelConfig(depths=(0,), num_heads=(1,), embed_dim=4, num_classes=2)
    # patch 48*4+4, patch norm 8, final norm 8, tab (3+22+16)*4, head 4*2+2
    assert count_params(SwinMultimodal(cfg)) == 196 + 8 + 8 + 164 + 10


def test_param_init_is_deterministic_and_seeded():
    a, b = SwinMultimodal(ModelConfig()), SwinMultimodal(ModelConfig())
    c = SwinMultimodal(ModelConfig(seed=1))
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)
    assert not np.array_equal(a.params["head.weight"].data, c.params["head.weight"].data)
    w = a.params["stages.0.blocks.0.mlp.w1"].data
    assert np.abs(w).max() <= 0.04 and abs(w.std() - 0.02) < 0.003


def test_param_stage_ownership():
    assert param_stage("patch_embed.weight") == 0
    assert param_stage("stages.1.downsample.reduction") == 1
    assert param_stage("head.weight") is None
    assert param_stage("tab.age") is None


@pytest.mark.parametrize("kw", [
    dict(image_size=30),
    dict(num_heads=(3, 4)),
    dict(fusion_weights=(0.5, 0.5, 0.5, 0.5)),
    dict(mlp_grouping="rows"),
    dict(window_size=3),
])
def test_bad_configs_rejected(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


def test_config_dict_round_trip():
    cfg = ModelConfig(depths=(1, 3), num_heads=(2, 2))
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"bogus": 1})
