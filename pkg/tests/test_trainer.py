import numpy as np
import pytest

from skewprune import checkpoint
from skewprune.data import Dataset, SynthConfig, generate
from skewprune.model import ConfigError, ModelConfig, SwinMultimodal, count_params
from skewprune.trainer import (
    StageSchedule,
    TrainConfig,
    class_weights,
    evaluate,
    fit,
    frozen_param_names,
    prune_stage,
    skew_prune_pipeline,
)

SMALL = dict(image_size=16, patch_size=4, embed_dim=16, depths=(1, 1), num_heads=(2, 2), window_size=2,
             mlp_ratio=2)


def two_colour_set(n=64, seed=0):
    """Red vs blue squares with noise: linearly separable on the mean colour."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    images = rng.uniform(0.3, 0.5, (n, 3, 16, 16)).astype(np.float32)
    images[labels == 0, 0] += 0.4
    images[labels == 1, 2] += 0.4
    tab = np.zeros((n, 3), np.int64)
    return Dataset(images, tab, labels)


def test_zero_epochs_leaves_model_untouched():
    model = SwinMultimodal(ModelConfig(**SMALL))
    before = checkpoint.to_bytes(model)
    out, hist = fit(model, two_colour_set(), TrainConfig(epochs=0))
    assert hist == [] and checkpoint.to_bytes(out) == before


def test_empty_dataset_rejected():
    ds = two_colour_set().subset([])
    with pytest.raises(ValueError):
        fit(SwinMultimodal(ModelConfig(**SMALL)), ds, TrainConfig(epochs=1))


def test_separable_set_is_learned():
    ds = two_colour_set()
    model, hist = fit(SwinMultimodal(ModelConfig(**SMALL, num_classes=2)), ds,
                      TrainConfig(epochs=8, batch_size=16, lr=3e-3))
    assert hist[-1]["accuracy"] >= 0.95
    assert hist[-1]["loss"] < hist[0]["loss"]
    assert evaluate(model, ds)["accuracy"] == hist[-1]["accuracy"]


def test_fit_is_deterministic():
    ds = two_colour_set()
    cfg = TrainConfig(epochs=2, batch_size=16, seed=5)
    a, ha = fit(SwinMultimodal(ModelConfig(**SMALL)), ds, cfg)
    b, hb = fit(SwinMultimodal(ModelConfig(**SMALL)), ds, cfg)
    assert checkpoint.to_bytes(a) == checkpoint.to_bytes(b)
    assert ha == hb


def test_split_fit_equals_single_fit():
    ds = two_colour_set()
    one, _ = fit(SwinMultimodal(ModelConfig(**SMALL)), ds, TrainConfig(epochs=1, batch_size=16),
                 start_epoch=3, seed_key=(9, 9))
    two, _ = fit(SwinMultimodal(ModelConfig(**SMALL)), ds, TrainConfig(epochs=1, batch_size=16),
                 start_epoch=3, seed_key=(9, 9))
    assert checkpoint.to_bytes(one) == checkpoint.to_bytes(two)


def test_class_weights_inverse_frequency():
    w = class_weights(np.array([0, 0, 0, 1]), 3)
    # n / (K * count)
    np.testing.assert_allclose(w, [4 / 9, 4 / 3, 0.0])


def test_constant_activations_prune_whole_stage():
    cfg = ModelConfig(use_shift=False)
    model = SwinMultimodal(cfg)
    for k in model.params:
        if k.endswith("rel_pos"):
            model.params[k].data[:] = 0
    calib = Dataset(np.full((4, 3, 32, 32), 0.6, np.float32), np.zeros((4, 3), np.int64), np.zeros(4, np.int64))
    rec = prune_stage(model, 1, calib)
    for blk in rec.blocks:
        assert all(s == 0.0 for _, s in blk.report.head_skews)
        assert blk.decision.msa_identity and blk.decision.mlp_identity
    assert model.heads(1, 0) == 0 and model.channels(1, 1) == 0
    model.check_consistency()


def test_pipeline_freezes_and_copies():
    ds = generate(SynthConfig(n=70, seed=1))
    base = SwinMultimodal(ModelConfig())
    base_bytes = checkpoint.to_bytes(base)
    pruned, recs = skew_prune_pipeline(base, ds, ds, StageSchedule((0,), finetune_epochs=1),
                                       TrainConfig(batch_size=32))
    assert checkpoint.to_bytes(base) == base_bytes
    assert pruned.frozen_stages == {0}
    assert count_params(pruned) == recs[0].params_after < count_params(base)
    # frozen weights are exactly the post-surgery values: rerun surgery without fine-tuning
    ref, _ = skew_prune_pipeline(base, ds, ds, StageSchedule((0,), finetune_epochs=0), TrainConfig())
    frozen = frozen_param_names(pruned)
    assert "patch_embed.weight" in frozen and "head.weight" not in frozen
    for k in frozen:
        assert pruned.params[k].data.tobytes() == ref.params[k].data.tobytes()
    assert pruned.params["head.weight"].data.tobytes() != ref.params["head.weight"].data.tobytes()


def test_schedule_validation():
    with pytest.raises(ConfigError):
        StageSchedule((1, 0))
    with pytest.raises(ConfigError):
        StageSchedule((0, 1), finetune_epochs=(1,))
    model = SwinMultimodal(ModelConfig())
    ds = generate(SynthConfig(n=7))
    with pytest.raises(ConfigError):
        skew_prune_pipeline(model, ds, ds, StageSchedule((2,)))
