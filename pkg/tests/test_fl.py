import numpy as np
import pytest

from skewprune import checkpoint, fl
from skewprune.data import SynthConfig, generate
from skewprune.model import ModelConfig, SwinMultimodal
from skewprune.trainer import TrainConfig, fit

TINY = dict(embed_dim=16, num_heads=(1, 2))


def test_split_size_examples():
    assert fl.split_sizes(100, 4) == (20, [(16, 4)] * 4)
    assert fl.split_sizes(10, 1) == (2, [(6, 2)])
    # 81 left over: shards 21, 20, 20, 20; floor(0.8 * 21) = 16
    assert fl.split_sizes(101, 4) == (20, [(16, 5), (16, 4), (16, 4), (16, 4)])
    with pytest.raises(ValueError):
        fl.split_sizes(19, 4)


def test_partition_is_exact_cover_and_seeded():
    ds = generate(SynthConfig(n=101, seed=0))
    p = fl.partition(ds, 4, seed=3)
    idx = np.concatenate([p.test_idx] + [np.concatenate([s.train_idx, s.val_idx]) for s in p.shards])
    assert sorted(idx.tolist()) == list(range(101))
    q = fl.partition(ds, 4, seed=3)
    np.testing.assert_array_equal(p.shards[2].train_idx, q.shards[2].train_idx)
    assert not np.array_equal(p.test_idx, fl.partition(ds, 4, seed=4).test_idx)


def test_aggregate_identities():
    rng = np.random.default_rng(0)
    a = {"w": rng.standard_normal((3, 4)).astype(np.float32), "b": rng.standard_normal(4).astype(np.float32)}
    b = {k: rng.standard_normal(v.shape).astype(np.float32) for k, v in a.items()}
    same = fl.aggregate([a, a, a])
    for k in a:
        np.testing.assert_array_equal(same[k], a[k])
    mid = fl.aggregate([a, b])
    for k in a:
        np.testing.assert_allclose(mid[k], (a[k].astype(np.float64) + b[k]) / 2, atol=1e-7)


def test_aggregate_mismatch_names_tensor():
    a = {"w": np.zeros((2, 2), np.float32)}
    with pytest.raises(fl.AggregationError, match="'w'"):
        fl.aggregate([a, {"w": np.zeros((2, 3), np.float32)}])
    with pytest.raises(fl.AggregationError, match="'v'"):
        fl.aggregate([a, {"w": a["w"], "v": a["w"]}])
    with pytest.raises(fl.AggregationError):
        fl.aggregate([])


def test_aggregate_models_rejects_different_prune_states():
    from skewprune.surgery import prune_heads
    a = SwinMultimodal(ModelConfig(**TINY))
    b = a.copy()
    prune_heads(b, 1, 0, [0])
    with pytest.raises(fl.AggregationError, match=r"\(1, 0\)"):
        fl.aggregate_models([a, b])


def test_single_client_equals_split_centralized_training():
    ds = generate(SynthConfig(n=60, seed=1))
    mcfg = ModelConfig(**TINY)
    cfg = fl.FlRunConfig(num_clients=1, rounds=2, seed=4, batch_size=16)
    res = fl.run(cfg, ds, mcfg)
    shard = res.partition.shards[0].train
    ref = SwinMultimodal(mcfg)
    for r in range(2):
        fit(ref, shard, cfg.train_config(1), start_epoch=r, seed_key=fl.client_seed_key(4, 0))
    assert checkpoint.to_bytes(res.model) == checkpoint.to_bytes(ref)


def test_zero_local_epochs_keeps_global_model():
    ds = generate(SynthConfig(n=60, seed=1))
    mcfg = ModelConfig(**TINY)
    res = fl.run(fl.FlRunConfig(num_clients=3, rounds=2, local_epochs=0), ds, mcfg)
    assert checkpoint.to_bytes(res.model) == checkpoint.to_bytes(SwinMultimodal(mcfg))


def test_pruning_rounds_shrink_downloads():
    ds = generate(SynthConfig(n=70, seed=1))
    cfg = fl.FlRunConfig(num_clients=2, rounds=4, prune_schedule={1: 0, 2: [1]}, batch_size=16)
    res = fl.run(cfg, ds, ModelConfig(**TINY))
    down = [r.bytes_down for r in res.rounds]
    assert down[0] == down[1] > down[2] > down[3]
    assert res.rounds[1].model_bytes_after_prune == down[2] // 2
    assert res.model.frozen_stages == {0, 1}
    assert res.rounds[1].pruned_stages == [0] and res.rounds[2].pruned_stages == [1]
    assert res.pre_prune["round"] == 1


def test_schedule_outside_rounds_rejected():
    with pytest.raises(ValueError):
        fl.FlRunConfig(rounds=3, prune_schedule={3: 0})
