"""In-process horizontal federated learning with server-side prune calibration.

Each round the server serializes the global model, every client rebuilds
it from those bytes, trains locally on its shard and sends its full
parameter set back (again as checkpoint bytes). The server takes the plain
element-wise mean, evaluates on its held-out test split and, on scheduled
rounds, scores and prunes whole stages before the next distribution.
Communication is counted on the real byte streams.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import checkpoint
from .data import Dataset, rng_for
from .model import ConfigError, ModelConfig, SwinMultimodal, count_params
from .trainer import StageRecord, TrainConfig, evaluate, fit, prune_stage

log = logging.getLogger(__name__)


class AggregationError(ValueError):
    pass


@dataclass
class FlRunConfig:
    num_clients: int = 4
    rounds: int = 12
    local_epochs: int = 1
    seed: int = 0
    aggregation: str = "simple-mean"
    # round index -> stage id or list of stage ids pruned after that round's aggregation
    prune_schedule: dict = field(default_factory=dict)
    calibration_selector: str | int = "first"
    calib_batch_size: int = 32
    server_finetune_epochs: int = 0
    freeze_pruned_stages: bool = True
    batch_size: int = 32
    lr: float = 2e-3
    class_weighting: bool = False
    f1_average: str = "macro"

    def __post_init__(self):
        self.prune_schedule = {
            int(r): tuple(int(s) for s in (v if isinstance(v, (list, tuple)) else [v]))
            for r, v in dict(self.prune_schedule).items()
        }
        if self.num_clients < 1 or self.rounds < 1 or self.local_epochs < 0:
            raise ConfigError("num_clients and rounds must be >= 1, local_epochs >= 0")
        if self.aggregation != "simple-mean":
            raise ConfigError(f"unsupported aggregation {self.aggregation!r}")
        for r in self.prune_schedule:
            if not 0 <= r < self.rounds:
                raise ConfigError(f"prune schedule round {r} outside [0, {self.rounds})")

    def train_config(self, epochs: int) -> TrainConfig:
        return TrainConfig(epochs=epochs, batch_size=self.batch_size, lr=self.lr, seed=self.seed,
                           class_weighting=self.class_weighting, calibration_selector=self.calibration_selector,
                           calib_batch_size=self.calib_batch_size, f1_average=self.f1_average)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prune_schedule"] = {str(r): list(v) for r, v in sorted(self.prune_schedule.items())}
        return d


# ---------------------------------------------------------------- partition

@dataclass
class Shard:
    client_id: int
    train: Dataset
    val: Dataset
    train_idx: np.ndarray
    val_idx: np.ndarray


@dataclass
class Partition:
    test: Dataset
    test_idx: np.ndarray
    shards: list[Shard]


def split_sizes(n: int, num_clients: int) -> tuple[int, list[tuple[int, int]]]:
    """(test size, [(train, val) per client]) for ``n`` samples."""
    if num_clients < 1:
        raise ValueError("num_clients must be >= 1")
    if n < 5 * num_clients:
        raise ValueError(f"need at least {5 * num_clients} samples for {num_clients} clients, got {n}")
    test = n // 5
    rest = n - test
    sizes = [rest // num_clients + (1 if i < rest % num_clients else 0) for i in range(num_clients)]
    return test, [((4 * s) // 5, s - (4 * s) // 5) for s in sizes]


def partition(ds: Dataset, num_clients: int, seed: int) -> Partition:
    """Seeded split: 20% server test, remainder spread evenly, each shard 80/20 train/val."""
    test_n, sizes = split_sizes(len(ds), num_clients)
    perm = rng_for(seed, 7).permutation(len(ds))
    test_idx = perm[:test_n]
    shards, pos = [], test_n
    for c, (tr, va) in enumerate(sizes):
        tr_idx, va_idx = perm[pos:pos + tr], perm[pos + tr:pos + tr + va]
        pos += tr + va
        shards.append(Shard(c, ds.subset(tr_idx), ds.subset(va_idx), tr_idx, va_idx))
    return Partition(ds.subset(test_idx), test_idx, shards)


# ---------------------------------------------------------------- aggregation

def aggregate(param_sets: Sequence[Mapping[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Unweighted element-wise mean of structurally identical parameter sets."""
    if not param_sets:
        raise AggregationError("nothing to aggregate")
    ref = param_sets[0]
    names = sorted(ref)
    for i, ps in enumerate(param_sets[1:], start=1):
        for name in sorted(set(names) | set(ps)):
            if name not in ps or name not in ref:
                raise AggregationError(f"client {i}: tensor {name!r} present in only one of the models")
            if ps[name].shape != ref[name].shape:
                raise AggregationError(f"client {i}: tensor {name!r} has shape {ps[name].shape}, "
                                       f"client 0 has {ref[name].shape}")
    out = {}
    for name in names:
        acc = np.zeros(ref[name].shape, dtype=np.float64)
        for ps in param_sets:
            acc += ps[name]
        out[name] = (acc / len(param_sets)).astype(np.float32)
    return out


def aggregate_models(models: Sequence[SwinMultimodal]) -> dict[str, np.ndarray]:
    for i, m in enumerate(models[1:], start=1):
        if m.prune_state != models[0].prune_state:
            diverged = next(k for k in sorted(m.prune_state) if m.prune_state[k] != models[0].prune_state.get(k))
            raise AggregationError(f"client {i}: prune state differs from client 0 at block {diverged}")
    return aggregate([m.state_arrays() for m in models])


# ---------------------------------------------------------------- run

def client_seed_key(seed: int, client_id: int) -> tuple[int, int, int]:
    """Batch-order key for one client; the epoch index (which encodes the round) is appended per epoch."""
    return (seed, 2, client_id)


@dataclass
class RoundRecord:
    round: int
    client_loss: list[float]
    client_val_accuracy: list[float]
    test_accuracy: float
    test_f1: float
    bytes_down: int
    bytes_up: int
    model_bytes: int
    params: int
    pruned_stages: list[int] = field(default_factory=list)
    prune_audits: list[dict] = field(default_factory=list)
    params_after_prune: int | None = None
    model_bytes_after_prune: int | None = None
    test_accuracy_after_prune: float | None = None
    test_f1_after_prune: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FlResult:
    model: SwinMultimodal
    rounds: list[RoundRecord]
    prune_events: dict[int, list[StageRecord]]
    partition: Partition
    pre_prune: dict | None = None


def run(fl: FlRunConfig, ds: Dataset, model_cfg: ModelConfig, calib: Dataset | None = None,
        initial: SwinMultimodal | None = None) -> FlResult:
    """Simulate ``fl.rounds`` rounds; see module docstring for the protocol."""
    part = partition(ds, fl.num_clients, fl.seed)
    calib = part.test if calib is None else calib
    model = initial.copy() if initial is not None else SwinMultimodal(model_cfg)
    records: list[RoundRecord] = []
    events: dict[int, list[StageRecord]] = {}
    pre_prune = None
    local_cfg = fl.train_config(fl.local_epochs)
    for r in range(fl.rounds):
        blob = checkpoint.to_bytes(model)
        uploads, losses, val_acc = [], [], []
        for shard in part.shards:
            local = checkpoint.from_bytes(blob)
            _, hist = fit(local, shard.train, local_cfg, start_epoch=r * fl.local_epochs,
                          seed_key=client_seed_key(fl.seed, shard.client_id))
            losses.append(hist[-1]["loss"] if hist else float("nan"))
            val_acc.append(evaluate(local, shard.val)["accuracy"] if len(shard.val) else float("nan"))
            uploads.append(checkpoint.to_bytes(local))
        clients = [checkpoint.from_bytes(u) for u in uploads]
        model.load_arrays(aggregate_models(clients))
        scores = evaluate(model, part.test, fl.f1_average)
        rec = RoundRecord(r, losses, val_acc, scores["accuracy"], scores["f1"],
                          bytes_down=len(blob) * fl.num_clients, bytes_up=sum(len(u) for u in uploads),
                          model_bytes=len(blob), params=count_params(model))
        stages = fl.prune_schedule.get(r, ())
        if stages:
            if pre_prune is None:
                pre_prune = {"round": r, "params": count_params(model), "model_bytes": len(checkpoint.to_bytes(model)),
                             **scores}
            stage_recs = []
            for s in stages:
                sr = prune_stage(model, s, calib, fl.calibration_selector, fl.calib_batch_size)
                if fl.freeze_pruned_stages:
                    model.frozen_stages.add(s)
                if fl.server_finetune_epochs:
                    _, sr.history = fit(model, calib, fl.train_config(fl.server_finetune_epochs),
                                        seed_key=(fl.seed, 3, r))
                stage_recs.append(sr)
            events[r] = stage_recs
            after = evaluate(model, part.test, fl.f1_average)
            rec.pruned_stages = list(stages)
            rec.prune_audits = [b.audit.to_dict() for sr in stage_recs for b in sr.blocks]
            rec.params_after_prune = count_params(model)
            rec.model_bytes_after_prune = len(checkpoint.to_bytes(model))
            rec.test_accuracy_after_prune = after["accuracy"]
            rec.test_f1_after_prune = after["f1"]
        log.info("round %d: acc %.4f f1 %.4f bytes_down %d", r, rec.test_accuracy, rec.test_f1, rec.bytes_down)
        records.append(rec)
    return FlResult(model, records, events, part, pre_prune)
