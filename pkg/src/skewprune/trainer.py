"""Supervised fine-tuning and the stage-by-stage skewness pruning pipeline."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from .data import Dataset, batches
from .metrics import accuracy, f1_score
from .model import ConfigError, SwinMultimodal, count_params, param_stage
from .optim import Adam
from .skew import decide, score_block
from .surgery import apply_decision

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    class_weighting: bool = False
    calibration_selector: str | int = "first"
    calib_batch_size: int = 32
    f1_average: str = "macro"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def class_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    w = np.zeros(num_classes)
    nz = counts > 0
    w[nz] = labels.size / (num_classes * counts[nz])
    return w


def evaluate(model: SwinMultimodal, ds: Dataset, f1_average: str = "macro") -> dict:
    preds = model.predict(ds.images, ds.tabular)
    k = model.config.num_classes
    return {"accuracy": accuracy(preds, ds.labels), "f1": f1_score(preds, ds.labels, k, f1_average)}


def fit(model: SwinMultimodal, ds: Dataset, cfg: TrainConfig, *, start_epoch: int = 0,
        seed_key: Sequence[int] | None = None) -> tuple[SwinMultimodal, list[dict]]:
    """Train the non-frozen parameters in place.

    Batch order for global epoch ``e`` is keyed by ``(*seed_key, e)`` (default
    ``seed_key = (cfg.seed,)``), so a run split into several calls with
    matching ``start_epoch`` sees the same batches as one long call.
    History rows hold the mean training loss and the post-epoch accuracy
    on ``ds`` in inference mode.
    """
    if len(ds) == 0:
        raise ValueError("cannot fit on an empty dataset")
    if cfg.epochs == 0:
        return model, []
    key = tuple(seed_key) if seed_key is not None else (cfg.seed,)
    weights = class_weights(ds.labels, model.config.num_classes) if cfg.class_weighting else None
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    trainable = model.trainable_params()
    for name, t in model.params.items():
        t.requires_grad = name in trainable
    history = []
    try:
        for epoch in range(start_epoch, start_epoch + cfg.epochs):
            total, seen = 0.0, 0
            for idx in batches(len(ds), cfg.batch_size, key, epoch):
                model.zero_grad()
                logits, _ = model.forward(ds.images[idx], ds.tabular[idx])
                loss = ag.cross_entropy(logits, ds.labels[idx], weights)
                loss.backward()
                opt.step(trainable)
                total += loss.item() * len(idx)
                seen += len(idx)
            row = {"epoch": epoch, "loss": total / seen, **evaluate(model, ds, cfg.f1_average)}
            log.info("epoch %d loss %.4f acc %.4f", epoch, row["loss"], row["accuracy"])
            history.append(row)
    finally:
        model.zero_grad()
        for t in model.params.values():
            t.requires_grad = True
    return model, history


# ---------------------------------------------------------------- pruning

@dataclass
class StageSchedule:
    stages: tuple[int, ...]
    finetune_epochs: int | tuple[int, ...] = 1
    freeze: bool = True

    def __post_init__(self):
        self.stages = tuple(int(s) for s in self.stages)
        if any(b <= a for a, b in zip(self.stages, self.stages[1:])) or any(s < 0 for s in self.stages):
            raise ConfigError(f"stage ids must be non-negative and strictly increasing, got {self.stages}")
        if not isinstance(self.finetune_epochs, int):
            self.finetune_epochs = tuple(int(e) for e in self.finetune_epochs)
            if len(self.finetune_epochs) != len(self.stages):
                raise ConfigError("finetune_epochs needs one entry per scheduled stage")

    def epochs_for(self, i: int) -> int:
        return self.finetune_epochs if isinstance(self.finetune_epochs, int) else self.finetune_epochs[i]


@dataclass
class BlockRecord:
    report: object
    decision: object
    audit: object

    def to_dict(self) -> dict:
        return {"skew": self.report.to_dict(), "decision": self.decision.to_dict(), "audit": self.audit.to_dict()}


@dataclass
class StageRecord:
    stage: int
    blocks: list[BlockRecord] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    params_after: int = 0

    def to_dict(self) -> dict:
        return {"stage": self.stage, "blocks": [b.to_dict() for b in self.blocks],
                "history": self.history, "params_after": self.params_after}


def calibration_batch(calib: Dataset, size: int) -> Dataset:
    return calib.subset(np.arange(min(size, len(calib))))


def prune_stage(model: SwinMultimodal, stage: int, calib: Dataset, selector="first",
                calib_batch_size: int = 32) -> StageRecord:
    """Score and prune every block of one stage in place, in block order.

    Each block is captured from the model as already pruned so far.
    """
    cfg = model.config
    if not 0 <= stage < cfg.num_stages:
        raise ConfigError(f"schedule references stage {stage}; model has {cfg.num_stages}")
    if len(calib) == 0:
        raise ValueError("calibration data is empty")
    batch = calibration_batch(calib, calib_batch_size)
    rec = StageRecord(stage)
    for b in range(cfg.depths[stage]):
        with ag.no_grad():
            _, caps = model.forward(batch.images, batch.tabular, capture=[(stage, b)])
        report = score_block(model, caps.get((stage, b), {}), stage, b, selector)
        decision = decide(report)
        model, audit = apply_decision(model, decision)
        log.info("stage %d block %d: pruned heads %s groups %s (-%d params)", stage, b,
                 list(decision.heads_to_prune), list(decision.groups_to_prune), audit.param_delta)
        rec.blocks.append(BlockRecord(report, decision, audit))
    rec.params_after = count_params(model)
    return rec


def skew_prune_pipeline(model: SwinMultimodal, calib: Dataset, train: Dataset, schedule: StageSchedule,
                        cfg: TrainConfig | None = None) -> tuple[SwinMultimodal, list[StageRecord]]:
    """Stage-wise prune, freeze, fine-tune. Works on (and returns) a copy of ``model``."""
    cfg = cfg or TrainConfig()
    for s in schedule.stages:
        if s >= model.config.num_stages:
            raise ConfigError(f"schedule references stage {s}; model has {model.config.num_stages}")
    pruned = model.copy()
    records = []
    for i, s in enumerate(schedule.stages):
        rec = prune_stage(pruned, s, calib, cfg.calibration_selector, cfg.calib_batch_size)
        if schedule.freeze:
            pruned.frozen_stages.add(s)
        epochs = schedule.epochs_for(i)
        if epochs:
            ft = TrainConfig(**{**cfg.to_dict(), "epochs": epochs})
            _, rec.history = fit(pruned, train, ft, seed_key=(cfg.seed, 1000 + s))
        records.append(rec)
    return pruned, records


def frozen_param_names(model: SwinMultimodal) -> list[str]:
    return [k for k in model.params if param_stage(k) in model.frozen_stages]
