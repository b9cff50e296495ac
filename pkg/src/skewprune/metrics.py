"""Classification scores, model-cost records and before/after effect tables."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import checkpoint
from .model import SwinMultimodal, count_flops, count_params, memory_footprint_bytes

MB = 2 ** 20


def _pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError(f"preds ({preds.size}) and labels ({labels.size}) differ in length")
    return preds, labels


def accuracy(preds, labels) -> float:
    preds, labels = _pair(preds, labels)
    if preds.size == 0:
        return 0.0
    return float((preds == labels).sum()) / preds.size


def confusion_matrix(preds, labels, num_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    preds, labels = _pair(preds, labels)
    if preds.size and (min(preds.min(), labels.min()) < 0 or max(preds.max(), labels.max()) >= num_classes):
        raise ValueError(f"class ids must lie in [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def per_class_f1(preds, labels, num_classes: int) -> list[float]:
    """Harmonic mean of precision and recall per class; 0 where undefined."""
    cm = confusion_matrix(preds, labels, num_classes)
    out = []
    for k in range(num_classes):
        tp = int(cm[k, k])
        predicted, actual = int(cm[:, k].sum()), int(cm[k, :].sum())
        if tp == 0:
            out.append(0.0)
            continue
        precision, recall = tp / predicted, tp / actual
        out.append(2 * precision * recall / (precision + recall))
    return out


def macro_f1(preds, labels, num_classes: int) -> float:
    f1 = per_class_f1(preds, labels, num_classes)
    return sum(f1) / num_classes


def weighted_f1(preds, labels, num_classes: int) -> float:
    """Support-weighted F1 (classes weighted by true-label count)."""
    _, labels_ = _pair(preds, labels)
    if labels_.size == 0:
        return 0.0
    support = np.bincount(labels_, minlength=num_classes)
    f1 = per_class_f1(preds, labels, num_classes)
    return sum(f * int(n) for f, n in zip(f1, support)) / labels_.size


def f1_score(preds, labels, num_classes: int, average: str = "macro") -> float:
    if average == "macro":
        return macro_f1(preds, labels, num_classes)
    if average == "weighted":
        return weighted_f1(preds, labels, num_classes)
    raise ValueError(f"unknown F1 average {average!r}")


@dataclass
class MetricsRecord:
    params: int
    flops: int
    memory_bytes: int
    size_bytes: int
    accuracy: float | None = None
    f1: float | None = None

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    @property
    def params_m(self) -> float:
        return self.params / 1e6

    @property
    def memory_mb(self) -> float:
        return self.memory_bytes / MB

    @property
    def size_mb(self) -> float:
        return self.size_bytes / MB

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(gflops=self.gflops, params_m=self.params_m, memory_mb=self.memory_mb, size_mb=self.size_mb)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(d["params"], d["flops"], d["memory_bytes"], d["size_bytes"], d.get("accuracy"), d.get("f1"))


def cost_report(model: SwinMultimodal, accuracy: float | None = None, f1: float | None = None) -> MetricsRecord:
    return MetricsRecord(count_params(model), count_flops(model), memory_footprint_bytes(model),
                         len(checkpoint.to_bytes(model)), accuracy, f1)


EFFECT_ROWS = (
    ("Accuracy", "accuracy"),
    ("F1", "f1"),
    ("GFLOPs", "gflops"),
    ("Parameters (M)", "params_m"),
    ("Memory Footprint (MB)", "memory_mb"),
    ("Model Size (MB)", "size_mb"),
)


def effects(before: MetricsRecord, after: MetricsRecord) -> dict:
    """Per metric: before, after, delta (before - after) and ratio (after / before)."""
    out = {}
    for label, attr in EFFECT_ROWS:
        b, a = getattr(before, attr), getattr(after, attr)
        if b is None or a is None:
            continue
        out[attr] = {
            "label": label,
            "before": b,
            "after": a,
            "delta": b - a,
            "ratio": (a / b) if b else None,
        }
    return out


def render_effects(table: dict, before_name: str = "Before", after_name: str = "After") -> str:
    """Aligned text table in the layout of a before / pruned / effects comparison."""
    head = f"{'':<24}{before_name:>12}{after_name:>12}{'Delta':>12}{'After/Before':>14}"
    lines = [head, "-" * len(head)]
    for row in table.values():
        ratio = "n/a" if row["ratio"] is None else f"{100 * row['ratio']:.2f}%"
        lines.append(f"{row['label']:<24}{row['before']:>12.4f}{row['after']:>12.4f}{row['delta']:>12.4f}{ratio:>14}")
    return "\n".join(lines)
