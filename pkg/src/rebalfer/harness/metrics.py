"""Per-class, overall and mean (macro) accuracy from a confusion matrix."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def confusion_matrix(labels, predictions, num_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise ValueError(f"{labels.shape} labels vs {predictions.shape} predictions")
    for name, a in (("label", labels), ("prediction", predictions)):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise ValueError(f"{name} outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


@dataclass
class MetricsReport:
    per_class_accuracy: list[float | None]
    overall_accuracy: float
    mean_accuracy: float
    confusion: list[list[int]]
    epoch: int = -1
    split: str = "test"
    class_names: list[str] = field(default_factory=list)
    empty_classes: list[int] = field(default_factory=list)

    @classmethod
    def from_confusion(cls, confusion, epoch: int = -1, split: str = "test",
                       class_names=None) -> "MetricsReport":
        cm = np.asarray(confusion, dtype=np.int64)
        L = cm.shape[0]
        rows = cm.sum(axis=1)
        if rows.sum() == 0:
            raise ValueError("confusion matrix is empty")
        diag = np.diag(cm)
        empty = [int(c) for c in np.flatnonzero(rows == 0)]
        if empty:
            log.warning("classes %s have no evaluation samples; excluded from the mean", empty)
        per_class = [None if rows[c] == 0 else float(diag[c] / rows[c]) for c in range(L)]
        present = [a for a in per_class if a is not None]
        return cls(
            per_class_accuracy=per_class,
            overall_accuracy=float(diag.sum() / rows.sum()),
            mean_accuracy=float(np.mean(present)),
            confusion=cm.tolist(),
            epoch=epoch,
            split=split,
            class_names=list(class_names) if class_names is not None else [f"class_{i}" for i in range(L)],
            empty_classes=empty,
        )

    @classmethod
    def from_predictions(cls, labels, predictions, num_classes: int, **kw) -> "MetricsReport":
        return cls.from_confusion(confusion_matrix(labels, predictions, num_classes), **kw)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "split": self.split,
            "per_class": {n: a for n, a in zip(self.class_names, self.per_class_accuracy)},
            "overall": self.overall_accuracy,
            "mean": self.mean_accuracy,
            "confusion": self.confusion,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        rep = cls.from_confusion(d["confusion"], epoch=d.get("epoch", -1), split=d.get("split", "test"),
                                 class_names=list(d["per_class"].keys()))
        return rep
