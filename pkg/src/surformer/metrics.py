"""Classification metrics with macro averaging."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptyInputError, LabelError


@dataclass
class MetricsReport:
    model: str
    precision: np.ndarray   # per class
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray   # rows = truth, columns = prediction
    n_samples: int

    @property
    def accuracy(self):
        return float(np.trace(self.confusion) / self.n_samples)

    @property
    def macro_precision(self):
        return float(self.precision.mean())

    @property
    def macro_recall(self):
        return float(self.recall.mean())

    @property
    def macro_f1(self):
        return float(self.f1.mean())

    def to_dict(self):
        return {
            "model": self.model,
            "n_samples": int(self.n_samples),
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "precision": [float(v) for v in self.precision],
            "recall": [float(v) for v in self.recall],
            "f1": [float(v) for v in self.f1],
            "confusion": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            model=d["model"],
            precision=np.asarray(d["precision"], dtype=np.float64),
            recall=np.asarray(d["recall"], dtype=np.float64),
            f1=np.asarray(d["f1"], dtype=np.float64),
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            n_samples=int(d["n_samples"]),
        )


def confusion_matrix(truth, predictions, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, predictions), 1)
    return cm


def _safe_div(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def compute_metrics(predictions, truth, n_classes=5, model=""):
    """Per-class and macro precision/recall/F1 plus accuracy.

    A zero denominator yields 0 for that entry, so classes that never occur
    still count toward the macro mean.
    """
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if len(predictions) != len(truth):
        raise DimensionError(f"{len(predictions)} predictions for {len(truth)} labels")
    if len(truth) == 0:
        raise EmptyInputError("cannot compute metrics on zero samples")
    for name, arr in (("truth", truth), ("predictions", predictions)):
        bad = np.flatnonzero((arr < 0) | (arr >= n_classes))
        if bad.size:
            raise LabelError(f"{name}[{bad[0]}] = {arr[bad[0]]} outside [0, {n_classes})")
    cm = confusion_matrix(truth, predictions, n_classes)
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_div(tp, cm.sum(axis=0).astype(np.float64))
    recall = _safe_div(tp, cm.sum(axis=1).astype(np.float64))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return MetricsReport(model, precision, recall, f1, cm, len(truth))
