"""Confusion counts and the derived precision/recall/F1/accuracy."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import IdsError


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float

    def as_dict(self):
        return asdict(self)

    def table(self):
        rows = [("TP", self.tp), ("FP", self.fp), ("FN", self.fn), ("TN", self.tn),
                ("precision", f"{self.precision:.4f}"), ("recall", f"{self.recall:.4f}"),
                ("f1", f"{self.f1:.4f}"), ("accuracy", f"{self.accuracy:.4f}")]
        return "\n".join(f"{k:<10} {v}" for k, v in rows)


def evaluate(pred, truth):
    pred = np.asarray(pred).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if pred.shape != truth.shape:
        raise IdsError("LENGTH_MISMATCH", f"{pred.shape} predictions vs {truth.shape} labels")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    n = tp + fp + fn + tn
    accuracy = (tp + tn) / n if n else 0.0
    return Metrics(tp, fp, fn, tn, precision, recall, f1, accuracy)
