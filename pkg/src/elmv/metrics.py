"""Macro-averaged classification metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_fold: tuple = ()

    def to_dict(self, folds: bool = True) -> dict:
        d = {"accuracy": self.accuracy, "precision": self.precision,
             "recall": self.recall, "f1": self.f1}
        if folds and self.per_fold:
            d["per_fold"] = [m.to_dict(folds=False) for m in self.per_fold]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalMetrics":
        folds = tuple(cls.from_dict(f) for f in d.get("per_fold", ()))
        return cls(d["accuracy"], d["precision"], d["recall"], d["f1"], folds)


def per_class_scores(y_true, y_pred):
    """Precision, recall and F1 for each label in ``y_true`` or ``y_pred``.

    A label never predicted gets precision 0; a label never present gets
    recall 0. Both cases are logged.
    """
    y_true = np.asarray(y_true, dtype=object)
    y_pred = np.asarray(y_pred, dtype=object)
    labels = sorted(set(y_true.tolist()) | set(y_pred.tolist()), key=str)
    out = {}
    for c in labels:
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        n_pred = int(np.sum(y_pred == c))
        n_true = int(np.sum(y_true == c))
        if n_pred == 0:
            logger.debug("class %r never predicted; precision taken as 0", c)
        if n_true == 0:
            logger.debug("class %r absent from truth; recall taken as 0", c)
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true if n_true else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        out[c] = (p, r, f)
    return out


def classification_metrics(y_true, y_pred) -> EvalMetrics:
    y_true = np.asarray(y_true, dtype=object)
    y_pred = np.asarray(y_pred, dtype=object)
    if len(y_true) == 0:
        raise ValueError("no predictions to score")
    acc = float(np.mean(y_true == y_pred))
    scores = per_class_scores(y_true, y_pred)
    if len(scores) == 1:
        # only one class in play: precision and recall collapse to accuracy
        return EvalMetrics(acc, acc, acc, acc)
    p, r, f = (float(np.mean(v)) for v in zip(*scores.values()))
    return EvalMetrics(acc, p, r, f)
