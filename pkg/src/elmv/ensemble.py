"""Support-set guided model selection and majority-vote prediction.

For each query record the support records are ranked by a similarity that
mixes feature distance and missingness-pattern distance. Models that
classify enough of the most similar support records correctly become
eligible; among those, every model that is best on at least one selection
criterion joins the vote.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .data import ObservationTable
from .learner import BoostedModel
from .metrics import EvalMetrics
from .subsets import SubsetDescriptor

logger = logging.getLogger(__name__)

CRITERIA = (
    "similar_support_accuracy",
    "support_accuracy",
    "cv_accuracy",
    "cv_precision",
    "cv_recall",
    "cv_f1",
    "n_features",
    "n_patients",
    "neg_missing_rate",
)


@dataclass(frozen=True)
class SimilarityWeights:
    w_f: float = 0.5
    w_m: float = 0.5

    def __post_init__(self):
        if self.w_f < 0 or self.w_m < 0 or self.w_f + self.w_m <= 0:
            raise ValueError("similarity weights must be non-negative with a positive sum")


@dataclass(frozen=True)
class SelectionConfig:
    k1: int = 10
    k2: int = 5
    criteria: tuple = CRITERIA

    def __post_init__(self):
        if self.k1 < 1 or not 0 <= self.k2 <= self.k1:
            raise ValueError("need k1 >= 1 and 0 <= k2 <= k1")
        unknown = set(self.criteria) - set(CRITERIA)
        if unknown:
            raise ValueError(f"unknown selection criteria: {sorted(unknown)}")


@dataclass(frozen=True)
class Standardizer:
    """Observed-value mean/std per feature, fitted on the training table."""

    feature_names: tuple
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, table: ObservationTable) -> "Standardizer":
        v = table.values
        obs = ~np.isnan(v)
        n = obs.sum(0)
        mean = np.where(n > 0, np.nansum(v, 0) / np.maximum(n, 1), 0.0)
        var = np.where(n > 0, np.nansum((v - mean) ** 2, 0) / np.maximum(n, 1), 1.0)
        std = np.sqrt(var)
        std = np.where(std > 0, std, 1.0)
        return cls(table.feature_names, mean, std)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names),
                "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(tuple(d["feature_names"]), np.array(d["mean"]), np.array(d["std"]))


@dataclass(frozen=True, eq=False)
class SupportSet:
    table: ObservationTable
    seed: int | None = None

    @property
    def k(self) -> int:
        return self.table.n_patients

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.table.values)


def build_support_set(table: ObservationTable, k: int, seed: int = 0) -> SupportSet:
    if table.labels is None:
        raise ValueError("support set requires a labelled table")
    if not 1 <= k <= table.n_patients:
        raise ValueError(f"support size {k} outside [1, {table.n_patients}]")
    rng = np.random.default_rng(seed)
    rows = rng.choice(table.n_patients, size=k, replace=False)
    return SupportSet(table.take(rows), seed)


def default_support_size(n_patients: int) -> int:
    return min(50, -(-n_patients // 3))


@dataclass
class ModelRecord:
    model: BoostedModel
    subset: SubsetDescriptor
    cv_metrics: EvalMetrics
    loocv_accuracy: float | None = None
    support_accuracy_all: float | None = None

    @property
    def training_rows(self) -> frozenset:
        return frozenset(self.subset.row_ids)

    def to_dict(self) -> dict:
        return {
            "subset": self.subset.to_dict(),
            "cv_metrics": self.cv_metrics.to_dict(),
            "loocv_accuracy": self.loocv_accuracy,
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelRecord":
        return cls(
            model=BoostedModel.from_dict(d["model"]),
            subset=SubsetDescriptor.from_dict(d["subset"]),
            cv_metrics=EvalMetrics.from_dict(d["cv_metrics"]),
            loocv_accuracy=d.get("loocv_accuracy"),
        )


def softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def feature_distances(queries: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Euclidean distance over co-observed features, rescaled to the full width.

    ``d = sqrt(sum_sq * n_features / n_co_observed)``. A pair with nothing
    co-observed takes the largest finite distance of that query's row (0 if
    the row has none).
    """
    q = np.atleast_2d(queries)
    diff = q[:, None, :] - support[None, :, :]
    co = (~np.isnan(diff)).sum(-1)
    sq = np.nansum(diff * diff, axis=-1)
    n_f = q.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = np.sqrt(sq * n_f / co)
    dist[co == 0] = np.nan
    row_max = np.nanmax(np.where(np.isnan(dist), -np.inf, dist), axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    return np.where(np.isnan(dist), row_max, dist)


def missingness_distances(queries: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Hamming distance between missingness patterns."""
    q = np.isnan(np.atleast_2d(queries))
    s = np.isnan(support)
    return (q[:, None, :] != s[None, :, :]).sum(-1).astype(np.float64)


def combine_similarity(dist_f, dist_m, w: SimilarityWeights) -> np.ndarray:
    return w.w_f * softmax(-np.asarray(dist_f, float)) + w.w_m * softmax(-np.asarray(dist_m, float))


def similarity(query, ss: SupportSet, w: SimilarityWeights = SimilarityWeights(),
               scaler: Standardizer | None = None) -> np.ndarray:
    """Similarity of one or many (standardised) queries to every support record.

    Returns shape (k,) for a single query vector, (n, k) for a matrix.
    """
    query = np.asarray(query, dtype=np.float64)
    support = ss.table.values
    if scaler is not None:
        query, support = scaler.transform(query), scaler.transform(support)
    if query.shape[-1] != support.shape[1]:
        raise ValueError("query and support features do not align")
    sim = combine_similarity(feature_distances(query, support),
                             missingness_distances(query, support), w)
    return sim[0] if query.ndim == 1 else sim


def tbest(criteria_values: np.ndarray) -> np.ndarray:
    """1 where a model (column) attains its criterion's (row's) maximum; ties all count."""
    c = np.asarray(criteria_values, dtype=np.float64)
    return (c == c.max(axis=1, keepdims=True)).astype(np.int8)


def select_from_criteria(criteria_values: np.ndarray) -> np.ndarray:
    """Column indices best on at least one criterion.

    The model(s) maximising the TBest row-sum are always among them.
    """
    tb = tbest(criteria_values)
    return np.flatnonzero(tb.any(axis=0))


def overall_best(criteria_values: np.ndarray) -> np.ndarray:
    totals = tbest(criteria_values).sum(axis=0)
    return np.flatnonzero(totals == totals.max())


def majority_vote(predictions, scores=None, classes=None):
    """Plurality class; ties go to the larger summed score, then class order."""
    tally = Counter(predictions)
    top = max(tally.values())
    tied = sorted((c for c, n in tally.items() if n == top), key=str)
    if len(tied) > 1 and scores is not None:
        best = max(scores.get(c, 0.0) for c in tied)
        tied = [c for c in tied if scores.get(c, 0.0) == best]
    return tied[0], dict(sorted(tally.items(), key=lambda kv: str(kv[0])))


@dataclass
class Prediction:
    label: object
    tally: dict
    n_selected: int
    n_eligible: int
    fallback: bool = False


@dataclass
class EnsemblePredictor:
    """Registry + support set, with per-model support predictions precomputed.

    A model's correctness on a support record that was one of its own
    training rows is not counted in its support accuracies; eligibility
    still uses every record.
    """

    registry: list
    support: SupportSet
    scaler: Standardizer
    weights: SimilarityWeights = field(default_factory=SimilarityWeights)
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def __post_init__(self):
        if not self.registry:
            raise ValueError("registry is empty")
        st = self.support.table
        k = st.n_patients
        self.classes = tuple(sorted({c for r in self.registry for c in r.model.classes}, key=str))
        self.correct = np.zeros((len(self.registry), k), dtype=bool)
        self.usable = np.ones((len(self.registry), k), dtype=bool)
        for m, rec in enumerate(self.registry):
            X = rec.model.project(st.values, st.feature_names)
            self.correct[m] = rec.model.predict(X) == st.labels.astype(object)
            own = rec.training_rows
            self.usable[m] = [pid not in own for pid in st.patient_ids]
            n = self.usable[m].sum()
            rec.support_accuracy_all = float((self.correct[m] & self.usable[m]).sum() / n) if n else 0.0
        self._static = self._static_criteria()

    def _static_criteria(self) -> dict:
        recs = self.registry
        return {
            "support_accuracy": [r.support_accuracy_all for r in recs],
            "cv_accuracy": [r.cv_metrics.accuracy for r in recs],
            "cv_precision": [r.cv_metrics.precision for r in recs],
            "cv_recall": [r.cv_metrics.recall for r in recs],
            "cv_f1": [r.cv_metrics.f1 for r in recs],
            "n_features": [r.subset.n_cols for r in recs],
            "n_patients": [r.subset.n_rows for r in recs],
            "neg_missing_rate": [-r.subset.missing_rate for r in recs],
        }

    def top_similar(self, query: np.ndarray) -> np.ndarray:
        sim = similarity(query, self.support, self.weights, self.scaler)
        return np.argsort(-sim, kind="stable")[: self.selection.k1]

    def eligible(self, top: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Eligible model indices and each model's accuracy on ``top``.

        Eligibility counts every top record: a model needs ``k2`` of them
        right. The returned accuracy, used as a selection criterion, skips
        the model's own training rows (0 when none are left).
        """
        k2 = self.selection.k2
        correct = self.correct[:, top]
        ok = correct.sum(1) >= k2
        usable = self.usable[:, top]
        n_use = usable.sum(1)
        acc = np.where(n_use > 0, (correct & usable).sum(1) / np.maximum(n_use, 1), 0.0)
        return np.flatnonzero(ok), acc

    def criteria_matrix(self, idx: np.ndarray, similar_acc: np.ndarray) -> np.ndarray:
        rows = []
        for name in self.selection.criteria:
            if name == "similar_support_accuracy":
                rows.append(similar_acc[idx])
            else:
                rows.append(np.asarray(self._static[name], dtype=np.float64)[idx])
        return np.vstack(rows)

    def select(self, query: np.ndarray):
        top = self.top_similar(query)
        idx, acc = self.eligible(top)
        fallback = idx.size == 0
        if fallback:
            logger.warning("no eligible model for query; falling back to the full registry")
            idx = np.arange(len(self.registry))
        chosen = idx[select_from_criteria(self.criteria_matrix(idx, acc))]
        return chosen, len(idx), fallback

    def predict_one(self, values: np.ndarray, feature_names=None) -> Prediction:
        values = np.asarray(values, dtype=np.float64)
        feature_names = feature_names or self.support.table.feature_names
        chosen, n_eligible, fallback = self.select(values)
        label, tally = ensemble_predict([self.registry[m] for m in chosen], values, feature_names)
        return Prediction(label, tally, len(chosen), n_eligible, fallback)

    def predict(self, table: ObservationTable) -> list[Prediction]:
        if tuple(table.feature_names) != tuple(self.support.table.feature_names):
            table = table.restrict(col_ids=self.support.table.feature_names)
        return [self.predict_one(row) for row in table.values]


def eligible_models(query, ss: SupportSet, registry: list, cfg: SelectionConfig = SelectionConfig(),
                    w: SimilarityWeights = SimilarityWeights(),
                    scaler: Standardizer | None = None) -> list:
    scaler = scaler or Standardizer.fit(ss.table)
    pred = EnsemblePredictor(registry, ss, scaler, w, cfg)
    idx, _ = pred.eligible(pred.top_similar(np.asarray(query, float)))
    if idx.size == 0:
        logger.warning("no eligible model for query; falling back to the full registry")
        return list(registry)
    return [registry[i] for i in idx]


def select_models(query, ss: SupportSet, registry: list, cfg: SelectionConfig = SelectionConfig(),
                  w: SimilarityWeights = SimilarityWeights(),
                  scaler: Standardizer | None = None) -> list:
    scaler = scaler or Standardizer.fit(ss.table)
    chosen, _, _ = EnsemblePredictor(registry, ss, scaler, w, cfg).select(np.asarray(query, float))
    return [registry[i] for i in chosen]


def ensemble_predict(selected: list, query, feature_names) -> tuple:
    """Majority vote of ``selected`` model records on one query row."""
    if not selected:
        raise ValueError("no models selected")
    query = np.asarray(query, dtype=np.float64)[None, :]
    votes, scores = [], {}
    for rec in selected:
        proba = rec.model.predict_proba(rec.model.project(query, feature_names))[0]
        votes.append(rec.model.classes[int(np.argmax(proba))])
        for c, s in zip(rec.model.classes, proba):
            scores[c] = scores.get(c, 0.0) + float(s)
    return majority_vote(votes, scores)


def knn_baseline(query, ss: SupportSet, k_vote: int, w: SimilarityWeights = SimilarityWeights(),
                 scaler: Standardizer | None = None):
    """Majority label of the ``k_vote`` support records most similar to ``query``."""
    if not 1 <= k_vote <= ss.k:
        raise ValueError(f"k_vote {k_vote} outside [1, {ss.k}]")
    sim = similarity(query, ss, w, scaler)
    top = np.argsort(-sim, kind="stable")[:k_vote]
    label, _ = majority_vote(ss.table.labels[top].tolist())
    return label
