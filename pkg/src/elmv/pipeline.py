"""End-to-end ELMV: qualified subsets -> per-subset models -> guided ensemble."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import ObservationTable, build_mask
from .ensemble import (
    EnsemblePredictor,
    ModelRecord,
    SelectionConfig,
    SimilarityWeights,
    Standardizer,
    build_support_set,
    default_support_size,
)
from .learner import LearnerParams, TrainingError, cross_validate, train
from .subsets import QualifiedSubsetCollection, SubsetDescriptor, filter_qualified, generate_table

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ELMVConfig:
    cap: float = 0.20
    rate_bin_width: float = 0.05
    min_rows: int | None = None
    min_cols: int | None = None
    learner: LearnerParams = field(default_factory=LearnerParams)
    cv_folds: int = 10
    support_size: int | None = None
    k1: int = 10
    k2: int = 5
    w_f: float = 0.5
    w_m: float = 0.5
    seed: int = 0
    workers: int = 1

    @property
    def weights(self) -> SimilarityWeights:
        return SimilarityWeights(self.w_f, self.w_m)

    @property
    def selection(self) -> SelectionConfig:
        return SelectionConfig(self.k1, self.k2)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ELMVConfig":
        d = dict(d)
        if isinstance(d.get("learner"), dict):
            d["learner"] = LearnerParams(**d["learner"])
        return cls(**d)


def qualified_subsets(table: ObservationTable, config: ELMVConfig) -> QualifiedSubsetCollection:
    counts = generate_table(build_mask(table), config.min_rows, config.min_cols)
    return filter_qualified(counts, config.cap, config.rate_bin_width)


def train_subset(table: ObservationTable, subset: SubsetDescriptor, params: LearnerParams,
                 cv_folds: int = 10, seed: int = 0, loocv: bool = False) -> ModelRecord | None:
    """Fit and cross-validate one model on ``subset``; ``None`` if it is untrainable."""
    sub = table.restrict(subset.row_ids, subset.col_ids)
    try:
        model = train(sub, params)
    except TrainingError as exc:
        logger.warning("skipping subset %dx%d: %s", subset.n_rows, subset.n_cols, exc)
        return None
    k = max(2, min(cv_folds, sub.n_patients))
    metrics = cross_validate(sub, params, scheme="kfold", k=k, seed=seed)
    loo = cross_validate(sub, params, scheme="loocv").accuracy if loocv else None
    return ModelRecord(model, subset, metrics, loocv_accuracy=loo)


def _train_job(args):
    return train_subset(*args)


def train_registry(table: ObservationTable, collection, config: ELMVConfig,
                   loocv: bool = False) -> list[ModelRecord]:
    jobs = [(table, s, config.learner, config.cv_folds, config.seed, loocv) for s in collection]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_train_job, jobs))
    else:
        records = [_train_job(j) for j in jobs]
    records = [r for r in records if r is not None]
    if not records:
        raise TrainingError("no qualified subset could be trained")
    return records


class ELMV:
    """Fit on a labelled table with missing values, predict unseen records."""

    def __init__(self, config: ELMVConfig | None = None):
        self.config = config or ELMVConfig()

    def fit(self, table: ObservationTable) -> "ELMV":
        cfg = self.config
        self.feature_names = table.feature_names
        self.collection = qualified_subsets(table, cfg)
        self.registry = train_registry(table, self.collection, cfg)
        k = cfg.support_size or default_support_size(table.n_patients)
        self.support = build_support_set(table, min(k, table.n_patients), cfg.seed)
        self.scaler = Standardizer.fit(table)
        self.predictor = EnsemblePredictor(
            self.registry, self.support, self.scaler, cfg.weights, cfg.selection
        )
        return self

    def predict_detailed(self, table: ObservationTable):
        return self.predictor.predict(table.restrict(col_ids=self.feature_names))

    def predict(self, table: ObservationTable) -> np.ndarray:
        return np.array([p.label for p in self.predict_detailed(table)], dtype=object)
