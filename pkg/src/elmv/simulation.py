"""Simulation protocol: noisy feature expansion, random masking, method comparison."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import ObservationTable, load_iris, load_mask_tsv, load_table
from .ensemble import Standardizer, build_support_set, default_support_size, knn_baseline, SimilarityWeights
from .learner import LearnerParams, column_means, fit_arrays, mean_impute, stratified_folds, train
from .metrics import EvalMetrics, classification_metrics
from .pipeline import ELMV, ELMVConfig

logger = logging.getLogger(__name__)

DEFAULT_NOISE_LEVELS = (0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 1.5, 2.0)
METHODS = ("elmv", "base_no_impute", "mean_impute", "knn_baseline")


@dataclass(frozen=True)
class SimulationConfig:
    noise_levels: tuple = DEFAULT_NOISE_LEVELS
    missing_rates: tuple = (0.05, 0.10, 0.20, 0.60, 0.65, 0.70)
    trial_seeds: tuple = (0, 1, 2, 3, 4)
    validation_fraction: float = 0.2
    methods: tuple = METHODS
    elmv: ELMVConfig = field(default_factory=ELMVConfig)
    learner: LearnerParams = field(default_factory=LearnerParams)
    knn_k: int | None = None
    external_imputed_dir: str | None = None
    mask_dir: str | None = None
    workers: int = 1

    @property
    def copies_per_feature(self) -> int:
        return len(self.noise_levels)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrialResult:
    method: str
    missing_rate: float
    seed: int
    metrics: EvalMetrics | None
    error: str | None = None
    seconds: float = 0.0


def expand(seed_table: ObservationTable, noise_levels=DEFAULT_NOISE_LEVELS,
           seed: int = 0) -> ObservationTable:
    """Append noisy copies of every feature.

    Copy c of feature f is ``f + N(0, (noise_levels[c] * sd(f))^2)``. Columns
    are named ``<feature>@<noise level>``; the untouched original is ``@0``.
    A level repeated for the same feature gets a ``#<copy>`` suffix.
    """
    if np.isnan(seed_table.values).any():
        raise ValueError("seed dataset must be complete")
    rng = np.random.default_rng(seed)
    sd = seed_table.values.std(axis=0, ddof=1)
    cols, names = [], []
    for j, name in enumerate(seed_table.feature_names):
        x = seed_table.values[:, j]
        cols.append(x)
        names.append(f"{name}@0")
        for c, level in enumerate(noise_levels, start=1):
            cols.append(x + rng.normal(0.0, 1.0, size=x.shape) * level * sd[j])
            label = f"{name}@{level:g}"
            names.append(label if label not in names else f"{label}#{c}")
    return ObservationTable(seed_table.patient_ids, names, np.column_stack(cols), seed_table.labels)


def progenitor(feature_name: str) -> tuple[str, float]:
    base, _, level = feature_name.partition("#")[0].rpartition("@")
    return base, float(level)


def mask_random(table: ObservationTable, rate: float, seed: int = 0) -> ObservationTable:
    """Blank exactly floor(rate * N_p * N_f) cells chosen uniformly; labels untouched."""
    if not 0 <= rate < 1:
        raise ValueError("rate must lie in [0, 1)")
    n = table.values.size
    n_drop = math.floor(rate * n + 1e-9)
    rng = np.random.default_rng(seed)
    flat = table.values.copy().ravel()
    flat[rng.choice(n, size=n_drop, replace=False)] = np.nan
    return table.with_values(flat.reshape(table.values.shape))


def apply_mask(table: ObservationTable, mask) -> ObservationTable:
    """Blank the cells set in ``mask`` (matched to ``table`` by ids)."""
    bits = np.zeros(table.values.shape, dtype=bool)
    r = table.row_index(mask.row_ids)
    c = table.col_index(mask.col_ids)
    bits[np.ix_(r, c)] = mask.bits
    values = table.values.copy()
    values[bits] = np.nan
    return table.with_values(values)


def mask_path(directory, rate: float, seed: int) -> Path:
    """Custom mask file for one trial, used instead of random masking."""
    return Path(directory) / f"rate{rate:g}_seed{seed}.tsv"


def holdout_split(table: ObservationTable, fraction: float, seed: int = 0):
    """Stratified holdout: (train, validation)."""
    n_folds = max(2, round(1 / fraction))
    fold = stratified_folds(table.labels, n_folds, seed)
    val = np.flatnonzero(fold == 0)
    tr = np.flatnonzero(fold != 0)
    return table.take(tr), table.take(val)


def moving_average(series, window: int = 3):
    """Centred moving mean over (x, value) pairs; the window shrinks at the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    xs = [x for x, _ in series]
    vs = [v for _, v in series]
    half = window // 2
    out = []
    for i, x in enumerate(xs):
        lo, hi = max(0, i - half), min(len(vs), i + half + 1)
        out.append((x, float(np.mean(vs[lo:hi]))))
    return out


def _score(y_true, y_pred) -> EvalMetrics:
    return classification_metrics(list(y_true), list(y_pred))


def run_method(method: str, train_t: ObservationTable, val_t: ObservationTable,
               config: SimulationConfig, seed: int) -> EvalMetrics:
    if method == "base_no_impute":
        model = train(train_t, config.learner)
        return _score(val_t.labels, model.predict(val_t.values))
    if method == "mean_impute":
        means = column_means(train_t)
        model = train(mean_impute(train_t, means), config.learner)
        return _score(val_t.labels, model.predict(mean_impute(val_t, means).values))
    if method == "knn_baseline":
        k = default_support_size(train_t.n_patients)
        if config.elmv.support_size:
            k = min(config.elmv.support_size, train_t.n_patients)
        ss = build_support_set(train_t, k, seed)
        scaler = Standardizer.fit(train_t)
        w = SimilarityWeights(config.elmv.w_f, config.elmv.w_m)
        k_vote = config.knn_k or config.elmv.k1
        pred = [knn_baseline(row, ss, min(k_vote, ss.k), w, scaler) for row in val_t.values]
        return _score(val_t.labels, pred)
    if method == "elmv":
        cfg = ELMVConfig.from_dict({**config.elmv.to_dict(), "seed": seed, "workers": 1})
        model = ELMV(cfg).fit(train_t)
        return _score(val_t.labels, model.predict(val_t))
    raise ValueError(f"unknown method {method!r}")


def external_imputed_path(directory, rate: float, seed: int) -> Path:
    return Path(directory) / f"rate{rate:g}_seed{seed}.csv"


def run_trial(config: SimulationConfig, rate: float, seed: int,
              seed_table: ObservationTable | None = None) -> list[TrialResult]:
    seed_table = seed_table or load_iris()
    full = expand(seed_table, config.noise_levels, seed)
    if config.mask_dir:
        masked = apply_mask(full, load_mask_tsv(mask_path(config.mask_dir, rate, seed)))
    else:
        masked = mask_random(full, rate, seed)
    train_t, val_t = holdout_split(masked, config.validation_fraction, seed)
    results = []
    for method in config.methods:
        t0 = time.perf_counter()
        try:
            m = run_method(method, train_t, val_t, config, seed)
            results.append(TrialResult(method, rate, seed, m, seconds=time.perf_counter() - t0))
        except Exception as exc:  # per-trial failures are recorded, not fatal
            logger.warning("trial %s rate=%g seed=%d failed: %s", method, rate, seed, exc)
            results.append(TrialResult(method, rate, seed, None, f"{type(exc).__name__}: {exc}",
                                       time.perf_counter() - t0))
    if config.external_imputed_dir:
        path = external_imputed_path(config.external_imputed_dir, rate, seed)
        results.append(_external_trial(path, train_t, val_t, config, rate, seed))
    return results


def _external_trial(path, train_t, val_t, config, rate, seed) -> TrialResult:
    """Score a table imputed outside this package (e.g. by MICE) on the same split."""
    t0 = time.perf_counter()
    try:
        imputed = load_table(path, label_column="label", id_column="patient_id")
        tr = imputed.restrict(train_t.patient_ids, train_t.feature_names)
        va = imputed.restrict(val_t.patient_ids, train_t.feature_names)
        model = fit_arrays(tr.values, train_t.labels, tr.feature_names, config.learner)
        m = _score(val_t.labels, model.predict(va.values))
        return TrialResult("external_impute", rate, seed, m, seconds=time.perf_counter() - t0)
    except Exception as exc:
        logger.warning("external imputation trial %s failed: %s", path, exc)
        return TrialResult("external_impute", rate, seed, None, f"{type(exc).__name__}: {exc}")


def _trial_job(args):
    return run_trial(*args)


def run_trials(config: SimulationConfig, seed_table: ObservationTable | None = None) -> list[TrialResult]:
    jobs = [(config, r, s, seed_table) for r in config.missing_rates for s in config.trial_seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            batches = list(pool.map(_trial_job, jobs))
    else:
        batches = [_trial_job(j) for j in jobs]
    return [r for batch in batches for r in batch]


def summarize(results, window: int = 3) -> dict:
    """Per-method, per-rate mean/std of every metric plus moving-average series."""
    metrics = ("accuracy", "precision", "recall", "f1")
    by_key: dict = {}
    for r in results:
        if r.metrics is not None:
            by_key.setdefault((r.method, r.missing_rate), []).append(r.metrics)
    summary: dict = {"methods": {}, "moving_average": {}, "window": window}
    for (method, rate), ms in sorted(by_key.items()):
        entry = {"n": len(ms)}
        for name in metrics:
            vals = np.array([getattr(m, name) for m in ms])
            entry[name] = {"mean": float(vals.mean()), "std": float(vals.std())}
        summary["methods"].setdefault(method, {})[f"{rate:g}"] = entry
    for method, rates in summary["methods"].items():
        ordered = sorted(rates.items(), key=lambda kv: float(kv[0]))
        summary["moving_average"][method] = {
            name: [list(p) for p in moving_average(
                [(float(r), e[name]["mean"]) for r, e in ordered], window)]
            for name in metrics
        }
    failures = [r for r in results if r.metrics is None]
    summary["failures"] = [
        {"method": r.method, "missing_rate": r.missing_rate, "seed": r.seed, "error": r.error}
        for r in failures
    ]
    return summary


def write_results(results, out_dir, config_hash: str | None = None, window: int = 3) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trials.tsv", "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["method", "missing_rate", "seed", "accuracy", "precision", "recall", "f1",
                    "seconds", "error"])
        for r in results:
            m = r.metrics
            vals = [f"{getattr(m, k):.6f}" if m else "" for k in ("accuracy", "precision", "recall", "f1")]
            w.writerow([r.method, f"{r.missing_rate:g}", r.seed, *vals, f"{r.seconds:.3f}", r.error or ""])
    summary = summarize(results, window)
    if config_hash:
        summary["config_hash"] = config_hash
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary
