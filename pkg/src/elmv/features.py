"""Critical-feature ranking aggregated over per-subset models.

Each subset contributes its top-k3 features by gain. Subsets are grouped by
missing-rate bin; within a bin a feature's ratio is how often it was
selected over how often it was available. A feature's score is the sum over
bins of ``bin ratio * mean LOOCV accuracy of the bin``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .data import ObservationTable
from .learner import LearnerParams, cross_validate, train
from .subsets import SubsetDescriptor, rate_bin


@dataclass(frozen=True)
class LocalFeatureReport:
    subset: SubsetDescriptor
    loocv_accuracy: float
    top_features: tuple  # ((feature, gain), ...) by gain, descending

    def __post_init__(self):
        names = [f for f, _ in self.top_features]
        if not set(names) <= set(self.subset.col_ids):
            raise ValueError("top features must come from the subset's columns")


@dataclass(frozen=True)
class FeatureEntry:
    feature: str
    selection_count: int
    availability_count: int
    weighted_score: float
    bin_ratios: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.selection_count / self.availability_count if self.availability_count else 0.0


@dataclass(frozen=True)
class GlobalFeatureRanking:
    entries: tuple
    k4: int
    bin_weights: dict = field(default_factory=dict)

    @property
    def features(self) -> list[str]:
        return [e.feature for e in self.entries]

    def to_tsv(self, path, config_hash: str | None = None) -> None:
        bins = sorted(self.bin_weights)
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["rank", "feature", "selection_count", "availability_count", "ratio",
                        *[f"ratio_bin{b}" for b in bins], "weighted_score"])
            for rank, e in enumerate(self.entries, start=1):
                per_bin = [f"{e.bin_ratios[b]:.6f}" if b in e.bin_ratios else "" for b in bins]
                w.writerow([rank, e.feature, e.selection_count, e.availability_count,
                            f"{e.ratio:.6f}", *per_bin, f"{e.weighted_score:.6f}"])


def top_k(importance, k3: int) -> tuple:
    ranked = sorted(((f, g) for f, g in importance if g > 0), key=lambda fg: (-fg[1], fg[0]))
    return tuple(ranked[:k3])


def local_report(table: ObservationTable, subset: SubsetDescriptor,
                 params: LearnerParams | None = None, k3: int = 5,
                 loocv_accuracy: float | None = None, model=None) -> LocalFeatureReport:
    """LOOCV accuracy and top-k3 gain features for one subset.

    ``loocv_accuracy`` and ``model`` may be passed in when already known.
    """
    params = params or LearnerParams()
    sub = table.restrict(subset.row_ids, subset.col_ids)
    if loocv_accuracy is None:
        loocv_accuracy = cross_validate(sub, params, scheme="loocv").accuracy
    model = model or train(sub, params)
    return LocalFeatureReport(subset, float(loocv_accuracy), top_k(model.feature_importance(), k3))


def reports_from_registry(records, k3: int = 5) -> list[LocalFeatureReport]:
    """Local reports from already trained records carrying LOOCV accuracies."""
    missing = [r.subset for r in records if r.loocv_accuracy is None]
    if missing:
        raise ValueError(f"{len(missing)} registry records lack a LOOCV accuracy")
    return [LocalFeatureReport(r.subset, float(r.loocv_accuracy),
                               top_k(r.model.feature_importance(), k3)) for r in records]


def rank_features(reports, rate_bin_width: float = 0.05, k4: int = 10) -> GlobalFeatureRanking:
    if not reports:
        raise ValueError("no local reports to aggregate")
    bins: dict[int, list[LocalFeatureReport]] = {}
    for r in reports:
        bins.setdefault(rate_bin(r.subset.missing_rate, rate_bin_width), []).append(r)

    weights = {b: sum(r.loocv_accuracy for r in rs) / len(rs) for b, rs in bins.items()}
    selected: dict[str, dict[int, int]] = {}
    available: dict[str, dict[int, int]] = {}
    positions: dict[str, list[int]] = {}
    for b, rs in bins.items():
        for r in rs:
            for f in r.subset.col_ids:
                available.setdefault(f, {}).setdefault(b, 0)
                available[f][b] += 1
            for pos, (f, _) in enumerate(r.top_features):
                selected.setdefault(f, {}).setdefault(b, 0)
                selected[f][b] += 1
                positions.setdefault(f, []).append(pos)

    entries = []
    for f, avail in available.items():
        sel = selected.get(f, {})
        ratios = {b: sel.get(b, 0) / n for b, n in avail.items()}
        score = sum(weights[b] * ratios[b] for b in ratios)
        entries.append(FeatureEntry(f, sum(sel.values()), sum(avail.values()), score, ratios))
    # ties: more selections first, then better mean position in the top-k3 lists
    k_max = max(len(r.top_features) for r in reports) + 1

    def mean_pos(f):
        p = positions.get(f)
        return sum(p) / len(p) if p else k_max

    entries.sort(key=lambda e: (-e.weighted_score, -e.selection_count, mean_pos(e.feature),
                                e.feature))
    return GlobalFeatureRanking(tuple(entries[:k4]), k4, weights)
