"""Tabular observations with missing values, missingness masks and assessment."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "NaN"})


class TableParseError(ValueError):
    """Raised when a CSV file cannot be read into an ObservationTable."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Patients x features grid of optional reals, with optional class labels.

    Absent cells are stored as NaN in a float64 array; ``observed`` gives the
    explicit presence pattern. NaN is never used for anything but absence.
    """

    patient_ids: tuple
    feature_names: tuple
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        ids = tuple(str(p) for p in self.patient_ids)
        names = tuple(str(f) for f in self.feature_names)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape != (len(ids), len(names)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(ids)} patients x {len(names)} features"
            )
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate patient ids")
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names")
        object.__setattr__(self, "patient_ids", ids)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "values", _freeze(values))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (len(ids),):
                raise ValueError("labels length does not match number of patients")
            object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n_patients(self) -> int:
        return len(self.patient_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def classes(self) -> tuple:
        if self.labels is None:
            return ()
        return tuple(sorted(set(self.labels.tolist())))

    def row_index(self, ids: Iterable) -> np.ndarray:
        lookup = {p: i for i, p in enumerate(self.patient_ids)}
        return np.array([lookup[str(p)] for p in ids], dtype=int)

    def col_index(self, names: Iterable) -> np.ndarray:
        lookup = {f: j for j, f in enumerate(self.feature_names)}
        try:
            return np.array([lookup[str(f)] for f in names], dtype=int)
        except KeyError as exc:
            raise KeyError(f"unknown feature {exc.args[0]!r}") from None

    def take(self, rows=None, cols=None) -> "ObservationTable":
        """Positional sub-table; ``None`` keeps every row or column."""
        rows = np.arange(self.n_patients) if rows is None else np.asarray(rows, dtype=int)
        cols = np.arange(self.n_features) if cols is None else np.asarray(cols, dtype=int)
        return ObservationTable(
            patient_ids=[self.patient_ids[i] for i in rows],
            feature_names=[self.feature_names[j] for j in cols],
            values=self.values[np.ix_(rows, cols)],
            labels=None if self.labels is None else self.labels[rows],
        )

    def restrict(self, row_ids=None, col_ids=None) -> "ObservationTable":
        """Sub-table selected by patient ids and feature names."""
        rows = None if row_ids is None else self.row_index(row_ids)
        cols = None if col_ids is None else self.col_index(col_ids)
        return self.take(rows, cols)

    def with_values(self, values: np.ndarray) -> "ObservationTable":
        return ObservationTable(self.patient_ids, self.feature_names, values, self.labels)

    def equals(self, other: "ObservationTable") -> bool:
        if (self.patient_ids, self.feature_names) != (other.patient_ids, other.feature_names):
            return False
        if not np.array_equal(self.values, other.values, equal_nan=True):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or [str(v) for v in self.labels] == [str(v) for v in other.labels]


@dataclass(frozen=True, eq=False)
class TemporalObservationTable:
    """Patients x features x time points grid of optional reals."""

    patient_ids: tuple
    feature_names: tuple
    time_points: tuple
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        shape = (len(self.patient_ids), len(self.feature_names), len(self.time_points))
        if values.shape != shape:
            raise ValueError(f"values shape {values.shape} does not match {shape}")
        if len(self.time_points) < 1:
            raise ValueError("at least one time point is required")
        tp = list(self.time_points)
        if any(not a < b for a, b in zip(tp, tp[1:])):
            raise ValueError("time points must be strictly increasing")
        object.__setattr__(self, "patient_ids", tuple(str(p) for p in self.patient_ids))
        object.__setattr__(self, "feature_names", tuple(str(f) for f in self.feature_names))
        object.__setattr__(self, "time_points", tuple(tp))
        object.__setattr__(self, "values", _freeze(values))
        if self.labels is not None:
            object.__setattr__(self, "labels", _freeze(np.asarray(self.labels)))


@dataclass(frozen=True, eq=False)
class MissingnessMask:
    """Binary patients x features matrix; a set bit marks an absent value."""

    bits: np.ndarray
    row_ids: tuple = ()
    col_ids: tuple = ()
    row_rates: np.ndarray = field(init=False)
    col_rates: np.ndarray = field(init=False)

    def __post_init__(self):
        bits = np.asarray(self.bits).astype(bool)
        if bits.ndim != 2:
            raise ValueError("mask must be two-dimensional")
        n_p, n_f = bits.shape
        row_ids = tuple(self.row_ids) or tuple(str(i) for i in range(n_p))
        col_ids = tuple(self.col_ids) or tuple(str(j) for j in range(n_f))
        if len(row_ids) != n_p or len(col_ids) != n_f:
            raise ValueError("row/column ids do not match mask shape")
        object.__setattr__(self, "bits", _freeze(bits))
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "col_ids", col_ids)
        with np.errstate(invalid="ignore", divide="ignore"):
            object.__setattr__(self, "row_rates", _freeze(bits.sum(1) / max(n_f, 1)))
            object.__setattr__(self, "col_rates", _freeze(bits.sum(0) / max(n_p, 1)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def missing_count(self) -> int:
        return int(self.bits.sum())

    @property
    def overall_rate(self) -> float:
        size = self.bits.size
        return self.missing_count / size if size else 0.0

    def to_tsv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["patient_id", *self.col_ids])
            for pid, row in zip(self.row_ids, self.bits):
                w.writerow([pid, *row.astype(int).tolist()])


def load_mask_tsv(path) -> MissingnessMask:
    """Read a 0/1 mask in the layout written by ``MissingnessMask.to_tsv``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        raise TableParseError(f"{path}: empty mask file")
    header, ids, bits = rows[0], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise TableParseError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
        if any(c not in ("0", "1") for c in row[1:]):
            raise TableParseError(f"{path}: line {lineno}: mask cells must be 0 or 1")
        ids.append(row[0])
        bits.append([c == "1" for c in row[1:]])
    return MissingnessMask(np.array(bits, dtype=bool).reshape(len(ids), len(header) - 1),
                           ids, header[1:])


@dataclass(frozen=True)
class MissingnessReport:
    overall_rate: float
    per_feature: tuple
    per_patient: dict
    threshold: float
    recommendation: str

    def to_dict(self) -> dict:
        return {
            "overall_rate": self.overall_rate,
            "threshold": self.threshold,
            "recommendation": self.recommendation,
            "per_patient": self.per_patient,
            "per_feature": [{"feature": f, "rate": r} for f, r in self.per_feature],
        }


def load_table(
    path,
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
    label_column: str | None = None,
    id_column: str | None = None,
    sep: str = ",",
    comment: str | None = None,
) -> ObservationTable:
    """Read a header-first CSV into an ObservationTable.

    Cells equal to any of ``missing_tokens`` (after stripping whitespace)
    become absent. Every other feature cell must parse as a float. Without
    ``id_column`` patients are numbered by their 0-based data row. Leading
    lines starting with ``comment`` are skipped.
    """
    path = Path(path)
    tokens = {t.strip() for t in missing_tokens}
    with open(path, newline="", encoding="utf-8") as fh:
        skipped = 0
        lines = fh.readlines()
        while comment and skipped < len(lines) and lines[skipped].startswith(comment):
            skipped += 1
        reader = csv.reader(lines[skipped:], delimiter=sep)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TableParseError(f"{path}: empty file") from None
        for col in (label_column, id_column):
            if col is not None and col not in header:
                raise TableParseError(f"{path}: column {col!r} not in header")
        label_pos = header.index(label_column) if label_column else None
        id_pos = header.index(id_column) if id_column else None
        feat_pos = [k for k in range(len(header)) if k not in (label_pos, id_pos)]
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2 + skipped):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise TableParseError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}"
                )
            parsed = []
            for k in feat_pos:
                cell = row[k].strip()
                if cell in tokens:
                    parsed.append(np.nan)
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    raise TableParseError(
                        f"{path}: line {lineno}, column {header[k]!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
                if np.isnan(value):
                    raise TableParseError(
                        f"{path}: line {lineno}, column {header[k]!r}: NaN literal "
                        "is not a declared missing token"
                    )
                parsed.append(value)
            rows.append(parsed)
            ids.append(row[id_pos].strip() if id_pos is not None else str(len(ids)))
            if label_pos is not None:
                labels.append(row[label_pos].strip())
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_pos))
    try:
        return ObservationTable(
            patient_ids=ids,
            feature_names=[header[k] for k in feat_pos],
            values=values,
            labels=np.array(labels) if label_pos is not None else None,
        )
    except ValueError as exc:
        raise TableParseError(f"{path}: {exc}") from None


def write_table(
    table: ObservationTable,
    path,
    id_column: str = "patient_id",
    label_column: str = "label",
    missing_token: str = "",
    sep: str = ",",
) -> None:
    """Write ``table`` so that ``load_table`` with the same column names reads it back."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=sep, lineterminator="\n")
        header = [id_column, *table.feature_names]
        if table.labels is not None:
            header.append(label_column)
        w.writerow(header)
        for i, pid in enumerate(table.patient_ids):
            cells = [missing_token if np.isnan(v) else repr(float(v)) for v in table.values[i]]
            row = [pid, *cells]
            if table.labels is not None:
                row.append(table.labels[i])
            w.writerow(row)


def load_iris() -> ObservationTable:
    """The 150-record, 4-feature, 3-class iris data bundled with the package."""
    ref = resources.files("elmv.datasets").joinpath("iris.csv")
    with resources.as_file(ref) as path:
        return load_table(path, label_column="species", id_column="patient_id")


def build_mask(table: ObservationTable) -> MissingnessMask:
    return MissingnessMask(np.isnan(table.values), table.patient_ids, table.feature_names)


def collapse_temporal(table: TemporalObservationTable) -> MissingnessMask:
    """A (patient, feature) bit is set when any time point of its trajectory is absent."""
    bits = np.isnan(table.values).any(axis=2)
    return MissingnessMask(bits, table.patient_ids, table.feature_names)


def assess(mask: MissingnessMask, threshold: float = 0.40) -> MissingnessReport:
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    rate = mask.overall_rate
    rr = mask.row_rates
    per_patient = {
        "mean": float(rr.mean()) if rr.size else 0.0,
        "median": float(np.median(rr)) if rr.size else 0.0,
        "min": float(rr.min()) if rr.size else 0.0,
        "max": float(rr.max()) if rr.size else 0.0,
        "complete_patients": int((rr == 0).sum()),
    }
    return MissingnessReport(
        overall_rate=rate,
        per_feature=tuple((f, float(r)) for f, r in zip(mask.col_ids, mask.col_rates)),
        per_patient=per_patient,
        threshold=threshold,
        # strictly above the threshold; the boundary stays on the imputation side
        recommendation="elmv_recommended" if rate > threshold else "imputation_ok",
    )

