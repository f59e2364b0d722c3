"""Greedy dynamic-programming extraction of low-missingness maximal submatrices.

The table is filled from the full matrix at (N_p, N_f) towards smaller
shapes. Cell (i, j) takes whichever neighbour, (i, j+1) or (i+1, j), has the
smaller missing count, orders it by row/column missingness and drops its
worst column or row. Only backpointers are stored; row and column id lists
are rebuilt on request.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .data import MissingnessMask

ROOT, DROP_COL, DROP_ROW = 0, 1, 2
BRUTE_FORCE_LIMIT = 14


class NoQualifiedSubsetsError(ValueError):
    pass


@dataclass(frozen=True)
class SubsetDescriptor:
    row_ids: tuple
    col_ids: tuple
    missing_count: int

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    @property
    def n_cols(self) -> int:
        return len(self.col_ids)

    @property
    def missing_rate(self) -> float:
        size = self.n_rows * self.n_cols
        return self.missing_count / size if size else 0.0

    def to_dict(self) -> dict:
        return {
            "row_ids": list(self.row_ids),
            "col_ids": list(self.col_ids),
            "missing_count": self.missing_count,
            "missing_rate": self.missing_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubsetDescriptor":
        return cls(tuple(d["row_ids"]), tuple(d["col_ids"]), int(d["missing_count"]))


def _stable_order(counts: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Ascending by missing count, ties by original index."""
    return ids[np.lexsort((ids, counts))]


def order_mask(mask: MissingnessMask) -> tuple[np.ndarray, np.ndarray]:
    """Row and column permutations sorting the mask by ascending missingness."""
    bits = mask.bits
    rows = _stable_order(bits.sum(1), np.arange(bits.shape[0]))
    cols = _stable_order(bits.sum(0), np.arange(bits.shape[1]))
    return rows, cols


def default_min_shape(n_rows: int, n_cols: int) -> tuple[int, int]:
    return (
        min(n_rows, max(5, math.ceil(0.1 * n_rows))),
        min(n_cols, max(2, math.ceil(0.1 * n_cols))),
    )


class MissingCountTable:
    """Missing counts of the generated subset for every (rows, cols) shape.

    ``counts[i, j]`` is indexed by shape (1-based sizes); -1 marks shapes
    below the minimum that were never generated.
    """

    def __init__(self, mask, counts, source, removed, min_rows, min_cols):
        self.mask = mask
        self.counts = counts
        self.source = source
        self.removed = removed
        self.min_rows = min_rows
        self.min_cols = min_cols

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def count(self, i: int, j: int) -> int | None:
        if not (1 <= i <= self.shape[0] and 1 <= j <= self.shape[1]):
            return None
        c = int(self.counts[i, j])
        return None if c < 0 else c

    def defined_cells(self) -> Iterator[tuple[int, int]]:
        for i, j in zip(*np.nonzero(self.counts >= 0)):
            yield int(i), int(j)

    def members(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Original row and column indices retained at shape (i, j), in Order() order."""
        if self.count(i, j) is None:
            raise KeyError(f"shape ({i}, {j}) was not generated")
        n_p, n_f = self.shape
        keep_r = np.ones(n_p, bool)
        keep_c = np.ones(n_f, bool)
        while (i, j) != (n_p, n_f):
            k = self.removed[i, j]
            if self.source[i, j] == DROP_COL:
                keep_c[k] = False
                j += 1
            else:
                keep_r[k] = False
                i += 1
        rows, cols = np.nonzero(keep_r)[0], np.nonzero(keep_c)[0]
        sub = self.mask.bits[np.ix_(rows, cols)]
        return _stable_order(sub.sum(1), rows), _stable_order(sub.sum(0), cols)

    def descriptor(self, i: int, j: int) -> SubsetDescriptor:
        rows, cols = self.members(i, j)
        return SubsetDescriptor(
            row_ids=tuple(self.mask.row_ids[r] for r in rows),
            col_ids=tuple(self.mask.col_ids[c] for c in cols),
            missing_count=int(self.counts[i, j]),
        )

    def provenance(self, i: int, j: int) -> str:
        return {ROOT: "root", DROP_COL: "drop_column", DROP_ROW: "drop_row"}[int(self.source[i, j])]


def generate_table(
    mask: MissingnessMask, min_rows: int | None = None, min_cols: int | None = None
) -> MissingCountTable:
    bits = mask.bits.astype(np.int64)
    n_p, n_f = bits.shape
    d_rows, d_cols = default_min_shape(n_p, n_f)
    min_rows = d_rows if min_rows is None else min_rows
    min_cols = d_cols if min_cols is None else min_cols
    if not (1 <= min_rows <= n_p and 1 <= min_cols <= n_f):
        raise ValueError(
            f"min shape ({min_rows}, {min_cols}) outside the {n_p}x{n_f} mask"
        )

    counts = np.full((n_p + 2, n_f + 2), -1, dtype=np.int64)
    source = np.zeros((n_p + 2, n_f + 2), dtype=np.int8)
    removed = np.full((n_p + 2, n_f + 2), -1, dtype=np.int64)
    counts[n_p, n_f] = bits.sum()

    # membership of the band i+1 (prev) and i (cur), keyed by column count j
    full = (np.ones(n_p, bool), np.ones(n_f, bool))
    prev: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for i in range(n_p, min_rows - 1, -1):
        cur: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for j in range(n_f, min_cols - 1, -1):
            if i == n_p and j == n_f:
                cur[j] = full
                continue
            c_col = counts[i, j + 1] if j < n_f else -1
            c_row = counts[i + 1, j] if i < n_p else -1
            if c_row < 0 or (c_col >= 0 and c_col < c_row):
                rows, cols = cur[j + 1]
                col_idx = np.nonzero(cols)[0]
                per_col = bits[np.nonzero(rows)[0]][:, col_idx].sum(0)
                # Order() then drop the last column: max count, ties to the larger index
                worst = col_idx[np.flatnonzero(per_col == per_col.max())[-1]]
                cols = cols.copy()
                cols[worst] = False
                counts[i, j] = c_col - per_col.max()
                source[i, j] = DROP_COL
                removed[i, j] = worst
            else:
                rows, cols = prev[j]
                row_idx = np.nonzero(rows)[0]
                per_row = bits[row_idx][:, np.nonzero(cols)[0]].sum(1)
                worst = row_idx[np.flatnonzero(per_row == per_row.max())[-1]]
                rows = rows.copy()
                rows[worst] = False
                counts[i, j] = c_row - per_row.max()
                source[i, j] = DROP_ROW
                removed[i, j] = worst
            cur[j] = (rows, cols)
        prev = cur
    return MissingCountTable(
        mask, counts[: n_p + 1, : n_f + 1], source, removed, min_rows, min_cols
    )


def brute_force_min(mask: MissingnessMask, x: int, y: int, order: str = "rows") -> int:
    """Exact minimum missing count over every x-row, y-column submatrix.

    For a fixed row set the best columns are simply the y columns with the
    fewest absences, so only one axis is enumerated. ``order="cols"``
    enumerates column sets instead, giving an independent second route.
    """
    bits = mask.bits.astype(np.int64)
    n_p, n_f = bits.shape
    if n_p > BRUTE_FORCE_LIMIT or n_f > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"brute force refused for a {n_p}x{n_f} mask (limit {BRUTE_FORCE_LIMIT})"
        )
    if not (1 <= x <= n_p and 1 <= y <= n_f):
        raise ValueError(f"shape ({x}, {y}) outside the {n_p}x{n_f} mask")
    if order == "cols":
        bits, x, y = bits.T, y, x
    elif order != "rows":
        raise ValueError(f"unknown enumeration order {order!r}")
    combos = np.array(list(itertools.combinations(range(bits.shape[0]), x)))
    per_col = bits[combos].sum(1)
    return int(np.sort(per_col, axis=1)[:, :y].sum(1).min())


@dataclass(frozen=True)
class QualifiedSubsetCollection:
    subsets: tuple
    cap: float
    rate_bin_width: float = 0.05

    def __len__(self) -> int:
        return len(self.subsets)

    def __iter__(self):
        return iter(self.subsets)

    def to_dict(self) -> dict:
        return {
            "cap": self.cap,
            "rate_bin_width": self.rate_bin_width,
            "subsets": [s.to_dict() for s in self.subsets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QualifiedSubsetCollection":
        return cls(
            tuple(SubsetDescriptor.from_dict(s) for s in d["subsets"]),
            float(d["cap"]),
            float(d.get("rate_bin_width", 0.05)),
        )

    def save(self, path, **extra) -> None:
        with open(path, "w") as fh:
            json.dump({**extra, **self.to_dict()}, fh, indent=1)


def rate_bin(rate: float, width: float) -> int:
    return int(math.floor(rate / width + 1e-9))


def dedup_shapes(shapes, rate_bin_width: float = 0.05) -> list:
    """Drop near-duplicate (n_rows, n_cols, missing_count) shapes.

    Within one missing-rate bin, a shape survives only if it has the most
    columns among shapes with its row count, and then the most rows among
    the remaining shapes with its column count.
    """
    bins: dict[int, list] = {}
    for shape in shapes:
        r, c, m = shape[:3]
        bins.setdefault(rate_bin(m / (r * c), rate_bin_width), []).append(shape)
    kept = []
    for b in sorted(bins):
        best_cols: dict[int, tuple] = {}
        for s in bins[b]:
            if s[0] not in best_cols or s[1] > best_cols[s[0]][1]:
                best_cols[s[0]] = s
        best_rows: dict[int, tuple] = {}
        for s in best_cols.values():
            if s[1] not in best_rows or s[0] > best_rows[s[1]][0]:
                best_rows[s[1]] = s
        kept.extend(sorted(best_rows.values(), key=lambda s: (-s[0], -s[1])))
    seen, out = set(), []
    for s in kept:
        if s[:2] not in seen:
            seen.add(s[:2])
            out.append(s)
    return out


def filter_qualified(
    table: MissingCountTable, cap: float = 0.20, rate_bin_width: float = 0.05
) -> QualifiedSubsetCollection:
    if not 0 <= cap <= 1:
        raise ValueError("cap must lie in [0, 1]")
    shapes = []
    for i, j in table.defined_cells():
        m = int(table.counts[i, j])
        if m <= cap * i * j + 1e-9:
            shapes.append((i, j, m))
    kept = dedup_shapes(shapes, rate_bin_width)
    if not kept:
        raise NoQualifiedSubsetsError(
            f"no qualified subsets with missing rate <= {cap}; "
            "try a larger cap or smaller minimum shape"
        )
    return QualifiedSubsetCollection(
        tuple(table.descriptor(i, j) for i, j, _ in kept), cap, rate_bin_width
    )


def load_collection(path) -> QualifiedSubsetCollection:
    with open(path) as fh:
        return QualifiedSubsetCollection.from_dict(json.load(fh))
