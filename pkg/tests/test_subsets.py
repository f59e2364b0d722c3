import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elmv.data import MissingnessMask
from elmv.subsets import (
    DROP_COL,
    DROP_ROW,
    NoQualifiedSubsetsError,
    QualifiedSubsetCollection,
    SubsetDescriptor,
    brute_force_min,
    dedup_shapes,
    default_min_shape,
    filter_qualified,
    generate_table,
    load_collection,
    order_mask,
)

masks = arrays(np.bool_, st.tuples(st.integers(1, 9), st.integers(1, 9)))


def enumerate_min(bits, x, y):
    """Plain exhaustive search over every row and column subset."""
    best = None
    for rows in itertools.combinations(range(bits.shape[0]), x):
        for cols in itertools.combinations(range(bits.shape[1]), y):
            c = int(bits[np.ix_(rows, cols)].sum())
            best = c if best is None else min(best, c)
    return best


# order_mask

def test_order_identity_on_equal_rates():
    rows, cols = order_mask(MissingnessMask(np.eye(4, dtype=bool)))
    assert rows.tolist() == [0, 1, 2, 3]
    assert cols.tolist() == [0, 1, 2, 3]


def test_order_column_rates():
    bits = np.zeros((4, 3), dtype=bool)
    bits[:2, 0] = True   # 0.5
    bits[0, 2] = True    # 0.25
    _, cols = order_mask(MissingnessMask(bits))
    assert (cols + 1).tolist() == [2, 3, 1]


@given(masks)
def test_order_is_monotone_and_stable(bits):
    rows, cols = order_mask(MissingnessMask(bits))
    r = bits.sum(1)
    expected_rows = sorted(range(len(r)), key=lambda i: (r[i], i))
    assert rows.tolist() == expected_rows
    c = bits.sum(0)
    assert cols.tolist() == sorted(range(len(c)), key=lambda j: (c[j], j))


# generate_table

def test_all_zero_mask_keeps_leading_rows_and_cols():
    t = generate_table(MissingnessMask(np.zeros((5, 4), dtype=bool)), 1, 1)
    for i, j in t.defined_cells():
        assert t.count(i, j) == 0
        rows, cols = t.members(i, j)
        assert sorted(rows.tolist()) == list(range(i))
        assert sorted(cols.tolist()) == list(range(j))


def test_fully_missing_column_dropped_first():
    bits = np.zeros((4, 4), dtype=bool)
    bits[:, 2] = True
    t = generate_table(MissingnessMask(bits), 1, 1)
    assert t.count(4, 4) == 4
    assert t.count(4, 3) == 0
    assert t.provenance(4, 3) == "drop_column"
    assert t.removed[4, 3] == 2


def test_tie_drops_a_row():
    # (1,2) and (2,1) both hold 1 absence, so (1,1) comes from the row branch
    bits = np.array([[0, 1], [1, 0]], dtype=bool)
    t = generate_table(MissingnessMask(bits), 1, 1)
    assert t.count(1, 2) == t.count(2, 1) == 1
    assert t.source[1, 1] == DROP_ROW


def test_min_shape_bounds():
    m = MissingnessMask(np.zeros((4, 4), dtype=bool))
    with pytest.raises(ValueError):
        generate_table(m, 5, 1)
    with pytest.raises(ValueError):
        generate_table(m, 1, 0)
    t = generate_table(m, 2, 3)
    assert t.count(1, 4) is None and t.count(2, 2) is None and t.count(2, 3) == 0


def test_default_min_shape():
    assert default_min_shape(202, 78) == (21, 8)
    assert default_min_shape(10, 3) == (5, 2)
    assert default_min_shape(3, 1) == (3, 1)


@given(masks)
def test_table_invariants(bits):
    mask = MissingnessMask(bits)
    t = generate_table(mask, 1, 1)
    n_p, n_f = bits.shape
    assert t.count(n_p, n_f) == bits.sum()
    for i, j in t.defined_cells():
        c = t.count(i, j)
        for ni, nj in ((i + 1, j), (i, j + 1)):
            if t.count(ni, nj) is not None:
                assert c <= t.count(ni, nj)
        d = t.descriptor(i, j)
        rows = [mask.row_ids.index(r) for r in d.row_ids]
        cols = [mask.col_ids.index(c) for c in d.col_ids]
        assert (d.n_rows, d.n_cols) == (i, j)
        assert d.missing_count == bits[np.ix_(rows, cols)].sum()
        assert d.missing_rate == pytest.approx(d.missing_count / (i * j))


@given(masks)
def test_removed_line_is_worst_of_parent(bits):
    """Local maximality: each step drops a line with the most absences."""
    mask = MissingnessMask(bits)
    t = generate_table(mask, 1, 1)
    b = bits.astype(int)
    for i, j in t.defined_cells():
        src = t.source[i, j]
        if src == DROP_COL:
            rows, cols = t.members(i, j + 1)
            per = b[np.ix_(rows, cols)].sum(0)
            k = cols.tolist().index(t.removed[i, j])
            assert per[k] == per.max()
        elif src == DROP_ROW:
            rows, cols = t.members(i + 1, j)
            per = b[np.ix_(rows, cols)].sum(1)
            k = rows.tolist().index(t.removed[i, j])
            assert per[k] == per.max()


def test_determinism():
    bits = np.random.default_rng(3).random((12, 9)) < 0.3
    a = generate_table(MissingnessMask(bits))
    b = generate_table(MissingnessMask(bits.copy()))
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.source, b.source)
    assert np.array_equal(a.removed, b.removed)


@pytest.mark.parametrize("seed", range(20))
def test_greedy_never_below_oracle(seed):
    rng = np.random.default_rng(seed)
    bits = rng.random((5, 5)) < rng.choice([0.1, 0.3, 0.5])
    mask = MissingnessMask(bits)
    t = generate_table(mask, 1, 1)
    for i, j in t.defined_cells():
        assert t.count(i, j) >= brute_force_min(mask, i, j)


# brute_force_min

def test_brute_force_trivial():
    assert brute_force_min(MissingnessMask(np.zeros((3, 3), bool)), 2, 2) == 0
    one = MissingnessMask(np.array([[1, 0], [0, 0]], bool))
    assert brute_force_min(one, 1, 1) == 0
    assert brute_force_min(one, 2, 2) == 1


def test_brute_force_4x4_frozen():
    bits = np.array([[1, 0, 1, 1],
                     [0, 1, 1, 0],
                     [1, 1, 0, 1],
                     [0, 0, 1, 1]], dtype=bool)
    mask = MissingnessMask(bits)
    # frozen from the plain exhaustive search above
    assert enumerate_min(bits, 2, 3) == 2
    assert brute_force_min(mask, 2, 3) == 2
    assert brute_force_min(mask, 2, 3, order="cols") == 2


@given(arrays(np.bool_, st.tuples(st.integers(1, 5), st.integers(1, 5))), st.data())
def test_brute_force_routes_agree(bits, data):
    x = data.draw(st.integers(1, bits.shape[0]))
    y = data.draw(st.integers(1, bits.shape[1]))
    mask = MissingnessMask(bits)
    expected = enumerate_min(bits, x, y)
    assert brute_force_min(mask, x, y) == expected
    assert brute_force_min(mask, x, y, order="cols") == expected


def test_brute_force_guard():
    with pytest.raises(ValueError, match="refused"):
        brute_force_min(MissingnessMask(np.zeros((15, 3), bool)), 2, 2)
    with pytest.raises(ValueError):
        brute_force_min(MissingnessMask(np.zeros((3, 3), bool)), 4, 1)


# filter_qualified

def test_cap_zero_without_clean_subset():
    # every row and every column holds an absence, and min shape is the full width
    bits = np.eye(5, dtype=bool)
    t = generate_table(MissingnessMask(bits), 5, 2)
    with pytest.raises(NoQualifiedSubsetsError, match="no qualified subsets"):
        filter_qualified(t, cap=0.0)


def test_dedup_keeps_widest_for_same_rows():
    shapes = [(50, 10, 60), (50, 14, 91)]   # rates 0.12 and 0.13, same bin
    assert dedup_shapes(shapes, 0.05) == [(50, 14, 91)]


def test_dedup_keeps_tallest_for_same_cols():
    shapes = [(40, 10, 40), (30, 10, 30)]   # both rate 0.10
    assert dedup_shapes(shapes, 0.05) == [(40, 10, 40)]


def test_dedup_separate_bins_both_kept():
    shapes = [(50, 10, 10), (50, 14, 91)]   # 0.02 and 0.13
    assert sorted(dedup_shapes(shapes, 0.05)) == sorted(shapes)


@given(masks, st.sampled_from([0.0, 0.1, 0.2, 0.5, 1.0]))
def test_collection_invariants(bits, cap):
    t = generate_table(MissingnessMask(bits), 1, 1)
    try:
        coll = filter_qualified(t, cap)
    except NoQualifiedSubsetsError:
        assert all(t.count(i, j) > cap * i * j for i, j in t.defined_cells())
        return
    shapes = [(s.n_rows, s.n_cols) for s in coll]
    assert len(shapes) == len(set(shapes))
    assert all(s.missing_rate <= cap + 1e-12 for s in coll)


def test_large_mask_scatter_is_monotone():
    rng = np.random.default_rng(0)
    col_rates = np.sort(rng.beta(0.6, 2.0, size=78))
    bits = rng.random((202, 78)) < col_rates
    t = generate_table(MissingnessMask(bits))
    coll = filter_qualified(t, 0.20)
    assert len(coll) > 0
    for s in coll:
        rows = [int(r) for r in s.row_ids]
        cols = [int(c) for c in s.col_ids]
        assert bits[np.ix_(rows, cols)].sum() == s.missing_count
    # within a rate bin, more features never comes with more patients
    by_bin = {}
    for s in coll:
        by_bin.setdefault(int(s.missing_rate / 0.05 + 1e-9), []).append((s.n_cols, s.n_rows))
    for pts in by_bin.values():
        pts.sort()
        assert all(a[1] >= b[1] for a, b in zip(pts, pts[1:]))


def test_collection_round_trip(tmp_path):
    bits = np.random.default_rng(1).random((10, 6)) < 0.2
    coll = filter_qualified(generate_table(MissingnessMask(bits), 2, 2), 0.3)
    coll.save(tmp_path / "s.json", config_hash="abc")
    back = load_collection(tmp_path / "s.json")
    assert back == coll
    assert json.loads((tmp_path / "s.json").read_text())["config_hash"] == "abc"


def test_descriptor_dict_round_trip():
    d = SubsetDescriptor(("a", "b"), ("x",), 1)
    assert SubsetDescriptor.from_dict(d.to_dict()) == d
    assert d.to_dict()["missing_rate"] == 0.5
    assert QualifiedSubsetCollection((d,), 0.5).to_dict()["subsets"][0]["row_ids"] == ["a", "b"]
