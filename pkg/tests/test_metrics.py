import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elmv.metrics import EvalMetrics, classification_metrics, per_class_scores

labels = st.lists(st.sampled_from("abc"), min_size=1, max_size=40)


def test_perfect():
    m = classification_metrics(["a", "b", "a"], ["a", "b", "a"])
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1, 1, 1, 1)


def test_hand_computed():
    y = ["a", "a", "a", "b", "b", "c"]
    p = ["a", "a", "b", "b", "c", "c"]
    m = classification_metrics(y, p)
    assert m.accuracy == pytest.approx(4 / 6)
    # per class (p, r): a (1, 2/3), b (1/2, 1/2), c (1/2, 1)
    assert m.precision == pytest.approx((1 + 0.5 + 0.5) / 3)
    assert m.recall == pytest.approx((2 / 3 + 0.5 + 1) / 3)
    f = [2 * (2 / 3) / (1 + 2 / 3), 0.5, 2 * 0.5 / 1.5]
    assert m.f1 == pytest.approx(np.mean(f))


def test_single_class_collapses_to_accuracy():
    m = classification_metrics(["a"] * 4, ["a"] * 4)
    assert m.precision == m.recall == m.f1 == m.accuracy == 1.0


def test_unpredicted_class_gets_zero_precision():
    s = per_class_scores(["a", "b"], ["a", "a"])
    assert s["b"] == (0.0, 0.0, 0.0)
    assert s["a"] == (0.5, 1.0, pytest.approx(2 / 3))


def test_empty_rejected():
    with pytest.raises(ValueError):
        classification_metrics([], [])


def test_dict_round_trip():
    m = EvalMetrics(0.5, 0.4, 0.3, 0.2, (EvalMetrics(1, 1, 1, 1),))
    assert EvalMetrics.from_dict(m.to_dict()) == m


@given(labels, st.data())
def test_metric_coherence(y, data):
    p = data.draw(st.lists(st.sampled_from("abc"), min_size=len(y), max_size=len(y)))
    m = classification_metrics(y, p)
    assert m.accuracy == pytest.approx(sum(a == b for a, b in zip(y, p)) / len(y))
    scores = per_class_scores(y, p)
    for prec, rec, f1 in scores.values():
        expected = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        assert f1 == pytest.approx(expected)
    for v in (m.accuracy, m.precision, m.recall, m.f1):
        assert 0 <= v <= 1
