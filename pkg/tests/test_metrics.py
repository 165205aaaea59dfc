import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_confusion
from reference_counts import COUNTS, INCONSISTENT_CELLS, REPORTED
from taptest.metrics import METRIC_NAMES, ConfusionMatrix, compute_metrics, confusion, fmt
from taptest.segment import HEALTHY, UNHEALTHY

counts = st.integers(0, 500)


def test_perfect_split():
    r = compute_metrics(ConfusionMatrix(38, 0, 0, 39))
    assert r.as_dict() == dict.fromkeys(METRIC_NAMES, 1.0)


def test_all_predicted_positive_on_negative_truth():
    cm = confusion([UNHEALTHY] * 5, [HEALTHY] * 5)
    assert cm == ConfusionMatrix(0, 5, 0, 0)
    r = compute_metrics(cm)
    assert r.precision == 0 and r.specificity == 0 and r.accuracy == 0
    assert r.recall is None and r.npv is None
    assert r.formatted()["recall"] == "n/a"


def test_six_item_hand_case():
    true = [HEALTHY, HEALTHY, HEALTHY, UNHEALTHY, UNHEALTHY, UNHEALTHY]
    pred = [HEALTHY, HEALTHY, UNHEALTHY, HEALTHY, UNHEALTHY, UNHEALTHY]
    cm = confusion(true, pred)
    assert cm == ConfusionMatrix(2, 1, 1, 2)
    r = compute_metrics(cm)
    assert r.precision == pytest.approx(2 / 3) and r.recall == pytest.approx(2 / 3)
    assert r.accuracy == pytest.approx(4 / 6)


def test_three_degree_counts():
    r = compute_metrics(ConfusionMatrix(*COUNTS[("none", 3)]))
    got = [r.precision, r.npv, r.recall, r.specificity, r.accuracy]
    np.testing.assert_allclose(got, [0.948, 0.594, 0.702, 0.919, 0.772], atol=5e-4)


def test_five_degree_accuracy():
    assert compute_metrics(ConfusionMatrix(*COUNTS[("none", 5)])).accuracy == pytest.approx(0.725, abs=5e-4)


@pytest.mark.parametrize("cell", sorted(COUNTS))
def test_published_indexes_follow_from_counts(cell):
    r = compute_metrics(ConfusionMatrix(*COUNTS[cell])).as_dict()
    for name, want in zip(METRIC_NAMES, REPORTED[cell]):
        if (cell, name) in INCONSISTENT_CELLS:
            assert r[name] == 1.0 and want == 0.98
            continue
        assert abs(r[name] - want) <= 0.01, (cell, name, r[name], want)


def test_errors():
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        confusion([HEALTHY], [])
    with pytest.raises(ValueError):
        ConfusionMatrix(-1, 0, 0, 0)
    with pytest.raises(ValueError):
        compute_metrics(ConfusionMatrix(0, 0, 0, 0))


def test_fmt():
    assert fmt(0.9375) == "0.94"
    assert fmt(None) == "n/a"


@given(st.lists(st.tuples(st.sampled_from([HEALTHY, UNHEALTHY]), st.sampled_from([HEALTHY, UNHEALTHY])),
                min_size=1, max_size=50))
def test_confusion_matches_brute_force(pairs):
    t, p = zip(*pairs)
    cm = confusion(t, p)
    assert cm.__dict__ == brute_confusion(t, p, HEALTHY)
    assert cm.total == len(pairs)
    assert confusion(t, p, UNHEALTHY) == cm.swapped()


@given(counts, counts, counts, counts)
def test_swap_exchanges_indexes(tp, fp, fn, tn):
    if tp + fp + fn + tn == 0:
        return
    a = compute_metrics(ConfusionMatrix(tp, fp, fn, tn))
    b = compute_metrics(ConfusionMatrix(tp, fp, fn, tn).swapped())
    assert (a.precision, a.recall, a.accuracy) == (b.npv, b.specificity, b.accuracy)


@given(counts, counts, counts, counts, st.integers(1, 20))
def test_scaling_invariance_and_range(tp, fp, fn, tn, c):
    if tp + fp + fn + tn == 0:
        return
    a = compute_metrics(ConfusionMatrix(tp, fp, fn, tn)).as_dict()
    b = compute_metrics(ConfusionMatrix(c * tp, c * fp, c * fn, c * tn)).as_dict()
    for k in METRIC_NAMES:
        if a[k] is None:
            assert b[k] is None
        else:
            assert 0 <= a[k] <= 1
            assert b[k] == pytest.approx(a[k], rel=1e-12)
