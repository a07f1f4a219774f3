import io
import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from metagraph_forecast.errors import ShapeError
from metagraph_forecast.evaluate import (aggregate, clamp, element_wise, empirical_top_set, evaluate, mse,
                                         per_unit_prediction_correlation, predicted_top_set, set_wise,
                                         top_target_frequencies)

POLICE, MILITARY, BUSINESS = 0, 1, 2


def test_mse_examples():
    truth = np.array([[0.2, 0.9], [0.0, 0.4]])
    assert mse(truth, truth) == 0.0
    assert mse(truth + 0.1, truth) == pytest.approx(0.01)
    pred = np.array([[0.0, 1.0], [0.5, 0.4]])
    assert mse(pred, truth) == pytest.approx((0.04 + 0.01 + 0.25 + 0.0) / 4)


def test_mse_scores_clamped_predictions():
    assert mse([[1.7, -0.3]], [[1.0, 0.0]]) == 0.0
    with pytest.raises(ShapeError):
        mse(np.zeros((2, 3)), np.zeros((3, 2)))


def test_empirical_top_set():
    assert empirical_top_set([1.0, 0.7, 0.7, 0.0]) == {0, 1}
    assert empirical_top_set([0.0, 0.7, 0.7, 1.0]) == {3, 1}
    assert empirical_top_set([0.0, 0.0, 0.0]) == frozenset()
    assert empirical_top_set([0.0, 0.4, 0.0]) == {1}


def test_predicted_top_set():
    assert predicted_top_set([0.05, 0.05, 0.05], threshold=0.1) == frozenset()
    assert predicted_top_set([0.9, 0.08, 0.5]) == {0, 2}
    assert predicted_top_set([0.11, 0.02, 0.01]) == {0, 1}
    assert predicted_top_set([0.1, 0.0, 0.0]) == {0, 1}
    # negative outputs clamp to zero before ranking
    assert predicted_top_set([-5.0, 0.3, -1.0, 0.0]) == {1, 0}


def test_element_wise_cases():
    assert element_wise({POLICE, MILITARY}, {POLICE, BUSINESS}) == 1
    assert element_wise({POLICE, MILITARY}, {BUSINESS, 3}) == 0
    assert element_wise(set(), {POLICE}) == 0
    assert element_wise(set(), set()) == 1
    assert element_wise({POLICE}, set()) == 0


def test_set_wise_cases():
    assert set_wise({POLICE, MILITARY}, {POLICE, BUSINESS}) == 0.5
    assert set_wise({POLICE, MILITARY}, {MILITARY, POLICE}) == 1.0
    assert set_wise({POLICE}, {POLICE, BUSINESS}) == 1.0
    assert set_wise(set(), {POLICE}) == 0.0
    assert set_wise(set(), set()) == 1.0


def test_aggregate():
    assert aggregate([1, 1, 1]) == 1.0
    assert aggregate([1, 0, 1, 1]) == 0.75
    assert aggregate([1, 0.5, 0]) == 0.5
    with pytest.raises(ValueError):
        aggregate([])


@given(st.data())
def test_set_accuracy_never_exceeds_element_accuracy(data):
    n = data.draw(st.integers(2, 8))
    vec = arrays(np.float64, (n,), elements=st.floats(-0.5, 1.5))
    pred = clamp(data.draw(vec))
    truth = np.clip(data.draw(vec), 0, 1)
    actual, predicted = empirical_top_set(truth), predicted_top_set(pred)
    assert set_wise(actual, predicted) <= element_wise(actual, predicted)
    if not actual:
        assert set_wise(actual, predicted) == element_wise(actual, predicted)


distinct_rows = st.lists(st.integers(0, 100), min_size=2, max_size=8, unique=True).map(
    lambda v: np.array(v) / 100)


@given(distinct_rows, st.sampled_from([np.sqrt, lambda v: v ** 2, lambda v: 0.5 * v + 0.05]))
def test_invariant_under_monotone_transforms(p, f):
    q = f(p)
    assume((p < 0.1).all() == (q < 0.1).all())
    assert predicted_top_set(p) == predicted_top_set(q)


unit_grid = arrays(np.float64, (3, 4), elements=st.floats(0, 1))


@given(unit_grid, unit_grid)
def test_clamping_in_range_predictions_is_identity(pred, truth):
    a, b = evaluate(pred, truth), evaluate(clamp(pred), truth)
    assert (a.set_accuracy, a.element_accuracy, a.mse) == (b.set_accuracy, b.element_accuracy, b.mse)


def test_correlation_examples():
    truth = np.array([[0.1, 0.5, 0.9], [1.0, 0.0, 0.3]])
    c = per_unit_prediction_correlation(truth, truth)
    np.testing.assert_allclose(c.per_unit, [1.0, 1.0])
    assert c.mean == pytest.approx(1.0) and c.sd == pytest.approx(0.0)
    anti = per_unit_prediction_correlation([[0.9, 0.5, 0.1]], [[0.1, 0.5, 0.9]])
    assert anti.per_unit[0] == pytest.approx(-1.0)


def test_correlation_flags_constant_rows():
    c = per_unit_prediction_correlation([[0.2, 0.2, 0.2], [0.1, 0.5, 0.9]],
                                        [[0.0, 1.0, 0.5], [0.1, 0.5, 0.9]])
    assert c.flagged.tolist() == [True, False]
    assert c.per_unit[0] == 0.0
    assert c.mean == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        per_unit_prediction_correlation([[0.1]], [[0.2]])


def test_perfect_predictor_frequencies_match():
    truth = np.random.default_rng(0).random((20, 5))
    report = evaluate(truth, truth, target_names=list("abcde"))
    assert all(e == p for e, p in report.frequencies.values())
    assert report.set_accuracy == report.element_accuracy == 1.0


def test_baseline_on_alternating_pairs_by_hand():
    a = [0.9, 0.6, 0.0, 0.0]
    b = [0.0, 0.0, 1.0, 0.4]
    series = np.array([a, b] * 5 + [a, a, a])  # alternation, then a constant tail
    pred, truth = series[:-1], series[1:]  # width-1 persistence
    report = evaluate(pred, truth, target_names=["p", "m", "b", "c"])
    # 10 alternating transitions score 0; the last 2 repeat and score 1
    assert len(report.units) == 12
    assert [r.set_accuracy for r in report.units] == [0.0] * 10 + [1.0] * 2
    assert report.set_accuracy == report.element_accuracy == pytest.approx(1 / 6)
    # truth rows 1..12 hold b five times; predicted rows 0..11 likewise
    assert report.frequencies == {"p": (7, 7), "m": (7, 7), "b": (5, 5), "c": (5, 5)}
    assert top_target_frequencies([], ["p"]) == {"p": (0, 0)}


def test_no_attack_units_follow_override():
    truth = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.5, 1.0, 0.0]])
    pred = np.array([[0.05, 0.0, 0.09], [0.3, 0.0, 0.0], [0.0, 0.6, 0.7]])
    r = evaluate(pred, truth)
    assert [u.element_accuracy for u in r.units] == [1, 0, 1]
    assert [u.set_accuracy for u in r.units] == [1.0, 0.0, 0.5]
    assert [u.no_attack for u in r.units] == [True, True, False]
    assert r.set_accuracy == pytest.approx(0.5) and r.element_accuracy == pytest.approx(2 / 3)


def test_report_serialization():
    truth = np.array([[0.0, 1.0, 0.3], [0.2, 0.0, 0.9]])
    pred = np.array([[0.1, 0.8, 0.2], [0.3, 0.3, 0.3]])
    r = evaluate(pred, truth, target_names=["x", "y", "z"], unit_index=[10, 11])
    d = json.loads(r.to_json())
    assert d["set_accuracy"] == r.set_accuracy and d["threshold"] == 0.1
    units = io.StringIO()
    r.write_units_csv(units)
    lines = units.getvalue().splitlines()
    assert len(lines) == 3 and lines[1].startswith("10,")
    freq = io.StringIO()
    r.write_frequencies_csv(freq)
    assert len(freq.getvalue().splitlines()) == 4
