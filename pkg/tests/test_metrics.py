import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from funcnet.exceptions import DataError
from funcnet.metrics import (REPORT_FIELDS, aggregate_med, corr_mean, evaluate_recordings, mae_2d, med, pearson,
                             precision, summarize_repeats)

RNG_TRIALS = 200


def trials(seed):
    rng = np.random.default_rng(seed)
    return [oracles.random_trial(rng) for _ in range(RNG_TRIALS)]


def test_med_examples():
    assert med([[1.0, 2.0]], [[1.0, 2.0]]) == 0.0
    assert med([[0.0, 0.0]], [[3.0, 4.0]]) == 5.0
    with pytest.raises(DataError):
        med(np.zeros((3, 2)), np.zeros((4, 2)))


def test_aggregate_med_examples():
    assert aggregate_med([(7, 2.5)]) == 2.5
    assert aggregate_med([(1, 0.0), (3, 4.0)]) == 3.0
    with pytest.raises(DataError):
        aggregate_med([])


def test_aggregate_equals_concatenation():
    rng = np.random.default_rng(0)
    pairs = [oracles.random_trial(rng) for _ in range(5)]
    per = [(len(t), med(t, p)) for t, p in pairs]
    concat = med(np.concatenate([t for t, _ in pairs]), np.concatenate([p for _, p in pairs]))
    assert abs(aggregate_med(per) - concat) < 1e-12


def test_precision_examples():
    const = np.tile([3.0, 4.0], (5, 1))
    assert precision(const, np.tile([1.0, 1.0], (5, 1))) == 0.0
    with pytest.raises(DataError):
        precision([[0.0, 0.0]], [[1.0, 1.0]])
    truth = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    pred = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    assert precision(truth, pred) == pytest.approx(2 / 3)
    assert precision(truth, pred, "n-1") == pytest.approx(1.0)


def test_pearson_examples():
    t = np.random.default_rng(1).normal(size=(20, 2))
    assert pearson(t, t, "x") == pytest.approx(1.0) and pearson(t, t, "y") == pytest.approx(1.0)
    assert pearson(t, np.tile([5.0, 5.0], (20, 1)), "x") == 0.0
    shifted = 3.0 * t + np.array([10.0, -4.0])
    for axis in "xy":
        assert abs(pearson(t, shifted, axis) - pearson(t, t + 0.0, axis)) < 1e-12
    assert corr_mean(t, t) == pytest.approx(1.0)


def test_mae_examples():
    assert mae_2d([[1.0, 1.0]], [[1.0, 1.0]]) == 0.0
    assert mae_2d([[0.0, 0.0]], [[2.0, 4.0]]) == 3.0
    assert mae_2d([[0.0, 0.0]], [[2.0, 4.0]], unit_factor=0.5) == 1.5


@pytest.mark.parametrize("seed", range(5))
def test_against_loop_oracles(seed):
    for truth, pred in trials(seed):
        tl, pl = truth.tolist(), pred.tolist()
        assert abs(med(truth, pred) - oracles.med(tl, pl)) < 1e-12 * max(1.0, oracles.med(tl, pl))
        for norm in ("n", "n-1"):
            ref = oracles.precision(tl, pl, norm)
            assert abs(precision(truth, pred, norm) - ref) < 1e-12 * max(1.0, ref)
        for axis, col in (("x", 0), ("y", 1)):
            assert abs(pearson(truth, pred, axis) - oracles.pearson(truth[:, col].tolist(),
                                                                    pred[:, col].tolist())) < 1e-12
        ref = oracles.mae_2d(tl, pl, 0.5)
        assert abs(mae_2d(truth, pred, 0.5) - ref) < 1e-12 * max(1.0, ref)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 15), st.just(2)), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 2, elements=st.floats(-1e3, 1e3)))
def test_metric_invariants(truth, offset):
    pred = truth[::-1].copy()
    assert med(truth, pred) >= 0
    assert med(truth, truth) == 0
    assert abs(med(truth + offset, pred + offset) - med(truth, pred)) < 1e-9
    assert abs(precision(truth, pred + offset) - precision(truth, pred)) < 1e-9
    for axis in "xy":
        assert -1.0 <= pearson(truth, pred, axis) <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=12), st.floats(0, 500))
def test_aggregate_of_equal_meds(counts, value):
    assert aggregate_med([(n, value) for n in counts]) == pytest.approx(value, rel=1e-12, abs=1e-12)


def test_report_fields_and_weighting(tmp_path):
    rng = np.random.default_rng(2)
    recs = [("a", *oracles.random_trial(rng)), ("b", *oracles.random_trial(rng))]
    report = evaluate_recordings(recs)
    assert tuple(report.to_dict()) == REPORT_FIELDS
    n = [len(t) for _, t, _ in recs]
    wprec = (n[0] * precision(recs[0][1], recs[0][2]) + n[1] * precision(recs[1][1], recs[1][2])) / sum(n)
    assert report.precision == pytest.approx(wprec, abs=1e-12)
    assert report.corr_mean == pytest.approx(0.5 * (report.corr_x + report.corr_y))
    concat = med(np.concatenate([r[1] for r in recs]), np.concatenate([r[2] for r in recs]))
    assert abs(report.med - concat) < 1e-12
    doc = json.loads(report.to_json(tmp_path / "r.json", task="x"))
    assert doc["task"] == "x" and json.loads((tmp_path / "r.json").read_text())["med"] == report.med


def test_perfect_prediction_report():
    t = np.random.default_rng(3).normal(size=(30, 2))
    r = evaluate_recordings([("r", t, t.copy())])
    assert r.med == 0 and r.corr_x == pytest.approx(1) and r.corr_y == pytest.approx(1)


def test_summarize_repeats():
    rng = np.random.default_rng(4)
    reports = [evaluate_recordings([("r", *oracles.random_trial(rng))]) for _ in range(3)]
    s = summarize_repeats(reports)
    meds = [r.med for r in reports]
    assert s["med"]["mean"] == pytest.approx(np.mean(meds))
    assert s["med"]["std"] == pytest.approx(np.std(meds, ddof=1))


def test_unit_factor_scales_distances_only():
    rng = np.random.default_rng(3)
    truth, pred = rng.normal(size=(30, 2)), rng.normal(size=(30, 2))
    px = evaluate_recordings([("a", truth, pred)])
    mm = evaluate_recordings([("a", truth, pred)], unit_factor=0.5)
    for name in ("med", "precision", "mae"):
        assert getattr(mm, name) == pytest.approx(0.5 * getattr(px, name), rel=1e-12)
    assert mm.corr_x == px.corr_x and mm.corr_y == px.corr_y
