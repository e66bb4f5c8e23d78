import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from actirhythm.calibrate import (
    DegenerateCurveWarning,
    RocCurve,
    RocPoint,
    auc_trapezoid,
    calibrate_series,
    confusion_at_threshold,
    pearson_correlation,
    report_json,
    roc_csv,
    roc_sweep,
    select_threshold,
)
from actirhythm.errors import DegenerateError, ParameterError, SelectionError
from actirhythm.ingest import labels_to_track
from actirhythm.synthkit import ActivitySchedule, NoiseModel, generate_trace, schedule_label_events


def brute_auc(expected, scores):
    """Probability a positive outranks a negative, ties counted half."""
    pos = scores[expected == 1]
    neg = scores[expected == 0]
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return (gt + 0.5 * eq) / (len(pos) * len(neg))


def test_confusion_all_detected():
    c = confusion_at_threshold([(1, 0.5)] * 4, 0.1)
    assert (c.tp, c.fp, c.tn, c.fn) == (4, 0, 0, 0)


def test_confusion_infinite_threshold():
    c = confusion_at_threshold([(1, 0.5), (0, 0.2), (1, 9.0)], math.inf)
    assert c.tp == 0 and c.fp == 0
    assert c.total == 3


def test_confusion_hand_enumeration():
    # (1,.03)→tp  (0,.01)→tn  (0,.04)→fp  (1,.02)→fn
    c = confusion_at_threshold([(1, 0.03), (0, 0.01), (0, 0.04), (1, 0.02)], 0.025)
    assert (c.tp, c.fn, c.tn, c.fp) == (1, 1, 1, 1)
    assert c.sensitivity == 0.5 and c.specificity == 0.5


def test_confusion_errors():
    with pytest.raises(ParameterError):
        confusion_at_threshold([], 0.1)
    with pytest.raises(ParameterError):
        confusion_at_threshold([(2, 0.1)], 0.1)


@pytest.mark.parametrize("points, expected", [
    ([(0, 0), (1, 1)], 0.5),
    ([(0, 0), (0, 1), (1, 1)], 1.0),
    ([(0, 0), (0.5, 0.5), (1, 1)], 0.5),
])
def test_auc_examples(points, expected):
    assert auc_trapezoid(points) == pytest.approx(expected, abs=1e-15)


def test_auc_needs_two_points():
    with pytest.raises(ParameterError):
        auc_trapezoid([(0.2, 0.3)])


def test_separable_auc_is_one():
    pairs = [(1, v) for v in np.linspace(0.1, 0.2, 50)] + [(0, v) for v in np.linspace(0.0, 0.05, 50)]
    curve = roc_sweep(pairs)
    assert curve.auc == 1.0
    best = select_threshold(curve, "youden")
    assert best.sensitivity == 1.0 and best.specificity == 1.0
    assert 0.05 <= best.threshold < 0.1


def test_curve_has_corners_and_is_deduplicated():
    rng = np.random.default_rng(1)
    pairs = np.column_stack([rng.integers(0, 2, 300), rng.random(300)])
    curve = roc_sweep(pairs, steps=64)
    keys = [(p.sensitivity, p.fpr) for p in curve.points]
    assert (1.0, 1.0) in keys and (0.0, 0.0) in keys
    assert len(keys) == len(set(keys))
    for p in curve.points:
        assert 0 <= p.sensitivity <= 1 and 0 <= p.fpr <= 1
        assert p.specificity == pytest.approx(1 - p.fpr)


def test_exact_grid_auc_matches_rank_oracle():
    rng = np.random.default_rng(2)
    expected = rng.integers(0, 2, 400)
    scores = np.round(rng.normal(expected * 0.7, 1.0), 2)  # rounding creates ties
    curve = roc_sweep(np.column_stack([expected, scores]), grid="exact")
    assert curve.auc == pytest.approx(brute_auc(expected, scores), abs=1e-12)


def test_shuffled_labels_auc_half():
    rng = np.random.default_rng(3)
    scores = rng.exponential(0.02, 20_000)
    expected = rng.permutation(np.r_[np.ones(10_000), np.zeros(10_000)])
    curve = roc_sweep(np.column_stack([expected, scores]))
    assert abs(curve.auc - 0.5) <= 0.03


@settings(max_examples=30)
@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0, 1)), min_size=4, max_size=80))
def test_roc_monotone(pairs):
    arr = np.array(pairs, dtype=float)
    if len(set(arr[:, 0])) < 2:
        return
    curve = roc_sweep(arr, steps=50)
    pts = sorted((p for p in curve.points), key=lambda p: p.threshold)
    sens = [p.sensitivity for p in pts]
    spec = [p.specificity for p in pts]
    assert all(a >= b for a, b in zip(sens, sens[1:]))
    assert all(a <= b for a, b in zip(spec, spec[1:]))
    assert 0.0 <= curve.auc <= 1.0


@settings(max_examples=30)
@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0.001, 5)), min_size=4, max_size=60))
def test_auc_invariant_under_monotone_transform(pairs):
    arr = np.array(pairs, dtype=float)
    if len(set(arr[:, 0])) < 2:
        return
    base = roc_sweep(arr, grid="exact")
    transformed = arr.copy()
    transformed[:, 1] = np.log(arr[:, 1]) * 3.0 + 100.0
    other = roc_sweep(transformed, grid="exact")
    assert {(p.sensitivity, p.fpr) for p in base.points} == {(p.sensitivity, p.fpr) for p in other.points}
    assert other.auc == pytest.approx(base.auc, abs=1e-12)


def test_single_class_degenerate():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = roc_sweep([(1, 0.1), (1, 0.2)])
    assert any(issubclass(w.category, DegenerateCurveWarning) for w in caught)
    assert curve.degenerate and curve.auc is None
    with pytest.raises(SelectionError):
        select_threshold(curve, "youden")


def test_fixed_selection_nearest():
    pts = tuple(RocPoint(t, 1 - t, 1 - t, t) for t in (0.0, 0.02, 0.03, 0.05))
    curve = RocCurve(pts, 0.5)
    assert select_threshold(curve, "fixed", 0.024).threshold == 0.02
    assert select_threshold(curve, "fixed", 0.026).threshold == 0.03
    with pytest.raises(SelectionError):
        select_threshold(curve, "fixed")


def test_youden_tie_takes_smaller_threshold():
    pts = (RocPoint(0.01, 0.9, 0.2, 0.8), RocPoint(0.02, 0.8, 0.1, 0.9), RocPoint(0.03, 0.5, 0.0, 1.0))
    assert select_threshold(RocCurve(pts, 0.8), "youden").threshold == 0.01


def test_closest_to_corner():
    pts = (RocPoint(0.01, 1.0, 0.5, 0.5), RocPoint(0.02, 0.9, 0.1, 0.9), RocPoint(0.03, 0.2, 0.0, 1.0))
    assert select_threshold(RocCurve(pts, 0.8), "closest_to_corner").threshold == 0.02


def test_pearson_identity_and_negation():
    x = np.arange(10.0)
    assert pearson_correlation(x, x)[0] == pytest.approx(1.0)
    assert pearson_correlation(x, -x)[0] == pytest.approx(-1.0)


def test_pearson_p_against_t_oracle():
    rng = np.random.default_rng(4)
    x = rng.normal(size=25)
    y = 0.5 * x + rng.normal(size=25)
    r, p = pearson_correlation(x, y)
    ref = sps.pearsonr(x, y)
    assert r == pytest.approx(ref[0], abs=1e-12)
    assert p == pytest.approx(ref[1], rel=1e-8)


def test_pearson_p_for_r071_over_twenty_minutes():
    # r = 0.71 over 20 one-minute intensities lands at p ≈ 4.5e-4
    n, r = 20, 0.71
    t = r * math.sqrt((n - 2) / (1 - r * r))
    oracle_p = 2 * sps.t.sf(t, n - 2)
    # build data with exactly that r
    rng = np.random.default_rng(5)
    x = rng.normal(size=n)
    e = rng.normal(size=n)
    x = (x - x.mean()) / x.std()
    e = e - e.mean() - (e @ x) / (x @ x) * x
    e /= e.std()
    y = r * x + math.sqrt(1 - r * r) * e
    r_hat, p = pearson_correlation(x, y)
    assert r_hat == pytest.approx(0.71, abs=1e-12)
    assert p == pytest.approx(oracle_p, rel=1e-9)
    assert 0.0003 < p < 0.0005


def test_pearson_errors():
    with pytest.raises(DegenerateError):
        pearson_correlation([1, 1, 1], [1, 2, 3])
    with pytest.raises(ParameterError):
        pearson_correlation([1, 2], [1, 2])
    with pytest.raises(ParameterError):
        pearson_correlation([1, 2, 3], [1, 2])


@settings(max_examples=40)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30),
       st.floats(0.01, 50), st.floats(-50, 50), st.sampled_from([-1, 1]))
def test_pearson_symmetry_and_affine(pairs, a, b, sign):
    arr = np.array(pairs)
    x, y = arr[:, 0], arr[:, 1]
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    r = pearson_correlation(x, y)[0]
    assert pearson_correlation(y, x)[0] == pytest.approx(r, abs=1e-9)
    assert pearson_correlation(sign * a * x + b, y)[0] == pytest.approx(sign * r, abs=1e-9)


def _labeled_fixture(minutes=20, seed=0):
    t0 = 1_600_675_200_000
    rng = np.random.default_rng(seed)
    active = []
    cursor = t0
    for _ in range(minutes):
        start = cursor + int(rng.integers(1, 6)) * 5000
        end = start + int(rng.integers(2, 6)) * 5000
        active.append((start, end))
        cursor += 60_000
    sched = ActivitySchedule.from_active(t0, t0 + minutes * 60_000, active)
    series, truth = generate_trace(sched, NoiseModel(seed=seed), cat_id="val")
    track = labels_to_track(schedule_label_events(sched))
    return series, track, truth


def test_calibrate_series_end_to_end():
    series, track, truth = _labeled_fixture()
    assert len(series) == 241
    report = calibrate_series(series, track)
    assert report.curve.auc == 1.0
    assert report.selected.sensitivity == 1.0 and report.selected.specificity == 1.0
    assert report.n_pairs == len(truth)
    assert report.n_minutes == 20
    assert report.pearson_r == pytest.approx(1.0)
    doc = report_json(report)
    assert '"auc": 1.0' in doc
    csv_text = roc_csv(report.curve)
    assert csv_text.splitlines()[0] == "threshold,sensitivity,specificity,fpr"
