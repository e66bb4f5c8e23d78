"""
Threshold calibration: confusion counts, ROC sweep, AUC, threshold
selection and validation of per-minute activity intensity.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateError, ParameterError, SelectionError
from .ingest import LabelTrack, SampleSeries
from .signal import (
    align_series,
    expectation_downsample,
    intensity_from_array,
    series_derivative,
)
from .stats.distributions import student_t_sf

CRITERIA = ("youden", "closest_to_corner", "fixed")


class DegenerateCurveWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def sensitivity(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else float("nan")

    @property
    def specificity(self) -> float:
        neg = self.tn + self.fp
        return self.tn / neg if neg else float("nan")


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    sensitivity: float
    fpr: float
    specificity: float

    @property
    def youden(self) -> float:
        return self.sensitivity + self.specificity - 1.0


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]
    auc: float | None
    degenerate: bool = False

    def thresholds(self) -> np.ndarray:
        return np.array([p.threshold for p in self.points])


@dataclass(frozen=True)
class CalibrationReport:
    curve: RocCurve
    selected: RocPoint
    criterion: str
    pearson_r: float | None
    pearson_p: float | None
    n_pairs: int
    n_minutes: int
    excluded_estimates: int = 0
    excluded_expectations: int = 0
    pearson_note: str | None = None

    def as_dict(self) -> dict:
        return {
            "selected": _point_dict(self.selected),
            "criterion": self.criterion,
            "auc": self.curve.auc,
            "degenerate": self.curve.degenerate,
            "pearson_r": self.pearson_r,
            "pearson_p": self.pearson_p,
            "pearson_note": self.pearson_note,
            "n_pairs": self.n_pairs,
            "n_minutes": self.n_minutes,
            "excluded_estimates": self.excluded_estimates,
            "excluded_expectations": self.excluded_expectations,
            "n_points": len(self.curve.points),
        }


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def _point_dict(p: RocPoint) -> dict:
    return {"threshold": _finite_or_none(p.threshold), "sensitivity": p.sensitivity,
            "specificity": p.specificity, "fpr": p.fpr}


def _split_pairs(pairs):
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(arr) == 0:
        raise ParameterError("no pairs supplied")
    expected = arr[:, 0]
    if not np.all((expected == 0) | (expected == 1)):
        raise ParameterError("expected labels must be 0 or 1")
    return expected.astype(bool), arr[:, 1]


def confusion_at_threshold(pairs, threshold: float) -> ConfusionCounts:
    """Counts for prediction = (dA > threshold) over (expected, dA) pairs."""
    expected, d = _split_pairs(pairs)
    predicted = d > threshold
    tp = int(np.sum(predicted & expected))
    fp = int(np.sum(predicted & ~expected))
    fn = int(np.sum(~predicted & expected))
    tn = int(np.sum(~predicted & ~expected))
    return ConfusionCounts(tp, fp, tn, fn)


def auc_trapezoid(points: Sequence) -> float:
    """Trapezoidal area under (fpr, sensitivity), anchored at (0, 0) and (1, 1).

    ``points`` holds :class:`RocPoint` objects or (fpr, sensitivity) tuples.
    Points sharing an fpr are ordered by sensitivity so vertical steps add no area.
    """
    if len(points) < 2:
        raise ParameterError("need at least two points")
    xy = [(p.fpr, p.sensitivity) if isinstance(p, RocPoint) else (float(p[0]), float(p[1]))
          for p in points]
    if len(set(xy)) < 2:
        raise ParameterError("need at least two distinct points")
    xy = sorted(set(xy) | {(0.0, 0.0), (1.0, 1.0)})
    x = np.array([p[0] for p in xy])
    y = np.array([p[1] for p in xy])
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def roc_sweep(pairs, steps: int = 512, grid: str = "uniform") -> RocCurve:
    """Evaluate the classifier over a threshold grid.

    ``grid="uniform"`` spans 0..max(dA) in ``steps`` equal steps;
    ``grid="exact"`` uses every distinct dA value, which makes the curve
    depend only on the ordering of dA. Both corner points are always added
    (thresholds ±inf). Points with identical (sensitivity, fpr) collapse to
    the smallest threshold.
    """
    expected, d = _split_pairs(pairs)
    pos = np.sort(d[expected])
    neg = np.sort(d[~expected])
    degenerate = len(pos) == 0 or len(neg) == 0
    if degenerate:
        warnings.warn("pairs contain a single class; AUC is undefined", DegenerateCurveWarning,
                      stacklevel=2)
    if grid == "uniform":
        if steps < 1:
            raise ParameterError("steps must be ≥ 1")
        top = float(d.max()) if len(d) else 0.0
        thresholds = np.linspace(0.0, top, steps + 1)
    elif grid == "exact":
        thresholds = np.unique(d)
    else:
        raise ParameterError(f"unknown grid {grid!r}")
    thresholds = np.concatenate(([-np.inf], thresholds, [np.inf]))

    # count of values strictly above each threshold
    tp = len(pos) - np.searchsorted(pos, thresholds, side="right")
    fp = len(neg) - np.searchsorted(neg, thresholds, side="right")
    with np.errstate(invalid="ignore", divide="ignore"):
        sens = tp / len(pos) if len(pos) else np.full(len(thresholds), np.nan)
        fpr = fp / len(neg) if len(neg) else np.full(len(thresholds), np.nan)

    points = []
    seen = set()
    for t, s, f in zip(thresholds, sens, fpr):
        key = (float(s), float(f))
        if key in seen:
            continue
        seen.add(key)
        points.append(RocPoint(float(t), float(s), float(f), float(1.0 - f)))
    auc = None if degenerate else auc_trapezoid(points)
    return RocCurve(tuple(points), auc, degenerate)


def select_threshold(curve: RocCurve, criterion: str = "youden", value: float | None = None) -> RocPoint:
    """Pick the operating point; ties go to the smaller threshold."""
    if criterion not in CRITERIA:
        raise ParameterError(f"criterion must be one of {CRITERIA}")
    candidates = [p for p in curve.points if math.isfinite(p.threshold)]
    if not candidates:
        raise SelectionError("curve has no finite thresholds")
    if criterion == "fixed":
        if value is None:
            raise SelectionError("fixed selection needs a threshold value")
        return min(candidates, key=lambda p: (abs(p.threshold - value), p.threshold))
    if curve.degenerate:
        raise SelectionError("cannot select a threshold from a single-class curve")
    if criterion == "youden":
        return min(candidates, key=lambda p: (-p.youden, p.threshold))
    return min(candidates, key=lambda p: (p.fpr ** 2 + (1.0 - p.sensitivity) ** 2, p.threshold))


def pearson_correlation(x, y) -> tuple[float, float]:
    """Product-moment r with a two-sided p from the exact t transform."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ParameterError("x and y differ in length")
    n = len(x)
    if n < 3:
        raise ParameterError("need at least three observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateError("zero variance; correlation is undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, min(1.0, 2.0 * student_t_sf(abs(t), n - 2))


def calibrate_series(
    series: SampleSeries,
    track: LabelTrack,
    *,
    criterion: str = "youden",
    fixed_value: float | None = None,
    steps: int = 512,
    gap_threshold: float = 15.0,
    window: float = 5.0,
    ratio: float = 0.2,
    tolerance: float = 1.0,
    intensity_window: float = 60.0,
) -> CalibrationReport:
    """End-to-end calibration of one labeled recording."""
    return calibrate_many([(series, track)], criterion=criterion, fixed_value=fixed_value, steps=steps,
                          gap_threshold=gap_threshold, window=window, ratio=ratio,
                          tolerance=tolerance, intensity_window=intensity_window)


def calibrate_many(
    recordings,
    *,
    criterion: str = "youden",
    fixed_value: float | None = None,
    steps: int = 512,
    gap_threshold: float = 15.0,
    window: float = 5.0,
    ratio: float = 0.2,
    tolerance: float = 1.0,
    intensity_window: float = 60.0,
) -> CalibrationReport:
    """Pool (series, label track) recordings into one curve and one threshold."""
    expected_parts, deriv_parts, run_ids = [], [], []
    excluded_est = excluded_exp = 0
    for idx, (series, track) in enumerate(recordings):
        deriv = series_derivative(series, gap_threshold)
        expect = expectation_downsample(track, window, ratio)
        al = align_series(deriv, expect, tolerance)
        expected_parts.append(expect.expected[al.right])
        deriv_parts.append(deriv.values[al.left])
        run_ids.append(np.full(len(al), idx))
        excluded_est += al.excluded_left
        excluded_exp += al.excluded_right
    expected = np.concatenate(expected_parts).astype(float)
    dvals = np.concatenate(deriv_parts)
    pairs = np.column_stack([expected, dvals])

    curve = roc_sweep(pairs, steps=steps)
    selected = select_threshold(curve, criterion, fixed_value)

    per_window = int(round(intensity_window / window))
    est_int, exp_int = [], []
    runs = np.concatenate(run_ids)
    for idx in range(len(expected_parts)):
        mask = runs == idx
        est_int.append(intensity_from_array(dvals[mask] > selected.threshold, per_window))
        exp_int.append(intensity_from_array(expected[mask], per_window))
    est_int = np.concatenate(est_int)
    exp_int = np.concatenate(exp_int)
    r = p = None
    note = None
    try:
        r, p = pearson_correlation(est_int, exp_int)
    except (DegenerateError, ParameterError) as exc:
        note = str(exc)
    return CalibrationReport(curve, selected, criterion, r, p, len(pairs), len(est_int),
                             excluded_est, excluded_exp, note)


def roc_csv(curve: RocCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "sensitivity", "specificity", "fpr"])
    for p in curve.points:
        t = "" if not math.isfinite(p.threshold) else repr(p.threshold)
        w.writerow([t, repr(p.sensitivity), repr(p.specificity), repr(p.fpr)])
    return buf.getvalue()


def report_json(report: CalibrationReport, metadata: dict | None = None) -> str:
    doc = {"metadata": metadata or {}, "calibration": report.as_dict(),
           "curve": [_point_dict(p) for p in report.curve.points]}
    return json.dumps(doc, indent=2, sort_keys=True)
