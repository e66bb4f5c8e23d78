"""
Activity estimation from acceleration.

Pipeline per session: magnitude A = |a|, absolute derivative
dA_n = |A_{n+1} - A_n| / (t_{n+1} - t_n), then level = 1 where dA exceeds
the threshold. Each derivative point covers the interval (t_n, t_{n+1}] and
is stamped at t_{n+1}; ``start_ms`` keeps t_n so downstream binning can use
the interval start.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, NumericError, ParameterError
from .ingest import ImuSample, LabelTrack, SampleSeries, assemble_sessions, format_timestamp


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DerivativeSeries:
    t_ms: np.ndarray       # stamp, t_{n+1}
    start_ms: np.ndarray   # t_n
    values: np.ndarray     # dA, m/s³
    cat_id: str = ""
    tz_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "t_ms", _frozen(self.t_ms, np.int64))
        object.__setattr__(self, "start_ms", _frozen(self.start_ms, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, float))

    def __len__(self):
        return len(self.t_ms)


@dataclass(frozen=True, eq=False)
class ActivityLevelSeries:
    t_ms: np.ndarray
    start_ms: np.ndarray
    levels: np.ndarray
    cat_id: str = ""
    tz_offset: int = 0
    nominal_period: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "t_ms", _frozen(self.t_ms, np.int64))
        object.__setattr__(self, "start_ms", _frozen(self.start_ms, np.int64))
        levels = _frozen(self.levels, np.uint8)
        if np.any(levels > 1):
            raise ParameterError("activity levels must be 0 or 1")
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.t_ms)

    @classmethod
    def from_levels(cls, levels, t0_ms: int = 0, period: float = 5.0, **kwargs) -> "ActivityLevelSeries":
        """Regular-grid helper: epoch i covers (t0 + i·period, t0 + (i+1)·period]."""
        n = len(levels)
        step = int(round(period * 1000))
        start = t0_ms + step * np.arange(n, dtype=np.int64)
        return cls(t_ms=start + step, start_ms=start, levels=levels, nominal_period=period, **kwargs)


@dataclass(frozen=True, eq=False)
class ExpectationSeries:
    t_ms: np.ndarray       # window end
    start_ms: np.ndarray   # window start
    expected: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t_ms", _frozen(self.t_ms, np.int64))
        object.__setattr__(self, "start_ms", _frozen(self.start_ms, np.int64))
        object.__setattr__(self, "expected", _frozen(self.expected, np.uint8))

    def __len__(self):
        return len(self.t_ms)


@dataclass(frozen=True, eq=False)
class IntensitySeries:
    t_ms: np.ndarray   # minute start
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t_ms", _frozen(self.t_ms, np.int64))
        object.__setattr__(self, "counts", _frozen(self.counts, np.int64))

    def __len__(self):
        return len(self.counts)


@dataclass(frozen=True, eq=False)
class Alignment:
    left: np.ndarray    # indices into the first series
    right: np.ndarray   # indices into the second series
    excluded_left: int
    excluded_right: int

    def __len__(self):
        return len(self.left)


def accel_magnitude(sample) -> float | np.ndarray:
    """Euclidean norm of the acceleration.

    Accepts an :class:`ImuSample`, a 3-sequence, or an (n, 3) array.
    """
    if isinstance(sample, ImuSample):
        vec = np.array([sample.ax, sample.ay, sample.az], dtype=float)
    else:
        vec = np.asarray(sample, dtype=float)
    if not np.all(np.isfinite(vec)):
        raise NumericError("non-finite acceleration component")
    if vec.ndim == 1:
        return math.sqrt(float(vec[0]) ** 2 + float(vec[1]) ** 2 + float(vec[2]) ** 2)
    return np.sqrt(np.einsum("ij,ij->i", vec, vec))


def accel_derivative(t_ms, magnitudes, *, cat_id: str = "", tz_offset: int = 0) -> DerivativeSeries:
    """Absolute time derivative of the magnitude within one contiguous session."""
    t = np.asarray(t_ms, dtype=np.int64)
    a = np.asarray(magnitudes, dtype=float)
    if len(t) != len(a):
        raise ParameterError("time and magnitude lengths differ")
    if len(t) < 2:
        return DerivativeSeries(t[:0], t[:0], a[:0], cat_id, tz_offset)
    dt = np.diff(t)
    if np.any(dt == 0):
        raise NumericError("zero time step between consecutive samples")
    if np.any(dt < 0):
        raise ParameterError("timestamps must be strictly increasing")
    values = np.abs(np.diff(a)) / (dt / 1000.0)
    return DerivativeSeries(t[1:], t[:-1], values, cat_id, tz_offset)


def series_derivative(series: SampleSeries, gap_threshold: float = 15.0) -> DerivativeSeries:
    """Derivative over every session of a series, never bridging a gap."""
    mags = accel_magnitude(series.acc) if len(series) else np.empty(0)
    parts_t, parts_s, parts_v = [], [], []
    for sess in assemble_sessions(series, gap_threshold):
        a, b = sess.first_index, sess.first_index + len(sess)
        d = accel_derivative(series.t_ms[a:b], mags[a:b])
        parts_t.append(d.t_ms)
        parts_s.append(d.start_ms)
        parts_v.append(d.values)
    if not parts_t:
        empty = np.empty(0, dtype=np.int64)
        return DerivativeSeries(empty, empty, np.empty(0), series.cat_id, series.tz_offset)
    return DerivativeSeries(
        np.concatenate(parts_t), np.concatenate(parts_s), np.concatenate(parts_v),
        series.cat_id, series.tz_offset,
    )


def classify_activity(deriv: DerivativeSeries, threshold: float, nominal_period: float = 5.0) -> ActivityLevelSeries:
    """Level 1 where dA strictly exceeds ``threshold``."""
    if not threshold >= 0:
        raise ParameterError(f"threshold must be non-negative, got {threshold}")
    return ActivityLevelSeries(
        t_ms=deriv.t_ms,
        start_ms=deriv.start_ms,
        levels=(deriv.values > threshold).astype(np.uint8),
        cat_id=deriv.cat_id,
        tz_offset=deriv.tz_offset,
        nominal_period=nominal_period,
    )


def estimate_activity(series: SampleSeries, threshold: float, gap_threshold: float = 15.0) -> ActivityLevelSeries:
    """Full estimation pipeline: sessions, magnitude, derivative, threshold."""
    return classify_activity(series_derivative(series, gap_threshold), threshold, series.nominal_period)


def expectation_downsample(track: LabelTrack, window: float = 5.0, ratio: float = 0.2) -> ExpectationSeries:
    """Collapse 1 Hz labels to one expectation per window.

    A window is active when at least ``ratio`` of it is labeled active; the
    trailing partial window is dropped. Windows are stamped at their end.
    """
    if window <= 0:
        raise ParameterError("window must be positive")
    if not 0 < ratio <= 1:
        raise ParameterError("ratio must lie in (0, 1]")
    per = window / track.period
    size = int(round(per))
    if abs(per - size) > 1e-9 or size < 1:
        raise ParameterError("window must be a multiple of the label period")
    n = len(track.values) // size
    blocks = track.values[: n * size].reshape(n, size).astype(np.int64)
    active = blocks.sum(axis=1)
    # compare in label units to avoid float drift: active seconds ≥ ratio·window
    expected = (active * track.period >= ratio * window - 1e-9).astype(np.uint8)
    step = int(round(window * 1000))
    start = track.start_ms + step * np.arange(n, dtype=np.int64)
    return ExpectationSeries(t_ms=start + step, start_ms=start, expected=expected)


def activity_intensity(levels: ActivityLevelSeries, window: float = 60.0) -> IntensitySeries:
    """Count active epochs in consecutive non-overlapping windows.

    Windows are formed from runs of contiguous epochs (an epoch whose start
    equals its predecessor's stamp); a run's trailing partial window is dropped.
    """
    per = int(round(window / levels.nominal_period))
    if per < 1:
        raise ParameterError("window shorter than one epoch")
    n = len(levels)
    if n == 0:
        return IntensitySeries(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    breaks = np.flatnonzero(levels.start_ms[1:] != levels.t_ms[:-1]) + 1
    bounds = np.concatenate(([0], breaks, [n]))
    starts, counts = [], []
    lv = levels.levels.astype(np.int64)
    for a, b in zip(bounds[:-1], bounds[1:]):
        m = (b - a) // per
        if m == 0:
            continue
        block = lv[a: a + m * per].reshape(m, per)
        counts.append(block.sum(axis=1))
        starts.append(levels.start_ms[a: a + m * per: per])
    if not counts:
        return IntensitySeries(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    return IntensitySeries(np.concatenate(starts), np.concatenate(counts))


def intensity_from_array(values, window_epochs: int = 12) -> np.ndarray:
    """Block sums of a 0/1 array (e.g. aligned expectations), dropping the partial tail."""
    v = np.asarray(values, dtype=np.int64)
    m = len(v) // window_epochs
    return v[: m * window_epochs].reshape(m, window_epochs).sum(axis=1)


def align_series(estimates, expectations, tolerance: float = 1.0) -> Alignment:
    """Pair epochs of two series by nearest stamp within ``tolerance`` seconds.

    Any objects exposing a sorted ``t_ms`` array are accepted. Pairing is
    one-to-one; an epoch that loses to a closer candidate is excluded.
    """
    a = np.asarray(estimates.t_ms, dtype=np.int64)
    b = np.asarray(expectations.t_ms, dtype=np.int64)
    tol = tolerance * 1000.0
    if len(a) == 0 or len(b) == 0 or a[-1] < b[0] - tol or b[-1] < a[0] - tol:
        raise AlignmentError("series do not overlap in time")
    pos = np.searchsorted(b, a)
    lo = np.clip(pos - 1, 0, len(b) - 1)
    hi = np.clip(pos, 0, len(b) - 1)
    d_lo = np.abs(a - b[lo])
    d_hi = np.abs(b[hi] - a)
    nearest = np.where(d_hi < d_lo, hi, lo)
    dist = np.minimum(d_lo, d_hi)
    ok = dist <= tol
    left = np.flatnonzero(ok)
    right = nearest[ok]
    dist = dist[ok]
    if len(right):
        # keep the closest claimant for each right index (first on ties)
        order = np.lexsort((left, dist, right))
        right_sorted = right[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = right_sorted[1:] != right_sorted[:-1]
        keep = np.sort(order[first])
        left, right = left[keep], right[keep]
    if len(left) == 0:
        raise AlignmentError("no epochs matched within tolerance")
    return Alignment(left=left, right=right,
                     excluded_left=len(a) - len(left), excluded_right=len(b) - len(right))


def write_debug_csv(series: SampleSeries, threshold: float, path: str | Path,
                    gap_threshold: float = 15.0) -> None:
    """Per-stage dump (t, A, dA, level); the first sample of a session has empty dA/level."""
    mags = accel_magnitude(series.acc) if len(series) else np.empty(0)
    deriv = series_derivative(series, gap_threshold)
    lookup = {int(t): float(v) for t, v in zip(deriv.t_ms, deriv.values)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_iso", "A", "dA", "level"])
    for t, a in zip(series.t_ms, mags):
        d = lookup.get(int(t))
        if d is None:
            w.writerow([format_timestamp(t), f"{a:.6f}", "", ""])
        else:
            w.writerow([format_timestamp(t), f"{a:.6f}", f"{d:.6f}", int(d > threshold)])
    Path(path).write_text(buf.getvalue())
