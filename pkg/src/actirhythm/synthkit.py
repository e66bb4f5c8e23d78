"""
Synthetic collar traces with known ground truth, and metrics computed
straight from the schedule by interval arithmetic.

Sample k (at t_k) reflects the state of the interval [t_{k-1}, t_k), so
the epoch ending at t_k carries exactly that interval's state. At rest the
acceleration magnitude is g whatever the orientation. During an active bout
the magnitude follows a reflected random walk whose consecutive values differ
by at least half the active amplitude, and the bout's last sample returns to
g, so the derivative crosses the calibrated threshold exactly on active
epochs. Bouts of a single epoch are the exception: the return to rest then
falls on the following epoch.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .ephemeris import DayContext, local_day_index
from .errors import ParameterError
from .ingest import G, LabelEvent, SampleSeries, format_timestamp
from .rhythm import HOURS, DayNightSplit, HourlyProfile, TimeBudget
from .signal import ExpectationSeries

DAY_MS = 86_400_000
HOUR_MS = 3_600_000

# fraction of each local hour spent active; two peaks at the caretakers' visits
BIMODAL_HOURLY = (
    0.09, 0.09, 0.09, 0.09, 0.09, 0.09,
    0.10, 0.10, 0.10,
    0.34, 0.34, 0.34,
    0.09, 0.09, 0.09, 0.09,
    0.34, 0.34,
    0.10, 0.10, 0.10,
    0.10, 0.10, 0.10,
)


@dataclass(frozen=True, eq=False)
class ActivitySchedule:
    """Sorted, gap-free, non-overlapping (start, end, active) intervals in UTC ms."""

    starts: np.ndarray
    ends: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(self.starts, dtype=np.int64)
        e = np.ascontiguousarray(self.ends, dtype=np.int64)
        a = np.ascontiguousarray(self.active, dtype=bool)
        if not (len(s) == len(e) == len(a)) or len(s) == 0:
            raise ParameterError("schedule needs matching, non-empty interval arrays")
        if np.any(e <= s):
            raise ParameterError("schedule intervals must have positive length")
        if np.any(s[1:] < e[:-1]):
            raise ParameterError("schedule intervals overlap")
        if np.any(s[1:] != e[:-1]):
            raise ParameterError("schedule intervals leave a hole")
        for arr in (s, e, a):
            arr.setflags(write=False)
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "ends", e)
        object.__setattr__(self, "active", a)

    @property
    def span(self) -> tuple[int, int]:
        return int(self.starts[0]), int(self.ends[-1])

    @classmethod
    def from_intervals(cls, intervals: Sequence[tuple[int, int, str | bool]]) -> "ActivitySchedule":
        rows = sorted(intervals, key=lambda r: (r[0], r[1]))
        states = [r[2] == "active" if isinstance(r[2], str) else bool(r[2]) for r in rows]
        for r in rows:
            if isinstance(r[2], str) and r[2] not in ("active", "inactive"):
                raise ParameterError(f"unknown state {r[2]!r}")
        return cls(np.array([r[0] for r in rows], dtype=np.int64),
                   np.array([r[1] for r in rows], dtype=np.int64),
                   np.array(states, dtype=bool))

    @classmethod
    def from_active(cls, span_start: int, span_end: int, active: Sequence[tuple[int, int]]) -> "ActivitySchedule":
        """Fill the span with rest around the given (disjoint) active intervals."""
        rows = []
        cursor = span_start
        for a, b in sorted(active):
            if a < cursor:
                raise ParameterError("active intervals overlap or precede the span")
            if b > span_end:
                raise ParameterError("active interval runs past the span")
            if a > cursor:
                rows.append((cursor, a, False))
            if b > a:
                rows.append((a, b, True))
            cursor = b
        if cursor < span_end:
            rows.append((cursor, span_end, False))
        return cls.from_intervals(rows)

    def state_at(self, t_ms) -> np.ndarray:
        t = np.asarray(t_ms, dtype=np.int64)
        idx = np.searchsorted(self.starts, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.starts) - 1)
        return self.active[idx] & (t >= self.starts[0]) & (t < self.ends[-1])

    def active_intervals(self) -> list[tuple[int, int]]:
        """Maximal active runs (adjacent active rows merged)."""
        out = []
        for s, e, a in zip(self.starts, self.ends, self.active):
            if not a:
                continue
            if out and out[-1][1] == s:
                out[-1] = (out[-1][0], int(e))
            else:
                out.append((int(s), int(e)))
        return out

    def to_json(self) -> list[dict]:
        return [{"start": format_timestamp(s), "end": format_timestamp(e),
                 "state": "active" if a else "inactive"}
                for s, e, a in zip(self.starts, self.ends, self.active)]


@dataclass(frozen=True)
class NoiseModel:
    rest_jitter_sigma: float = 0.005
    active_amp: float = 1.0
    active_jitter_sigma: float = 0.01
    orientation: tuple[float, float, float] = (0.0, 0.0, 1.0)
    direction_step: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if min(self.rest_jitter_sigma, self.active_amp, self.active_jitter_sigma, self.direction_step) < 0:
            raise ParameterError("noise parameters must be non-negative")
        norm = math.sqrt(sum(c * c for c in self.orientation))
        if norm == 0:
            raise ParameterError("orientation must be non-zero")
        object.__setattr__(self, "orientation", tuple(c / norm for c in self.orientation))


def _walk(bout_lengths: np.ndarray, amp: float, rng: np.random.Generator) -> np.ndarray:
    """Reflected random walk per bout, staying in ±[0.5, 1.5]·amp with steps ≥ 0.5·amp.

    Each bout starts from 0; a bout of length ≥ 2 ends back at 0.
    """
    total = int(bout_lengths.sum())
    steps = rng.uniform(0.5, 1.0, total) * amp
    signs = rng.integers(0, 2, total) * 2 - 1
    out = np.empty(total)
    lo, hi = 0.5 * amp, 1.5 * amp
    pos = 0
    for n in bout_lengths.tolist():
        p = 0.0
        last = n - 1 if n >= 2 else n
        for j in range(pos, pos + last):
            step = steps[j] * signs[j]
            q = p + step
            if not lo <= abs(q) <= hi:
                q = p - step
                if not lo <= abs(q) <= hi:
                    q = -p
            out[j] = q
            p = q
        if n >= 2:
            out[pos + n - 1] = 0.0
        pos += n
    return out


def recharge_gaps(span_start: int, span_end: int, tz_offset: int, every_days: int = 3,
                  at_hour: float = 9.0, duration_min: float = 30.0) -> list[tuple[int, int]]:
    """Collar-off intervals at ``at_hour`` local time every ``every_days`` days, from day 0."""
    first_day = int(local_day_index([span_start], tz_offset)[0])
    gaps = []
    day = first_day
    while True:
        start = day * DAY_MS - tz_offset * 60_000 + int(round(at_hour * HOUR_MS))
        if start >= span_end:
            break
        end = start + int(round(duration_min * 60_000))
        if end > span_start:
            gaps.append((max(start, span_start), min(end, span_end)))
        day += every_days
    return gaps


def generate_trace(
    schedule: ActivitySchedule,
    noise: NoiseModel = NoiseModel(),
    sample_period: float = 5.0,
    gaps: Sequence[tuple[int, int]] = (),
    cat_id: str = "",
    tz_offset: int = 0,
) -> tuple[SampleSeries, ExpectationSeries]:
    """Samples on the schedule's grid plus the per-epoch ground truth.

    Samples falling in ``gaps`` are removed; ground truth covers only
    epochs whose two bounding grid samples both survive.
    """
    period_ms = int(round(sample_period * 1000))
    if period_ms <= 0:
        raise ParameterError("sample_period must be positive")
    rng = np.random.default_rng(noise.seed)
    t0, t1 = schedule.span
    n = (t1 - t0) // period_ms + 1
    t = t0 + period_ms * np.arange(n, dtype=np.int64)

    state = np.zeros(n, dtype=bool)
    state[1:] = schedule.state_at(t[:-1])

    # bouts of consecutive active samples
    edges = np.diff(np.concatenate(([0], state.astype(np.int8), [0])))
    bout_start = np.flatnonzero(edges == 1)
    bout_len = np.flatnonzero(edges == -1) - bout_start
    p = np.zeros(n)
    p[state] = _walk(bout_len, noise.active_amp, rng)

    # orientation drifts only while active and persists through rest
    incr = rng.normal(0.0, noise.direction_step, (n, 3))
    incr[~state] = 0.0
    direction = np.asarray(noise.orientation) + np.cumsum(incr, axis=0)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)

    sigma = np.where(state, noise.active_jitter_sigma, noise.rest_jitter_sigma)
    acc = (G + p)[:, None] * direction + rng.normal(0.0, 1.0, (n, 3)) * sigma[:, None]

    keep = np.ones(n, dtype=bool)
    for g0, g1 in gaps:
        keep &= ~((t >= g0) & (t < g1))
    pair = keep[1:] & keep[:-1]
    truth = ExpectationSeries(t_ms=t[1:][pair], start_ms=t[:-1][pair], expected=state[1:][pair])
    series = SampleSeries(cat_id=cat_id, t_ms=t[keep], acc=acc[keep],
                          nominal_period=sample_period, tz_offset=tz_offset)
    return series, truth


def bimodal_schedule(
    start: date,
    days: int,
    tz_offset: int,
    hourly_fraction: Sequence[float] = BIMODAL_HOURLY,
    scale: float = 1.0,
    seed: int = 0,
    min_bout: int = 10,
    max_bout: int = 300,
    grid: int = 5,
) -> ActivitySchedule:
    """Random bouts whose active time per local hour is ``scale·hourly_fraction[h]``.

    Bout lengths and positions are multiples of ``grid`` seconds.
    """
    if len(hourly_fraction) != HOURS:
        raise ParameterError("hourly_fraction needs 24 values")
    if min_bout < 2 * grid:
        raise ParameterError("bouts shorter than two epochs are not reproducible")
    rng = np.random.default_rng(seed)
    tz = timezone(timedelta(minutes=tz_offset))
    span_start = int(datetime(start.year, start.month, start.day, tzinfo=tz).timestamp() * 1000)
    span_end = span_start + days * DAY_MS
    slots = 3600 // grid
    active = []
    for d in range(days):
        for h in range(HOURS):
            frac = min(1.0, max(0.0, scale * hourly_fraction[h]))
            n_active = int(round(frac * slots))
            if n_active == 0:
                continue
            lengths = []
            left = n_active
            while left > 0:
                b = int(rng.integers(min_bout // grid, max_bout // grid + 1))
                b = min(b, left)
                if b < min_bout // grid and lengths:
                    lengths[-1] += b
                else:
                    lengths.append(b)
                left -= b
            rest = slots - n_active
            # random composition of the rest slots into len(lengths)+1 gaps
            cuts = np.sort(rng.integers(0, rest + 1, len(lengths)))
            gaps = np.diff(np.concatenate(([0], cuts, [rest])))
            cursor = span_start + (d * HOURS + h) * HOUR_MS
            for gap, length in zip(gaps[:-1], lengths):
                cursor += int(gap) * grid * 1000
                end = cursor + length * grid * 1000
                if active and active[-1][1] >= cursor:
                    active[-1] = (active[-1][0], end)
                else:
                    active.append((cursor, end))
                cursor = end
    return ActivitySchedule.from_active(span_start, span_end, active)


def schedule_label_events(schedule: ActivitySchedule, active_name: str = "walking",
                          rest_name: str = "resting") -> list[LabelEvent]:
    return [LabelEvent(active_name if a else rest_name, int(s), int(e))
            for s, e, a in zip(schedule.starts, schedule.ends, schedule.active)]


@dataclass(frozen=True)
class SynthCat:
    cat_id: str
    schedule: ActivitySchedule
    gaps: tuple[tuple[int, int], ...]
    noise: NoiseModel
    scale: float
    tz_offset: int


def cohort_preset(
    n_cats: int = 12,
    days: int = 21,
    start: date = date(2020, 9, 21),
    tz_offset: int = 120,
    seed: int = 2020,
    spread: float = 0.25,
    hourly_fraction: Sequence[float] = BIMODAL_HOURLY,
    target_budget: float = 0.145,
    noise: NoiseModel = NoiseModel(),
    recharge: bool = True,
) -> list[SynthCat]:
    """A cohort whose scheduled budgets average ``target_budget``.

    Per-cat scales are spaced symmetrically by ±``spread`` around 1.
    """
    base = np.asarray(hourly_fraction, dtype=float)
    base = base * (target_budget / base.mean())
    scales = 1.0 + spread * np.linspace(-1.0, 1.0, n_cats) if n_cats > 1 else np.ones(1)
    seeds = np.random.SeedSequence(seed).spawn(n_cats)
    cats = []
    for i in range(n_cats):
        s_sched, s_noise = seeds[i].generate_state(2)
        sched = bimodal_schedule(start, days, tz_offset, base, float(scales[i]), seed=int(s_sched))
        gaps = tuple(recharge_gaps(*sched.span, tz_offset)) if recharge else ()
        cat_noise = NoiseModel(noise.rest_jitter_sigma, noise.active_amp, noise.active_jitter_sigma,
                               noise.orientation, noise.direction_step, int(s_noise))
        cats.append(SynthCat(f"cat{i + 1:02d}", sched, gaps, cat_noise, float(scales[i]), tz_offset))
    return cats


# ---------------------------------------------------------------- oracle


def epoch_coverage(span: tuple[int, int], gaps: Sequence[tuple[int, int]],
                   sample_period: float = 5.0) -> list[tuple[int, int]]:
    """Time covered by epochs once gap samples are removed, as disjoint intervals.

    A gap [g0, g1) deletes the grid samples inside it, which loses every
    epoch interval touching them: [ceil(g0) − P, ceil(g1)) on the sample grid.
    """
    t0, t1 = span
    P = int(round(sample_period * 1000))
    last_sample = t0 + (t1 - t0) // P * P
    holes = []
    for g0, g1 in sorted(gaps):
        r0 = t0 + -(-(g0 - t0) // P) * P
        r1 = t0 + -(-(g1 - t0) // P) * P
        if r1 <= r0:
            continue
        holes.append((r0 - P, r1))
    cov = []
    cursor = t0
    for a, b in holes:
        if a > cursor:
            cov.append((cursor, a))
        cursor = max(cursor, b)
    if last_sample > cursor:
        cov.append((cursor, last_sample))
    return cov


def _intersect(a: Sequence[tuple[int, int]], b: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


class _Measure:
    """Cumulative length of a disjoint interval set, queried at arbitrary points."""

    def __init__(self, intervals: Sequence[tuple[int, int]]):
        self.s = np.array([a for a, _ in intervals], dtype=np.int64)
        self.e = np.array([b for _, b in intervals], dtype=np.int64)
        self.cum = np.concatenate(([0], np.cumsum(self.e - self.s)))

    def upto(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.int64)
        if len(self.s) == 0:
            return np.zeros(t.shape, dtype=np.int64)
        i = np.searchsorted(self.s, t, side="right")
        done = self.cum[np.maximum(i - 1, 0)]
        partial = np.where(i > 0, np.clip(t - self.s[np.maximum(i - 1, 0)], 0,
                                          (self.e - self.s)[np.maximum(i - 1, 0)]), 0)
        return np.where(i > 0, done + partial, 0)

    def between(self, a, b) -> np.ndarray:
        return self.upto(b) - self.upto(a)


def oracle_metrics(
    schedule: ActivitySchedule,
    contexts: Sequence[DayContext],
    coverage: Sequence[tuple[int, int]] | None = None,
    tz_offset: int = 0,
    sample_period: float = 5.0,
    cat_id: str = "",
) -> tuple[TimeBudget, DayNightSplit, HourlyProfile]:
    """Time budget, day/night split and hourly profile from the schedule alone."""
    P = int(round(sample_period * 1000))
    cov = list(coverage) if coverage is not None else epoch_coverage(schedule.span, (), sample_period)
    if not cov:
        raise ParameterError("coverage is empty")
    t_lo, t_hi = cov[0][0], cov[-1][1]
    s0, s1 = schedule.span
    if t_lo < s0 or t_hi > s1:
        raise ParameterError("coverage extends beyond the schedule")
    epoch = date(1970, 1, 1)
    days_needed = range(int(local_day_index([t_lo], tz_offset)[0]),
                        int(local_day_index([t_hi - 1], tz_offset)[0]) + 1)
    by_day = {(c.date - epoch).days: c for c in contexts}
    missing = [d for d in days_needed if d not in by_day]
    if missing:
        raise ParameterError(f"contexts do not cover {epoch + timedelta(days=missing[0])}")

    act_cov = _intersect(schedule.active_intervals(), cov)
    m_cov = _Measure(cov)
    m_act = _Measure(act_cov)
    cov_ms = int(m_cov.cum[-1])
    act_ms = int(m_act.cum[-1])
    frac = 100.0 * act_ms / cov_ms
    budget = TimeBudget(cat_id, frac, 100.0 - frac, cov_ms // P, act_ms // P)

    rise = np.array([by_day[d].sunrise_ms for d in days_needed], dtype=np.int64)
    sets = np.array([by_day[d].sunset_ms for d in days_needed], dtype=np.int64)
    day_cov = int(m_cov.between(rise, sets).sum())
    day_act = int(m_act.between(rise, sets).sum())
    night_cov = cov_ms - day_cov
    night_act = act_ms - day_act
    if act_ms == 0:
        day_share = night_share = None
    else:
        day_share = 100.0 * day_act / act_ms
        night_share = 100.0 - day_share
    split = DayNightSplit(
        cat_id, day_share, night_share,
        day_rate=(day_act / P) / (day_cov / HOUR_MS) if day_cov else 0.0,
        night_rate=(night_act / P) / (night_cov / HOUR_MS) if night_cov else 0.0,
        day_epochs=day_cov // P, night_epochs=night_cov // P,
        day_active=day_act // P, night_active=night_act // P,
    )

    day_idx = np.array(list(days_needed), dtype=np.int64)
    cell_start = (day_idx[:, None] * DAY_MS - tz_offset * 60_000
                  + np.arange(HOURS, dtype=np.int64)[None, :] * HOUR_MS)
    cov_cell = m_cov.between(cell_start, cell_start + HOUR_MS)
    act_cell = m_act.between(cell_start, cell_start + HOUR_MS)
    keep_days = cov_cell.sum(axis=1) > 0
    cov_cell, act_cell = cov_cell[keep_days], act_cell[keep_days]
    with np.errstate(invalid="ignore", divide="ignore"):
        per_day = np.where(cov_cell > 0, 100.0 * act_cell / cov_cell, np.nan)
    n_cov = np.sum(cov_cell > 0, axis=0)
    bins = np.where(n_cov > 0, np.nansum(per_day, axis=0) / np.maximum(n_cov, 1), np.nan)
    days = tuple(epoch + timedelta(days=int(d)) for d in day_idx[keep_days])
    profile = HourlyProfile(cat_id, bins, per_day, cov_cell // P, act_cell // P, days)
    return budget, split, profile


def truth_json(cat: SynthCat, contexts: Sequence[DayContext], sample_period: float = 5.0) -> str:
    cov = epoch_coverage(cat.schedule.span, cat.gaps, sample_period)
    budget, split, profile = oracle_metrics(cat.schedule, contexts, cov, cat.tz_offset, sample_period, cat.cat_id)
    doc = {
        "cat_id": cat.cat_id,
        "tz_offset": cat.tz_offset,
        "scale": cat.scale,
        "noise": {
            "rest_jitter_sigma": cat.noise.rest_jitter_sigma,
            "active_amp": cat.noise.active_amp,
            "active_jitter_sigma": cat.noise.active_jitter_sigma,
            "orientation": list(cat.noise.orientation),
            "direction_step": cat.noise.direction_step,
            "seed": cat.noise.seed,
        },
        "gaps": [[format_timestamp(a), format_timestamp(b)] for a, b in cat.gaps],
        "oracle": {
            "active_fraction": budget.active_fraction,
            "day_share": split.day_share,
            "night_share": split.night_share,
            "hourly": [None if math.isnan(v) else v for v in profile.bins],
        },
        "schedule": cat.schedule.to_json(),
    }
    return json.dumps(doc, indent=1, sort_keys=True)
