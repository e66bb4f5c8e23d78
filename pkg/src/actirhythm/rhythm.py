"""
Rhythm summaries computed from classified epochs: time budget,
photophase/scotophase repartition, hourly profile and cohort statistics.

An epoch is placed in time by its interval start (``start_ms``). Only epochs
that exist contribute, so recharge gaps drop out of numerators and
denominators alike.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping, Sequence

import numpy as np

from .ephemeris import DayContext, local_day_index, photophase_mask
from .errors import ParameterError
from .signal import ActivityLevelSeries

HOURS = 24
_EPOCH_DATE = date(1970, 1, 1)


@dataclass(frozen=True)
class TimeBudget:
    cat_id: str
    active_fraction: float    # percent
    inactive_fraction: float  # percent
    epochs_counted: int
    active_epochs: int


@dataclass(frozen=True)
class DayNightSplit:
    cat_id: str
    day_share: float | None    # percent of all active epochs
    night_share: float | None
    day_rate: float            # active epochs per covered hour of photophase
    night_rate: float
    day_epochs: int
    night_epochs: int
    day_active: int
    night_active: int

    @property
    def undefined(self) -> bool:
        return self.day_share is None


@dataclass(frozen=True, eq=False)
class HourlyProfile:
    cat_id: str
    bins: np.ndarray          # percent active per local hour, NaN without coverage
    per_day: np.ndarray       # (days, 24) percent, NaN without coverage
    counts: np.ndarray        # (days, 24) epochs observed
    active: np.ndarray        # (days, 24) active epochs
    days: tuple[date, ...] = ()

    def argmax(self) -> int:
        return int(np.nanargmax(self.bins))


@dataclass(frozen=True)
class CohortSummary:
    metric: str
    n: int
    mean: float
    std: float
    values: dict = field(default_factory=dict)
    outliers: tuple = ()
    ddof: int = 1


def time_budget(levels: ActivityLevelSeries) -> TimeBudget:
    n = len(levels)
    if n == 0:
        raise ParameterError("time budget needs at least one epoch")
    active = int(np.count_nonzero(levels.levels))
    frac = 100.0 * active / n
    return TimeBudget(levels.cat_id, frac, 100.0 - frac, n, active)


def _epoch_hours(levels: ActivityLevelSeries) -> np.ndarray:
    return (levels.t_ms - levels.start_ms) / 3_600_000.0


def daynight_split(levels: ActivityLevelSeries, contexts: Sequence[DayContext]) -> DayNightSplit:
    """Share of active epochs falling in photophase vs scotophase.

    Rates divide active epochs by the hours of each phase actually covered
    by epochs.
    """
    day = photophase_mask(levels.start_ms, contexts, levels.tz_offset)
    act = levels.levels.astype(bool)
    hours = _epoch_hours(levels)
    day_hours = float(hours[day].sum())
    night_hours = float(hours[~day].sum())
    day_active = int(np.count_nonzero(act & day))
    night_active = int(np.count_nonzero(act & ~day))
    total = day_active + night_active
    if total == 0:
        day_share = night_share = None
    else:
        day_share = 100.0 * day_active / total
        night_share = 100.0 - day_share
    return DayNightSplit(
        cat_id=levels.cat_id,
        day_share=day_share,
        night_share=night_share,
        day_rate=day_active / day_hours if day_hours > 0 else 0.0,
        night_rate=night_active / night_hours if night_hours > 0 else 0.0,
        day_epochs=int(np.count_nonzero(day)),
        night_epochs=int(np.count_nonzero(~day)),
        day_active=day_active,
        night_active=night_active,
    )


def hourly_profile(levels: ActivityLevelSeries, tz_offset: int | None = None) -> HourlyProfile:
    """Per local hour: active proportion per day, then averaged over covered days."""
    off = levels.tz_offset if tz_offset is None else tz_offset
    if len(levels) == 0:
        empty = np.zeros((0, HOURS))
        return HourlyProfile(levels.cat_id, np.full(HOURS, np.nan), empty, empty.astype(np.int64),
                             empty.astype(np.int64), ())
    local = levels.start_ms + off * 60_000
    day = local_day_index(levels.start_ms, off)
    hour = (np.mod(local, 86_400_000) // 3_600_000).astype(np.int64)
    d0 = int(day.min())
    n_days = int(day.max()) - d0 + 1
    cell = (day - d0) * HOURS + hour
    counts = np.bincount(cell, minlength=n_days * HOURS).reshape(n_days, HOURS)
    active = np.bincount(cell, weights=levels.levels.astype(float),
                         minlength=n_days * HOURS).reshape(n_days, HOURS).astype(np.int64)
    covered_days = np.flatnonzero(counts.sum(axis=1) > 0)
    counts = counts[covered_days]
    active = active[covered_days]
    with np.errstate(invalid="ignore", divide="ignore"):
        per_day = np.where(counts > 0, 100.0 * active / counts, np.nan)
    with np.errstate(invalid="ignore"):
        n_cov = np.sum(counts > 0, axis=0)
        bins = np.where(n_cov > 0, np.nansum(per_day, axis=0) / np.maximum(n_cov, 1), np.nan)
    days = tuple(_EPOCH_DATE + timedelta(days=int(d0 + i)) for i in covered_days)
    return HourlyProfile(levels.cat_id, bins, per_day, counts, active, days)


def cohort_aggregate(per_cat: Mapping[str, float] | Sequence[float], metric: str = "", ddof: int = 1) -> CohortSummary:
    """Mean, standard deviation and the cats lying more than 2·std from the mean."""
    if isinstance(per_cat, Mapping):
        values = {str(k): float(v) for k, v in per_cat.items()}
    else:
        values = {str(i): float(v) for i, v in enumerate(per_cat)}
    if len(values) < 2:
        raise ParameterError("cohort statistics need at least two cats")
    x = np.array(list(values.values()))
    mean = float(x.mean())
    std = float(x.std(ddof=ddof))
    outliers = tuple(k for k, v in values.items() if abs(v - mean) > 2.0 * std)
    return CohortSummary(metric, len(values), mean, std, values, outliers, ddof)
