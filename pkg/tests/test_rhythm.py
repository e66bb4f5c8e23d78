from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actirhythm.ephemeris import build_day_contexts, read_sun_table
from actirhythm.errors import ParameterError
from actirhythm.rhythm import cohort_aggregate, daynight_split, hourly_profile, time_budget
from actirhythm.signal import ActivityLevelSeries

CEST = timezone(timedelta(hours=2))
DAY0 = date(2020, 9, 21)
T0 = int(datetime(2020, 9, 21, tzinfo=CEST).timestamp() * 1000)  # local midnight
EPOCHS_PER_DAY = 17_280
EPOCHS_PER_HOUR = 720


def day_series(levels, t0=T0, cat_id="c"):
    return ActivityLevelSeries.from_levels(np.asarray(levels, dtype=np.uint8), t0_ms=t0,
                                           cat_id=cat_id, tz_offset=120)


def table_contexts(days, sunrise="06:00", sunset="17:37"):
    rows = ["date,sunrise_local,sunset_local"]
    for i in range(days):
        rows.append(f"{DAY0 + timedelta(days=i)},{sunrise},{sunset}")
    table = read_sun_table("\n".join(rows) + "\n", tz_offset=120)
    return build_day_contexts(DAY0, DAY0 + timedelta(days=days - 1), table=table)


def test_budget_examples():
    b = time_budget(day_series([0] * 10))
    assert (b.active_fraction, b.inactive_fraction) == (0.0, 100.0)
    b = time_budget(day_series([1, 0] * 10))
    assert b.active_fraction == 50.0 and b.epochs_counted == 20 and b.active_epochs == 10
    with pytest.raises(ParameterError):
        time_budget(day_series([]))


@settings(max_examples=50)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=500))
def test_budget_complementarity(levels):
    b = time_budget(day_series(levels))
    assert b.active_fraction + b.inactive_fraction == pytest.approx(100.0, abs=1e-9)
    assert 0 <= b.active_fraction <= 100


def test_noon_activity_is_all_day():
    lv = np.zeros(EPOCHS_PER_DAY, dtype=np.uint8)
    lv[12 * EPOCHS_PER_HOUR: 12 * EPOCHS_PER_HOUR + 60] = 1
    split = daynight_split(day_series(lv), table_contexts(1))
    assert split.day_share == 100.0 and split.night_share == 0.0


def test_uniform_activity_follows_photophase_length():
    # 06:00 to 17:37 local is 697 minutes of light
    split = daynight_split(day_series(np.ones(EPOCHS_PER_DAY)), table_contexts(1))
    assert split.day_share == pytest.approx(100 * 697 / 1440, abs=1e-9)
    assert split.day_share + split.night_share == pytest.approx(100.0, abs=1e-9)
    assert split.day_rate == pytest.approx(720.0)  # every epoch active, 720 per hour
    assert split.night_rate == pytest.approx(720.0)


def test_no_activity_leaves_shares_undefined():
    split = daynight_split(day_series(np.zeros(EPOCHS_PER_DAY)), table_contexts(1))
    assert split.undefined and split.day_share is None and split.night_share is None
    assert split.day_rate == 0.0 and split.night_rate == 0.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, EPOCHS_PER_DAY * 2 - 1), st.integers(1, 2000)), max_size=20))
def test_daynight_consistency(bouts):
    lv = np.zeros(EPOCHS_PER_DAY * 2, dtype=np.uint8)
    for start, length in bouts:
        lv[start: start + length] = 1
    split = daynight_split(day_series(lv), table_contexts(2, "07:41", "19:22"))
    total = split.day_active + split.night_active
    assert total == int(lv.sum())
    if total:
        assert abs(split.day_share * total / 100 - split.day_active) <= 1
        assert split.day_share + split.night_share == pytest.approx(100.0, abs=1e-9)
    assert split.day_rate >= 0 and split.night_rate >= 0


def test_hourly_examples():
    prof = hourly_profile(day_series(np.ones(EPOCHS_PER_DAY)))
    assert np.all(prof.bins == 100.0)
    lv = np.zeros(EPOCHS_PER_DAY, dtype=np.uint8)
    lv[9 * EPOCHS_PER_HOUR: 10 * EPOCHS_PER_HOUR] = 1
    prof = hourly_profile(day_series(lv))
    assert prof.bins[9] == 100.0
    assert np.all(np.delete(prof.bins, 9) == 0.0)
    assert prof.argmax() == 9
    assert prof.days == (DAY0,)


def test_hourly_mean_over_days():
    lv = np.zeros(EPOCHS_PER_DAY * 2, dtype=np.uint8)
    lv[3 * EPOCHS_PER_HOUR: 3 * EPOCHS_PER_HOUR + 360] = 1  # half of 03:00 on day one
    prof = hourly_profile(day_series(lv))
    assert prof.per_day[0, 3] == 50.0 and prof.per_day[1, 3] == 0.0
    assert prof.bins[3] == 25.0


def test_hourly_uses_local_clock():
    lv = np.zeros(EPOCHS_PER_DAY, dtype=np.uint8)
    lv[9 * EPOCHS_PER_HOUR] = 1
    prof = hourly_profile(day_series(lv), tz_offset=0)  # read as UTC, local 09:00 is 07:00
    assert prof.argmax() == 7


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=3000), st.integers(0, EPOCHS_PER_DAY),
       st.lists(st.tuples(st.integers(0, 3000), st.integers(1, 400)), max_size=4))
def test_hourly_weighted_mean_equals_budget(levels, offset, holes):
    lv = np.repeat(np.asarray(levels, dtype=np.uint8), 7)
    series = day_series(lv, t0=T0 + offset * 5000)
    keep = np.ones(len(lv), dtype=bool)
    for s, n in holes:
        keep[s: s + n] = False
    if not keep.any():
        return
    gapped = ActivityLevelSeries(series.t_ms[keep], series.start_ms[keep], series.levels[keep],
                                 tz_offset=120)
    prof = hourly_profile(gapped)
    covered = prof.counts > 0
    weighted = np.sum(prof.per_day[covered] * prof.counts[covered]) / prof.counts.sum()
    assert weighted == pytest.approx(time_budget(gapped).active_fraction, abs=1e-9)
    assert np.all((prof.bins[~np.isnan(prof.bins)] >= 0) & (prof.bins[~np.isnan(prof.bins)] <= 100))


def test_gap_honesty():
    # a full missing day contributes nothing: not to budgets, splits or hourly bins
    lv = np.zeros(EPOCHS_PER_DAY, dtype=np.uint8)
    lv[10 * EPOCHS_PER_HOUR: 11 * EPOCHS_PER_HOUR] = 1
    one = day_series(lv)
    both = day_series(np.r_[lv, lv])
    keep = np.r_[np.ones(EPOCHS_PER_DAY, bool), np.zeros(EPOCHS_PER_DAY, bool), np.ones(EPOCHS_PER_DAY, bool)]
    three = day_series(np.r_[lv, np.ones(EPOCHS_PER_DAY, np.uint8), lv])
    gapped = ActivityLevelSeries(three.t_ms[keep], three.start_ms[keep], three.levels[keep], tz_offset=120)
    assert time_budget(gapped).active_fraction == time_budget(one).active_fraction
    assert time_budget(gapped).epochs_counted == time_budget(both).epochs_counted
    assert np.array_equal(hourly_profile(gapped).bins, hourly_profile(one).bins)
    assert len(hourly_profile(gapped).days) == 2
    split = daynight_split(gapped, table_contexts(3))
    assert split.day_active == 2 * EPOCHS_PER_HOUR and split.day_epochs + split.night_epochs == 2 * EPOCHS_PER_DAY


def test_partial_hour_leaves_uncovered_bins_nan():
    prof = hourly_profile(day_series(np.ones(EPOCHS_PER_HOUR)))
    assert prof.bins[0] == 100.0
    assert np.isnan(prof.bins[1:]).all()


def test_cohort_examples():
    s = cohort_aggregate([1, 2, 3])
    assert s.mean == 2.0 and s.std == 1.0 and s.outliers == ()
    s = cohort_aggregate({"a": 4.2, "b": 4.2, "c": 4.2})
    assert s.std == 0.0 and s.outliers == ()
    with pytest.raises(ParameterError):
        cohort_aggregate([3.0])


def test_cohort_flags_low_activity_cat():
    per_cat = {f"cat{i:02d}": 15.0 for i in range(11)}
    per_cat["lina"] = 7.7
    s = cohort_aggregate(per_cat, "active_fraction")
    assert s.outliers == ("lina",)
    assert s.std == pytest.approx(np.std(list(per_cat.values()), ddof=1))

