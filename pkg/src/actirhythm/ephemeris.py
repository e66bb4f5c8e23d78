"""
Sunrise and sunset per civil date, used to split each day into photophase
[sunrise, sunset) and scotophase.

Solar events follow the NOAA solar calculator: declination and equation
of time from low-precision solar coordinates, hour angle at a zenith of
90.833° (refraction plus solar radius), refined by re-evaluating the solar
position at the event time.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import CoverageError, NoEventError, ParameterError

ZENITH_SUNRISE = 90.833
MAX_LATITUDE = 66.5


@dataclass(frozen=True)
class GeoSite:
    latitude: float
    longitude: float
    tz_offset: int = 0  # minutes east of UTC
    name: str = ""

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ParameterError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ParameterError(f"longitude out of range: {self.longitude}")

    @property
    def tzinfo(self) -> timezone:
        return timezone(timedelta(minutes=self.tz_offset))


SITE_PRESETS: dict[str, GeoSite] = {
    # cat shelter in Normandy; France stays on CEST for the whole study window
    "ava": GeoSite(49.46, 1.75, 120, "AVA shelter, Cuy-Saint-Fiacre"),
}
AVA_STUDY_DATES = (date(2020, 9, 21), date(2020, 10, 13))


@dataclass(frozen=True)
class DayContext:
    date: date
    sunrise: datetime
    sunset: datetime

    def __post_init__(self):
        if not self.sunrise < self.sunset:
            raise ParameterError(f"{self.date}: sunrise must precede sunset")

    @property
    def daylight(self) -> timedelta:
        return self.sunset - self.sunrise

    @property
    def sunrise_ms(self) -> int:
        return _to_ms(self.sunrise)

    @property
    def sunset_ms(self) -> int:
        return _to_ms(self.sunset)


PHOTOPHASE = "photophase"
SCOTOPHASE = "scotophase"


def _to_ms(dt: datetime) -> int:
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def _julian_day(d: date) -> float:
    # JD at 00:00 UT of the civil date
    return d.toordinal() + 1721424.5


def _solar_terms(jd: float) -> tuple[float, float]:
    """Declination (deg) and equation of time (min) at Julian day ``jd``."""
    jc = (jd - 2451545.0) / 36525.0
    l0 = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360.0
    m = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    mr = math.radians(m)
    c = (math.sin(mr) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
         + math.sin(2 * mr) * (0.019993 - 0.000101 * jc)
         + math.sin(3 * mr) * 0.000289)
    true_long = l0 + c
    omega = math.radians(125.04 - 1934.136 * jc)
    app_long = true_long - 0.00569 - 0.00478 * math.sin(omega)
    mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    obliq = math.radians(mean_obliq + 0.00256 * math.cos(omega))
    decl = math.degrees(math.asin(math.sin(obliq) * math.sin(math.radians(app_long))))
    y = math.tan(obliq / 2.0) ** 2
    l0r = math.radians(l0)
    eqt = 4.0 * math.degrees(
        y * math.sin(2 * l0r)
        - 2 * e * math.sin(mr)
        + 4 * e * y * math.sin(mr) * math.cos(2 * l0r)
        - 0.5 * y * y * math.sin(4 * l0r)
        - 1.25 * e * e * math.sin(2 * mr)
    )
    return decl, eqt


def _event_minutes(site: GeoSite, d: date, sign: int) -> float:
    """Minutes after local midnight of sunrise (sign=-1) or sunset (sign=+1)."""
    lat = math.radians(site.latitude)
    jd0 = _julian_day(d)
    minutes = 720.0 + sign * 360.0  # first guess: 06:00 / 18:00 local solar time
    for _ in range(3):
        jd = jd0 + (minutes - site.tz_offset) / 1440.0
        decl, eqt = _solar_terms(jd)
        dr = math.radians(decl)
        cos_ha = (math.cos(math.radians(ZENITH_SUNRISE)) / (math.cos(lat) * math.cos(dr))
                  - math.tan(lat) * math.tan(dr))
        if not -1.0 <= cos_ha <= 1.0:
            raise NoEventError(f"no sunrise/sunset at latitude {site.latitude} on {d}")
        ha = math.degrees(math.acos(cos_ha))
        noon = 720.0 - 4.0 * site.longitude - eqt + site.tz_offset
        minutes = noon + sign * 4.0 * ha
    return minutes


def solar_events(site: GeoSite, d: date) -> DayContext:
    """Sunrise and sunset on civil date ``d`` in the site's fixed local offset."""
    if abs(site.latitude) >= MAX_LATITUDE:
        raise NoEventError(f"latitude {site.latitude} is outside the supported ±{MAX_LATITUDE}°")
    midnight = datetime(d.year, d.month, d.day, tzinfo=site.tzinfo)
    rise = _event_minutes(site, d, -1)
    sett = _event_minutes(site, d, +1)
    return DayContext(
        date=d,
        sunrise=midnight + timedelta(seconds=round(rise * 60.0)),
        sunset=midnight + timedelta(seconds=round(sett * 60.0)),
    )


def date_range(first: date, last: date) -> list[date]:
    if last < first:
        raise ParameterError("last date precedes first date")
    return [first + timedelta(days=i) for i in range((last - first).days + 1)]


def _parse_clock(text: str) -> time:
    parts = [int(p) for p in text.strip().split(":")]
    if len(parts) == 2:
        parts.append(0)
    if len(parts) != 3:
        raise ParameterError(f"cannot parse clock time {text!r}")
    return time(*parts)


def read_sun_table(raw_text: str, tz_offset: int = 0) -> dict[date, DayContext]:
    """Parse a ``date,sunrise_local,sunset_local`` CSV into contexts keyed by date."""
    tz = timezone(timedelta(minutes=tz_offset))
    reader = csv.DictReader(io.StringIO(raw_text))
    if reader.fieldnames is None:
        return {}
    names = {f.strip().lower(): f for f in reader.fieldnames}
    for col in ("date", "sunrise_local", "sunset_local"):
        if col not in names:
            raise ParameterError(f"sun table missing column {col!r}")
    table = {}
    for row in reader:
        d = date.fromisoformat(row[names["date"]].strip())
        rise = datetime.combine(d, _parse_clock(row[names["sunrise_local"]]), tz)
        sett = datetime.combine(d, _parse_clock(row[names["sunset_local"]]), tz)
        table[d] = DayContext(d, rise, sett)
    return table


def format_sun_table(contexts: Iterable[DayContext]) -> str:
    lines = ["date,sunrise_local,sunset_local"]
    for c in contexts:
        lines.append(f"{c.date.isoformat()},{c.sunrise.strftime('%H:%M:%S')},{c.sunset.strftime('%H:%M:%S')}")
    return "\n".join(lines) + "\n"


def build_day_contexts(
    first: date,
    last: date,
    site: GeoSite | None = None,
    table: dict[date, DayContext] | None = None,
    fixed_times: tuple[str, str] | None = None,
    tz_offset: int | None = None,
) -> list[DayContext]:
    """One context per date in [first, last].

    Table rows win over computed events; ``fixed_times`` ("HH:MM", "HH:MM")
    replaces solar events with the same clock times every day.
    """
    table = table or {}
    out = []
    for d in date_range(first, last):
        if d in table:
            out.append(table[d])
        elif fixed_times is not None:
            off = tz_offset if tz_offset is not None else (site.tz_offset if site else 0)
            tz = timezone(timedelta(minutes=off))
            out.append(DayContext(d, datetime.combine(d, _parse_clock(fixed_times[0]), tz),
                                  datetime.combine(d, _parse_clock(fixed_times[1]), tz)))
        elif site is not None:
            out.append(solar_events(site, d))
        else:
            raise CoverageError(f"no sun-table row for {d} and no site to compute it")
    return out


def phase_of(t: datetime, ctx: DayContext) -> str:
    """Photophase iff sunrise ≤ t < sunset. Naive ``t`` is read in the context's offset."""
    if t.tzinfo is None:
        t = t.replace(tzinfo=ctx.sunrise.tzinfo)
    local = t.astimezone(ctx.sunrise.tzinfo)
    if local.date() != ctx.date:
        raise ParameterError(f"{local.isoformat()} is not on {ctx.date}")
    return PHOTOPHASE if ctx.sunrise <= local < ctx.sunset else SCOTOPHASE


def local_day_index(t_ms, tz_offset: int) -> np.ndarray:
    """Days since 1970-01-01 of each UTC millisecond stamp in local time."""
    return np.floor_divide(np.asarray(t_ms, dtype=np.int64) + tz_offset * 60_000, 86_400_000)


def photophase_mask(t_ms, contexts: Sequence[DayContext], tz_offset: int) -> np.ndarray:
    """Vectorised :func:`phase_of` over UTC stamps; True marks photophase."""
    t = np.asarray(t_ms, dtype=np.int64)
    if len(t) == 0:
        return np.zeros(0, dtype=bool)
    epoch = date(1970, 1, 1)
    by_day = {(c.date - epoch).days: c for c in contexts}
    days = local_day_index(t, tz_offset)
    uniq = np.unique(days)
    missing = [int(u) for u in uniq if int(u) not in by_day]
    if missing:
        raise CoverageError(f"no day context for {epoch + timedelta(days=missing[0])}")
    rise = np.array([by_day[int(u)].sunrise_ms for u in uniq], dtype=np.int64)
    sett = np.array([by_day[int(u)].sunset_ms for u in uniq], dtype=np.int64)
    idx = np.searchsorted(uniq, days)
    return (t >= rise[idx]) & (t < sett[idx])


def mean_daylight(contexts: Sequence[DayContext]) -> timedelta:
    total = sum((c.daylight for c in contexts), timedelta())
    return total / len(contexts)
