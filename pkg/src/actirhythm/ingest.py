"""
Parsing of IMU data-logger files and behavior label files.

Acceleration is held in m/s² internally. Timestamps are UTC, stored as
integer milliseconds since the Unix epoch; the local-time offset travels
with the series but is only applied by the rhythm analytics.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    CoverageError,
    EmptyInputError,
    LabelConflictError,
    OrderingError,
    ParameterError,
    SchemaError,
    TaxonomyError,
)

G = 9.80665  # standard gravity, m/s²
SENSOR_RANGE_G = 2.0
RANGE_MARGIN = 0.05
MAX_ABS_ACCEL = SENSOR_RANGE_G * G * (1.0 + RANGE_MARGIN)

UNITS = ("milli_g", "m_per_s2")

DEFAULT_TAXONOMY: dict[str, str] = {
    "resting": "inactive",
    "sleeping": "inactive",
    "walking": "active",
    "grooming": "active",
    "eating": "active",
    "drinking": "active",
    "jumping": "active",
}

_TIME_COLUMNS = ("t_iso", "timestamp", "datetime", "t")
_DATE_COLUMNS = ("date", "rtcdate")
_CLOCK_COLUMNS = ("time", "rtctime")
_AXIS_COLUMNS = {
    "ax": ("ax", "accx", "acc_x"),
    "ay": ("ay", "accy", "acc_y"),
    "az": ("az", "accz", "acc_z"),
}
_TEMP_COLUMNS = ("temp", "imu_degc", "temperature")


def milli_g_to_mps2(value):
    return np.asarray(value, dtype=float) * (G / 1000.0)


def mps2_to_milli_g(value):
    return np.asarray(value, dtype=float) * (1000.0 / G)


def format_timestamp(t_ms: int) -> str:
    """Canonical text form of a millisecond UTC timestamp."""
    t_ms = int(t_ms)
    dt = datetime.fromtimestamp(t_ms // 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{t_ms % 1000:03d}Z"


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 timestamp into UTC milliseconds.

    Naive timestamps are taken as UTC.
    """
    text = text.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def _format_timestamps(t_ms: np.ndarray) -> np.ndarray:
    text = np.datetime_as_string(np.asarray(t_ms, dtype="datetime64[ms]"), unit="ms")
    return np.char.add(text, "Z")


@dataclass(frozen=True)
class ImuSample:
    t: int  # UTC milliseconds
    ax: float
    ay: float
    az: float
    temp: float | None = None


@dataclass(frozen=True, eq=False)
class SampleSeries:
    """Timestamped 3-axis acceleration for one cat.

    ``t_ms`` is int64 UTC milliseconds, ``acc`` an (n, 3) float array in m/s².
    Arrays are made read-only on construction.
    """

    cat_id: str
    t_ms: np.ndarray
    acc: np.ndarray
    temp: np.ndarray | None = None
    nominal_period: float = 5.0
    tz_offset: int = 0
    skipped_count: int = 0

    def __post_init__(self):
        t = np.ascontiguousarray(self.t_ms, dtype=np.int64)
        acc = np.ascontiguousarray(self.acc, dtype=float).reshape(-1, 3)
        if len(t) != len(acc):
            raise ParameterError("timestamp and acceleration lengths differ")
        if self.nominal_period <= 0:
            raise ParameterError("nominal_period must be positive")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise OrderingError("timestamps must be strictly increasing")
        t.setflags(write=False)
        acc.setflags(write=False)
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "acc", acc)
        if self.temp is not None:
            temp = np.ascontiguousarray(self.temp, dtype=float)
            temp.setflags(write=False)
            object.__setattr__(self, "temp", temp)

    def __len__(self):
        return len(self.t_ms)

    def __getitem__(self, i: int) -> ImuSample:
        temp = None if self.temp is None else float(self.temp[i])
        ax, ay, az = self.acc[i]
        return ImuSample(int(self.t_ms[i]), float(ax), float(ay), float(az), temp)

    def __iter__(self) -> Iterator[ImuSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[ImuSample]:
        return list(self)

    def slice(self, start: int, stop: int) -> "SampleSeries":
        return SampleSeries(
            cat_id=self.cat_id,
            t_ms=self.t_ms[start:stop],
            acc=self.acc[start:stop],
            temp=None if self.temp is None else self.temp[start:stop],
            nominal_period=self.nominal_period,
            tz_offset=self.tz_offset,
        )

    @classmethod
    def from_samples(cls, samples: Sequence[ImuSample], cat_id: str = "", **kwargs) -> "SampleSeries":
        t = np.array([s.t for s in samples], dtype=np.int64)
        acc = np.array([(s.ax, s.ay, s.az) for s in samples], dtype=float).reshape(-1, 3)
        temps = [s.temp for s in samples]
        temp = None if any(x is None for x in temps) or not temps else np.array(temps, dtype=float)
        return cls(cat_id=cat_id, t_ms=t, acc=acc, temp=temp, **kwargs)


@dataclass(frozen=True, eq=False)
class Session:
    series: SampleSeries
    start: int
    end: int
    gap_before: float  # seconds since the previous session's last sample; 0 for the first
    first_index: int = 0

    def __len__(self):
        return len(self.series)


@dataclass(frozen=True)
class LabelEvent:
    behavior: str
    start: int  # UTC milliseconds
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise ParameterError(f"label event {self.behavior!r} ends before it starts")


@dataclass(frozen=True, eq=False)
class LabelTrack:
    """1 Hz binary behavior labels: ``values[i]`` covers [start + i s, start + (i+1) s)."""

    start_ms: int
    values: np.ndarray
    period: float = 1.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.uint8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    @property
    def end_ms(self) -> int:
        return self.start_ms + int(round(len(self.values) * self.period * 1000))


@dataclass(frozen=True)
class CatProfile:
    cat_id: str
    sex: str
    age_years: float
    notes: str = ""

    def __post_init__(self):
        if self.sex not in ("female", "male"):
            raise ParameterError(f"sex must be 'female' or 'male', got {self.sex!r}")
        if self.age_years < 0:
            raise ParameterError("age_years must be non-negative")


def _read_text(raw_text: str | IO[str]) -> str:
    if isinstance(raw_text, str):
        return raw_text
    return raw_text.read()


def _find_column(columns: Mapping[str, str], candidates: Sequence[str]) -> str | None:
    for name in candidates:
        if name in columns:
            return columns[name]
    return None


def _parse_clock(date: pd.Series, clock: pd.Series, date_format: str | None) -> pd.Series:
    date = date.str.strip()
    clock = clock.str.strip()
    clock = clock.where(clock.str.contains(".", regex=False), clock + ".0")
    if date_format is None:
        sample = date[date.str.len() > 0]
        first = sample.iloc[0] if len(sample) else ""
        date_format = "%d/%m/%Y" if "/" in first else "%Y-%m-%d"
    return pd.to_datetime(date + " " + clock, format=f"{date_format} %H:%M:%S.%f",
                          errors="coerce", utc=True)


def parse_imu_log(
    raw_text: str | IO[str],
    units: str = "m_per_s2",
    tz_offset: int = 0,
    *,
    cat_id: str = "",
    delimiter: str = ",",
    nominal_period: float = 5.0,
    reorder_window: int = 2,
    date_format: str | None = None,
) -> SampleSeries:
    """Parse a delimited IMU log into a :class:`SampleSeries`.

    The header must name a timestamp (``t_iso``) or a ``date`` + ``time`` pair,
    plus ``aX``, ``aY`` and ``aZ`` (case-insensitive; OpenLog Artemis names
    such as ``rtcDate`` are recognised). Rows that fail to parse, are
    non-finite, exceed the ±2 g sensor range, or repeat a timestamp are
    dropped and counted in ``skipped_count``.

    Parameters
    ----------
    units : {"milli_g", "m_per_s2"}
        Unit of the acceleration columns in the file.
    tz_offset : int
        Minutes east of UTC of the study site; stored, not applied.
    reorder_window : int
        Largest tolerated displacement (in rows) of an out-of-order sample.
    date_format : str, optional
        strptime format of the date column; inferred when omitted.
    """
    if units not in UNITS:
        raise ParameterError(f"units must be one of {UNITS}, got {units!r}")
    text = _read_text(raw_text)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyInputError("input is empty")
    n_data_lines = len(lines) - 1

    df = pd.read_csv(
        io.StringIO("\n".join(lines)),
        sep=delimiter,
        dtype=str,
        keep_default_na=False,
        on_bad_lines="skip",
        skipinitialspace=True,
        engine="c",
    )
    columns = {str(c).strip().lower(): c for c in df.columns}

    axis_cols = {}
    for axis, names in _AXIS_COLUMNS.items():
        col = _find_column(columns, names)
        if col is None:
            raise SchemaError(f"missing acceleration column {axis!r}; header is {list(df.columns)}")
        axis_cols[axis] = col

    time_col = _find_column(columns, _TIME_COLUMNS)
    if time_col is not None:
        stamps = df[time_col].str.strip()
        ts = pd.to_datetime(stamps, format="ISO8601", errors="coerce", utc=True)
    else:
        date_col = _find_column(columns, _DATE_COLUMNS)
        clock_col = _find_column(columns, _CLOCK_COLUMNS)
        if date_col is None or clock_col is None:
            raise SchemaError(f"missing date/time columns; header is {list(df.columns)}")
        ts = _parse_clock(df[date_col], df[clock_col], date_format)

    acc = np.column_stack(
        [pd.to_numeric(df[axis_cols[a]].str.strip(), errors="coerce").to_numpy(dtype=float)
         for a in ("ax", "ay", "az")]
    ) if len(df) else np.empty((0, 3))
    if units == "milli_g":
        acc = milli_g_to_mps2(acc)

    temp_col = _find_column(columns, _TEMP_COLUMNS)
    temp = None
    if temp_col is not None and len(df):
        temp = pd.to_numeric(df[temp_col].str.strip(), errors="coerce").to_numpy(dtype=float)

    valid = ts.notna().to_numpy()
    valid &= np.all(np.isfinite(acc), axis=1)
    with np.errstate(invalid="ignore"):
        valid &= np.all(np.abs(acc) <= MAX_ABS_ACCEL, axis=1)
    if not valid.any():
        raise EmptyInputError("no parseable rows")

    t_ms = ts[valid].to_numpy(dtype="datetime64[ms]").astype(np.int64)
    acc = acc[valid]
    if temp is not None:
        temp = temp[valid]

    order = np.argsort(t_ms, kind="stable")
    displacement = np.abs(order - np.arange(len(order)))
    if len(order) and displacement.max() > reorder_window:
        bad = int(np.argmax(displacement))
        raise OrderingError(
            f"timestamp {format_timestamp(t_ms[order[bad]])} is displaced by "
            f"{int(displacement[bad])} rows (reorder_window={reorder_window})"
        )
    t_ms = t_ms[order]
    acc = acc[order]
    if temp is not None:
        temp = temp[order]

    keep = np.ones(len(t_ms), dtype=bool)
    keep[1:] = np.diff(t_ms) != 0
    t_ms, acc = t_ms[keep], acc[keep]
    if temp is not None:
        temp = temp[keep]

    return SampleSeries(
        cat_id=cat_id,
        t_ms=t_ms,
        acc=acc,
        temp=temp,
        nominal_period=nominal_period,
        tz_offset=tz_offset,
        skipped_count=n_data_lines - len(t_ms),
    )


def read_imu_file(path: str | Path, **kwargs) -> SampleSeries:
    path = Path(path)
    kwargs.setdefault("cat_id", path.stem)
    return parse_imu_log(path.read_text(), **kwargs)


def format_samples_csv(series: SampleSeries) -> str:
    """Render a series in the canonical CSV layout (t_iso, ax, ay, az; m/s², 6 dp)."""
    buf = io.StringIO()
    buf.write("t_iso,ax,ay,az\n")
    if len(series):
        stamps = _format_timestamps(series.t_ms)
        table = pd.DataFrame({
            "t_iso": stamps,
            "ax": series.acc[:, 0],
            "ay": series.acc[:, 1],
            "az": series.acc[:, 2],
        })
        table.to_csv(buf, header=False, index=False, float_format="%.6f", lineterminator="\n")
    return buf.getvalue()


def write_samples_csv(series: SampleSeries, path: str | Path) -> None:
    Path(path).write_text(format_samples_csv(series))


def assemble_sessions(series: SampleSeries, gap_threshold: float = 15.0) -> list[Session]:
    """Split a series into maximal runs whose inter-sample interval is ≤ ``gap_threshold`` s."""
    if gap_threshold <= 0:
        raise ParameterError("gap_threshold must be positive")
    n = len(series)
    if n == 0:
        return []
    dt = np.diff(series.t_ms)
    breaks = np.flatnonzero(dt > gap_threshold * 1000.0) + 1
    bounds = np.concatenate(([0], breaks, [n]))
    sessions = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        gap = 0.0 if a == 0 else (series.t_ms[a] - series.t_ms[a - 1]) / 1000.0
        sessions.append(Session(
            series=series.slice(int(a), int(b)),
            start=int(series.t_ms[a]),
            end=int(series.t_ms[b - 1]),
            gap_before=gap,
            first_index=int(a),
        ))
    return sessions


def _label_time(text: str) -> int:
    text = text.strip()
    try:
        seconds = float(text)
    except ValueError:
        return parse_timestamp(text)
    if not math.isfinite(seconds):
        raise ParameterError(f"non-finite label time {text!r}")
    return int(round(seconds * 1000))


def read_label_events(raw_text: str | IO[str]) -> list[LabelEvent]:
    """Read ``behavior,start,end`` rows. Times are ISO-8601 or plain seconds."""
    text = _read_text(raw_text)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    names = {f.strip().lower(): f for f in reader.fieldnames}
    missing = [c for c in ("behavior", "start", "end") if c not in names]
    if missing:
        raise SchemaError(f"label file missing columns {missing}")
    events = []
    for row in reader:
        behavior = (row[names["behavior"]] or "").strip()
        if not behavior:
            continue
        events.append(LabelEvent(
            behavior=behavior,
            start=_label_time(row[names["start"]]),
            end=_label_time(row[names["end"]]),
        ))
    return events


def labels_to_track(events: Sequence[LabelEvent], taxonomy: Mapping[str, str] = DEFAULT_TAXONOMY) -> LabelTrack:
    """Expand label events into a 1 Hz binary track (1 = active)."""
    tax = {k.lower(): v for k, v in taxonomy.items()}
    unknown = sorted({e.behavior for e in events if e.behavior.lower() not in tax})
    if unknown:
        raise TaxonomyError(f"behaviors not in taxonomy: {', '.join(unknown)}")
    bad_states = sorted({v for v in tax.values() if v not in ("active", "inactive")})
    if bad_states:
        raise ParameterError(f"taxonomy states must be 'active' or 'inactive', got {bad_states}")
    spans = [e for e in events if e.end > e.start]
    if not spans:
        return LabelTrack(start_ms=0, values=np.empty(0, dtype=np.uint8))

    origin = min(e.start for e in spans)
    horizon = max(e.end for e in spans)
    n = int(round((horizon - origin) / 1000.0))
    values = np.full(n, 255, dtype=np.uint8)  # 255 marks an unlabeled second
    for e in sorted(spans, key=lambda e: (e.start, e.end)):
        a = int(round((e.start - origin) / 1000.0))
        b = int(round((e.end - origin) / 1000.0))
        state = 1 if tax[e.behavior.lower()] == "active" else 0
        seg = values[a:b]
        clash = (seg != 255) & (seg != state)
        if clash.any():
            first = a + int(np.argmax(clash))
            raise LabelConflictError(
                f"{e.behavior!r} conflicts with an overlapping event over "
                f"[{format_timestamp(origin + first * 1000)}, {format_timestamp(e.end)})"
            )
        seg[:] = state
    holes = np.flatnonzero(values == 255)
    if len(holes):
        raise CoverageError(
            f"label events leave second {format_timestamp(origin + int(holes[0]) * 1000)} unlabeled"
        )
    return LabelTrack(start_ms=origin, values=values)


def parse_label_log(raw_text: str | IO[str], taxonomy: Mapping[str, str] = DEFAULT_TAXONOMY) -> LabelTrack:
    """Parse a label CSV straight into its 1 Hz binary track."""
    return labels_to_track(read_label_events(raw_text), taxonomy)


def format_label_csv(events: Sequence[LabelEvent]) -> str:
    lines = ["behavior,start,end"]
    lines += [f"{e.behavior},{format_timestamp(e.start)},{format_timestamp(e.end)}" for e in events]
    return "\n".join(lines) + "\n"
