"""Ingestion, alignment and resampling of co-located sensor/reference series.

Timestamps are integer UTC epoch seconds on a 15-minute (900 s) grid.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import AlignmentError, EmptyInputError, RowError, SchemaError

STEP_SECONDS = 900
SLOTS_PER_HOUR = 3600 // STEP_SECONDS


class Channel(enum.Enum):
    PM25 = "pm25"
    PM10 = "pm10"
    NO2 = "no2"

    @classmethod
    def parse(cls, value):
        if isinstance(value, Channel):
            return value
        key = str(value).strip().lower().replace(".", "").replace("_", "")
        for member in cls:
            if member.value == key or member.name.lower() == key:
                return member
        raise ValueError(f"unknown channel {value!r}; expected pm25, pm10 or no2")

    @property
    def unit(self):
        return "ppb" if self is Channel.NO2 else "ug/m3"

    @property
    def is_pm(self):
        return self is not Channel.NO2

    @property
    def aux_fields(self):
        return ("wev", "aev") if self is Channel.NO2 else ("sfr", "mtf")

    @property
    def signal_fields(self):
        """Raw signal columns in canonical order (conc, aux..., tmp, hmd)."""
        return ("conc",) + self.aux_fields + ("tmp", "hmd")


@dataclass(frozen=True)
class SensorRecord:
    ts: int
    conc: float
    tmp: float
    hmd: float
    sfr: float | None = None
    mtf: float | None = None
    wev: float | None = None
    aev: float | None = None

    def get(self, name):
        return getattr(self, name)


def _readonly(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class AlignedSeries:
    """Sensor signals and reference concentrations sharing one timestamp axis.

    ``signals`` maps each of ``channel.signal_fields`` to a length-T array.
    ``dropped`` lists ``(start_ts, end_ts, side)`` runs that were present on
    only one side during alignment.
    """

    channel: Channel
    ts: np.ndarray
    signals: dict
    reference: np.ndarray
    dropped: tuple = field(default=(), compare=False)

    def __post_init__(self):
        ts = _readonly(self.ts, np.int64)
        ref = _readonly(self.reference)
        missing = [n for n in self.channel.signal_fields if n not in self.signals]
        if missing:
            raise SchemaError(missing[0])
        sig = {n: _readonly(self.signals[n]) for n in self.channel.signal_fields}
        n = len(ts)
        if len(ref) != n or any(len(v) != n for v in sig.values()):
            raise ValueError("signals, reference and timestamps differ in length")
        if n > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(ref)) and all(np.all(np.isfinite(v)) for v in sig.values())):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "signals", sig)

    def __len__(self):
        return len(self.ts)

    @property
    def is_uniform(self):
        return len(self.ts) < 2 or bool(np.all(np.diff(self.ts) == STEP_SECONDS))

    @property
    def records(self):
        names = self.channel.signal_fields
        return [
            SensorRecord(ts=int(t), **{n: float(self.signals[n][i]) for n in names})
            for i, t in enumerate(self.ts)
        ]

    def slice(self, start, stop):
        return AlignedSeries(
            self.channel,
            self.ts[start:stop],
            {k: v[start:stop] for k, v in self.signals.items()},
            self.reference[start:stop],
        )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def parse_timestamp(text):
    """Parse ``YYYY-MM-DDTHH:MM:SSZ`` or integer epoch seconds."""
    text = text.strip()
    if not text:
        raise ValueError("empty timestamp")
    if text.lstrip("-").isdigit():
        return int(text)
    try:
        dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ")
    except ValueError:
        raise ValueError(f"unparseable timestamp {text!r}") from None
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def format_timestamp(ts):
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _read_rows(path, required):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyInputError(f"{path}: empty file", module="core_data")
        header = [h.strip() for h in header]
        for col in required:
            if col not in header:
                raise SchemaError(col, f"{path}: missing required column {col!r}")
        index = {col: header.index(col) for col in required}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                yield lineno, {col: row[i] for col, i in index.items()}
            except IndexError:
                raise RowError(lineno, f"expected {len(header)} cells, got {len(row)}") from None


def _number(text, col, lineno):
    try:
        value = float(text)
    except ValueError:
        raise RowError(lineno, f"column {col!r}: cannot parse {text!r}") from None
    if not math.isfinite(value):
        raise RowError(lineno, f"column {col!r}: non-finite value {text!r}")
    return value


def parse_csv(path, channel):
    """Read a sensor CSV into a list of :class:`SensorRecord` in file order."""
    channel = Channel.parse(channel)
    required = ("ts",) + channel.signal_fields
    records = []
    for lineno, cells in _read_rows(path, required):
        try:
            ts = parse_timestamp(cells["ts"])
        except ValueError as exc:
            raise RowError(lineno, str(exc)) from None
        values = {c: _number(cells[c], c, lineno) for c in channel.signal_fields}
        records.append(SensorRecord(ts=ts, **values))
    if not records:
        raise EmptyInputError(f"{path}: no data rows", module="core_data")
    return records


def parse_reference_csv(path):
    """Read a reference CSV (``ts,ref``) into ``[(ts, ref), ...]``."""
    out = []
    for lineno, cells in _read_rows(path, ("ts", "ref")):
        try:
            ts = parse_timestamp(cells["ts"])
        except ValueError as exc:
            raise RowError(lineno, str(exc)) from None
        out.append((ts, _number(cells["ref"], "ref", lineno)))
    if not out:
        raise EmptyInputError(f"{path}: no data rows", module="core_data")
    return out


def detect_channel_family(path):
    """Return ``"no2"`` or ``"pm"`` from the auxiliary columns of a sensor CSV."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        header = {h.strip() for h in next(csv.reader(fh), [])}
    if {"wev", "aev"} <= header:
        return "no2"
    if {"sfr", "mtf"} <= header:
        return "pm"
    return None


def write_sensor_csv(path, series_or_records, channel=None):
    if isinstance(series_or_records, AlignedSeries):
        channel = series_or_records.channel
        records = series_or_records.records
    else:
        records = list(series_or_records)
        channel = Channel.parse(channel)
    cols = channel.signal_fields
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("ts",) + cols)
        for r in records:
            w.writerow([format_timestamp(r.ts)] + [repr(float(r.get(c))) for c in cols])


def write_reference_csv(path, ts, values):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("ts", "ref"))
        for t, v in zip(ts, values):
            w.writerow((format_timestamp(t), repr(float(v))))


# ---------------------------------------------------------------------------
# Alignment, gap handling, aggregation
# ---------------------------------------------------------------------------


def _runs(ts_values):
    """Group sorted timestamps into runs of consecutive grid slots."""
    runs = []
    for t in ts_values:
        if runs and t - runs[-1][1] == STEP_SECONDS:
            runs[-1][1] = t
        else:
            runs.append([t, t])
    return [tuple(r) for r in runs]


def align(sensor, reference, channel):
    """Inner-join sensor records and reference pairs on identical timestamps."""
    channel = Channel.parse(channel)
    if not sensor or not reference:
        raise AlignmentError("both sensor and reference inputs must be non-empty")
    s_map = {}
    for rec in sensor:
        if rec.ts in s_map:
            raise AlignmentError(f"duplicate sensor timestamp {format_timestamp(rec.ts)}")
        s_map[rec.ts] = rec
    r_map = {}
    for ts, value in reference:
        if ts in r_map:
            raise AlignmentError(f"duplicate reference timestamp {format_timestamp(ts)}")
        r_map[ts] = value
    off_grid = [t for t in list(s_map) + list(r_map) if t % STEP_SECONDS]
    if off_grid:
        raise AlignmentError(f"timestamp {format_timestamp(off_grid[0])} is not on the 15-minute grid")
    common = sorted(s_map.keys() & r_map.keys())
    if not common:
        raise AlignmentError("sensor and reference timestamps do not overlap")
    dropped = [(a, b, "sensor") for a, b in _runs(sorted(s_map.keys() - r_map.keys()))]
    dropped += [(a, b, "reference") for a, b in _runs(sorted(r_map.keys() - s_map.keys()))]
    dropped.sort()
    signals = {n: [s_map[t].get(n) for t in common] for n in channel.signal_fields}
    for n, vals in signals.items():
        if any(v is None for v in vals):
            raise SchemaError(n)
    return AlignedSeries(
        channel,
        np.array(common, dtype=np.int64),
        signals,
        np.array([r_map[t] for t in common]),
        dropped=tuple(dropped),
    )


def fill_gaps(series, max_gap_steps=2):
    """Interpolate short gaps and split the series at long ones.

    A gap of ``k`` missing slots with ``k <= max_gap_steps`` is filled by
    linear interpolation on every numeric field; longer gaps end a segment.
    Returns a list of uniformly spaced segments in chronological order.
    """
    if max_gap_steps < 0:
        raise ValueError("max_gap_steps must be >= 0")
    if len(series) == 0:
        return []
    ts = series.ts
    missing = np.diff(ts) // STEP_SECONDS - 1
    breaks = np.flatnonzero(missing > max_gap_steps) + 1
    bounds = [0, *breaks.tolist(), len(ts)]
    segments = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        seg_ts = ts[lo:hi]
        if np.all(np.diff(seg_ts) == STEP_SECONDS):
            segments.append(series.slice(lo, hi) if (lo, hi) != (0, len(ts)) else series)
            continue
        grid = np.arange(seg_ts[0], seg_ts[-1] + STEP_SECONDS, STEP_SECONDS, dtype=np.int64)
        interp = lambda v: np.interp(grid, seg_ts, v[lo:hi])  # noqa: E731
        segments.append(
            AlignedSeries(
                series.channel,
                grid,
                {k: interp(v) for k, v in series.signals.items()},
                interp(series.reference),
            )
        )
    return segments


def hourly_average(ts, values, min_valid=3):
    """Average 15-minute values into hour-start-stamped hourly means.

    Hours with fewer than ``min_valid`` finite slots are omitted.
    """
    ts = np.asarray(ts, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if ts.shape != values.shape:
        raise ValueError("ts and values differ in length")
    ok = np.isfinite(values)
    ts, values = ts[ok], values[ok]
    if ts.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    hours = ts - ts % 3600
    uniq, inverse, counts = np.unique(hours, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=values, minlength=len(uniq))
    keep = counts >= min_valid
    return uniq[keep], sums[keep] / counts[keep]


def series_from_arrays(channel, ts, signals, reference):
    """Convenience constructor used by the generator and tests."""
    return AlignedSeries(Channel.parse(channel), ts, signals, reference)


__all__ = [
    "STEP_SECONDS",
    "Channel",
    "SensorRecord",
    "AlignedSeries",
    "parse_timestamp",
    "format_timestamp",
    "parse_csv",
    "parse_reference_csv",
    "detect_channel_family",
    "write_sensor_csv",
    "write_reference_csv",
    "align",
    "fill_gaps",
    "hourly_average",
    "series_from_arrays",
]
