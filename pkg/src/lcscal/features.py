"""Engineered feature matrix: raw signals, percentage changes, calendar
harmonics, rush-hour flag, sensor interactions and sensed-concentration lags.

Column order is fixed (see :func:`feature_names`) so that a serialized model
can bind to column positions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_data import Channel, format_timestamp
from .errors import DomainError, InsufficientDataError

log = logging.getLogger(__name__)

PERIODS = {"hour": 24, "day": 7, "month": 12, "season": 4}
DEFAULT_RUSH_HOURS = frozenset({7, 8, 9, 16, 17, 18})

# name -> (numerator field, operator, other field); "/" means a/(b+eps)
INTERACTIONS = {
    "pm": (("mtf_over_tmp", "mtf", "/", "tmp"), ("sfr_x_hmd", "sfr", "*", "hmd")),
    "no2": (("wev_x_tmp", "wev", "*", "tmp"), ("aev_over_hmd", "aev", "/", "hmd")),
}


@dataclass(frozen=True)
class FeatureSpec:
    epsilon: float = 1e-6
    lags: tuple = (1, 2, 3)
    rush_hours: frozenset = DEFAULT_RUSH_HOURS
    utc_offset_hours: float = 0.0
    pct_clip: float = 10.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        lags = tuple(int(k) for k in self.lags)
        if any(k <= 0 for k in lags) or len(set(lags)) != len(lags):
            raise ValueError("lags must be positive and distinct")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "rush_hours", frozenset(int(h) for h in self.rush_hours))

    @property
    def warmup_rows(self):
        """Leading rows lost to percentage changes and lag features."""
        return max(2, max(self.lags, default=0) + 1)

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "lags": list(self.lags),
            "rush_hours": sorted(self.rush_hours),
            "utc_offset_hours": self.utc_offset_hours,
            "pct_clip": self.pct_clip,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lags" in d:
            d["lags"] = tuple(d["lags"])
        if "rush_hours" in d:
            d["rush_hours"] = frozenset(d["rush_hours"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """T x F feature rows with their timestamps and segment labels."""

    names: tuple
    data: np.ndarray
    channel: Channel
    ts: np.ndarray = None
    segment: np.ndarray = field(default=None)

    def __post_init__(self):
        names = tuple(self.names)
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != len(names):
            raise ValueError(f"data shape {data.shape} does not match {len(names)} names")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature matrix contains non-finite cells")
        n = data.shape[0]
        ts = np.zeros(n, np.int64) if self.ts is None else np.asarray(self.ts, np.int64)
        seg = np.zeros(n, np.int64) if self.segment is None else np.asarray(self.segment, np.int64)
        if len(ts) != n or len(seg) != n:
            raise ValueError("ts/segment length differs from row count")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "segment", seg)

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_features(self):
        return self.data.shape[1]

    def rows(self, start, stop):
        return FeatureMatrix(
            self.names, self.data[start:stop], self.channel, self.ts[start:stop], self.segment[start:stop]
        )

    def with_data(self, data):
        return FeatureMatrix(self.names, data, self.channel, self.ts, self.segment)

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("ts",) + self.names)
            for t, row in zip(self.ts, self.data):
                w.writerow([format_timestamp(t)] + [repr(float(v)) for v in row])


def guard_denominator(d, epsilon):
    """Replace ``|d| < epsilon`` by ``sign(d) * epsilon`` (zero maps to +epsilon)."""
    d = np.asarray(d, dtype=np.float64)
    small = np.abs(d) < epsilon
    return np.where(small, np.where(d < 0, -epsilon, epsilon), d)


def pct_change(x, lag, epsilon=1e-6, clip=10.0):
    """Fractional change over ``lag`` steps, NaN for the first ``lag`` entries."""
    x = np.asarray(x, dtype=np.float64)
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if len(x) <= lag:
        raise InsufficientDataError(f"need more than {lag} values", module="features")
    out = np.full(len(x), np.nan)
    prev = guard_denominator(x[:-lag], epsilon)
    out[lag:] = np.clip((x[lag:] - x[:-lag]) / prev, -clip, clip)
    return out


def cyclical_encode(value, period):
    if period not in PERIODS.values():
        raise DomainError(f"unsupported period {period}")
    value = np.asarray(value)
    if np.any(value < 0) or np.any(value >= period):
        raise DomainError(f"value out of range [0, {period})")
    angle = 2.0 * np.pi * value / period
    s, c = np.sin(angle), np.cos(angle)
    if s.ndim == 0:
        return float(s), float(c)
    return s, c


def season_of_month(month0):
    """0-based month to season index: DJF=0, MAM=1, JJA=2, SON=3."""
    return ((np.asarray(month0) + 1) % 12) // 3


def local_calendar(ts, utc_offset_hours=0.0):
    """Local hour (0-23), weekday (Mon=0), month (0-11) and season per timestamp."""
    t = np.asarray(ts, dtype=np.int64) + int(round(utc_offset_hours * 3600))
    days = np.floor_divide(t, 86400)
    hour = np.floor_divide(np.mod(t, 86400), 3600)
    weekday = np.mod(days + 3, 7)  # 1970-01-01 was a Thursday
    month = np.mod(t.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64), 12)
    return hour, weekday, month, season_of_month(month)


def rush_hour(ts, spec=FeatureSpec()):
    hour, weekday, _, _ = local_calendar(ts, spec.utc_offset_hours)
    flag = np.isin(hour, sorted(spec.rush_hours)) & (weekday < 5)
    out = flag.astype(np.float64)
    return float(out) if out.ndim == 0 else out


def _interaction_family(channel):
    return "pm" if Channel.parse(channel).is_pm else "no2"


def _combine(a, op, b, epsilon):
    if op == "*":
        return a * b
    return a / guard_denominator(b + epsilon, epsilon)


def interactions(record, spec=FeatureSpec(), channel=None):
    """Interaction features of one record as an ordered ``{name: value}`` dict."""
    if channel is None:
        channel = Channel.NO2 if record.wev is not None else Channel.PM25
    out = {}
    for name, a, op, b in INTERACTIONS[_interaction_family(channel)]:
        va, vb = record.get(a), record.get(b)
        if va is None or vb is None:
            raise DomainError(f"record lacks {a!r}/{b!r} needed for {name}")
        out[name] = float(_combine(np.float64(va), op, np.float64(vb), spec.epsilon))
    return out


def feature_names(channel, spec=FeatureSpec()):
    channel = Channel.parse(channel)
    raw = list(channel.signal_fields)
    names = list(raw)
    for n in raw:
        names += [f"{n}_pc15", f"{n}_pc30"]
    for p in PERIODS:
        names += [f"{p}_sin", f"{p}_cos"]
    names.append("rush_hour")
    names += [n for n, *_ in INTERACTIONS[_interaction_family(channel)]]
    names += [f"conc_lag{k}" for k in spec.lags]
    names += [f"conc_lag{k}_pc15" for k in spec.lags]
    return tuple(names)


def build_feature_matrix(series, spec=FeatureSpec(), segment_id=0):
    """Feature matrix of one uniformly spaced segment.

    Row ``t`` depends only on series values at indices ``<= t``; the first
    ``spec.warmup_rows`` rows are dropped.
    """
    if not series.is_uniform:
        raise ValueError("series has gaps; run fill_gaps first")
    T = len(series)
    skip = spec.warmup_rows
    if T <= skip:
        raise InsufficientDataError(
            f"series of length {T} leaves no rows after dropping {skip} warm-up rows", module="features"
        )
    eps, clip = spec.epsilon, spec.pct_clip
    sig = series.signals
    cols = [sig[n] for n in series.channel.signal_fields]
    for n in series.channel.signal_fields:
        cols += [pct_change(sig[n], 1, eps, clip), pct_change(sig[n], 2, eps, clip)]
    hour, weekday, month, season = local_calendar(series.ts, spec.utc_offset_hours)
    for value, p in zip((hour, weekday, month, season), PERIODS.values()):
        cols += list(cyclical_encode(value, p))
    cols.append(rush_hour(series.ts, spec))
    for _, a, op, b in INTERACTIONS[_interaction_family(series.channel)]:
        cols.append(_combine(sig[a], op, sig[b], eps))
    conc = sig["conc"]
    conc_pc15 = pct_change(conc, 1, eps, clip)
    for k in spec.lags:
        cols.append(np.concatenate([np.full(k, np.nan), conc[:-k]]))
    for k in spec.lags:
        cols.append(np.concatenate([np.full(k, np.nan), conc_pc15[:-k]]))
    data = np.column_stack(cols)[skip:]
    return FeatureMatrix(
        feature_names(series.channel, spec),
        data,
        series.channel,
        series.ts[skip:],
        np.full(T - skip, segment_id, dtype=np.int64),
    )


def build_features(segments, spec=FeatureSpec()):
    """Featurize gap-free segments and stack them.

    Returns ``(matrix, targets)`` where ``targets`` holds the reference value
    of each row. Segments too short to yield any row are skipped.
    """
    mats, targets = [], []
    for i, seg in enumerate(segments):
        try:
            m = build_feature_matrix(seg, spec, segment_id=i)
        except InsufficientDataError:
            log.warning("segment %d (%d rows) too short for features, skipped", i, len(seg))
            continue
        mats.append(m)
        targets.append(np.asarray(seg.reference)[spec.warmup_rows:])
    if not mats:
        raise InsufficientDataError("no segment long enough to build features", module="features")
    first = mats[0]
    matrix = FeatureMatrix(
        first.names,
        np.concatenate([m.data for m in mats]),
        first.channel,
        np.concatenate([m.ts for m in mats]),
        np.concatenate([m.segment for m in mats]),
    )
    return matrix, np.concatenate(targets)
