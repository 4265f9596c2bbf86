"""Calibration metrics, OLS regression against the reference, and the
expanded-uncertainty equivalence check.

Expanded uncertainty at limit value ``L`` (single candidate instrument)::

    u^2 = RSS / (n - 2) - u_ref^2 + (b0 + (b1 - 1) * L)^2      (floored at 0)
    W   = 100 * k * sqrt(u^2) / L                               (k = 2)
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core_data import Channel, hourly_average
from .errors import DegenerateError, InsufficientDataError, ShapeError

RESOLUTIONS = ("15min", "hourly")
COVERAGE_FACTOR = 2.0
# data-quality objectives for the expanded uncertainty, percent
THRESHOLDS = {Channel.NO2: 25.0, Channel.PM10: 50.0, Channel.PM25: 50.0}
# conventional limit values; not taken from any particular campaign
DEFAULT_LIMITS = {Channel.NO2: 40.0, Channel.PM10: 50.0, Channel.PM25: 25.0}


def _vectors(y, yhat, min_n=1):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ShapeError(f"length mismatch {y.size} vs {yhat.size}", module="evaluation")
    if y.size < min_n:
        raise InsufficientDataError(f"need at least {min_n} pairs, got {y.size}", module="evaluation")
    return y, yhat


def r2_direct(y, yhat):
    """Coefficient of determination ``1 - SS_res / SS_tot`` (can be negative)."""
    y, yhat = _vectors(y, yhat, 2)
    y, yhat = y.astype(np.longdouble), yhat.astype(np.longdouble)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise DegenerateError("reference values are constant; R^2 undefined")
    return float(1 - np.sum((y - yhat) ** 2) / ss_tot)


def mae(y, yhat):
    y, yhat = _vectors(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat):
    y, yhat = _vectors(y, yhat)
    d = np.abs(y - yhat)
    scale = d.max()
    if scale == 0 or not np.isfinite(scale):
        return float(scale)
    # scaling keeps tiny or huge residuals from under/overflowing when squared
    return float(scale * np.sqrt(np.mean((d / scale) ** 2)))


@dataclass(frozen=True)
class MetricSet:
    r2_direct: float
    mae: float
    rmse: float
    n: int
    resolution: str = "15min"

    def to_dict(self):
        return asdict(self)


def metric_set(y, yhat, resolution="15min"):
    y, yhat = _vectors(y, yhat, 2)
    return MetricSet(r2_direct(y, yhat), mae(y, yhat), rmse(y, yhat), int(y.size), resolution)


def hourly_pairs(ts, y, yhat):
    """Hourly means of reference and prediction over identical timestamps."""
    hours, y_h = hourly_average(ts, y)
    hours_p, p_h = hourly_average(ts, yhat)
    if not np.array_equal(hours, hours_p):
        raise ShapeError("hourly aggregation misaligned", module="evaluation")
    return hours, y_h, p_h


def evaluate(model, dataset, resolution="15min", predictions=None):
    """Eval-mode metrics of ``model`` on a windowed dataset.

    At ``"hourly"`` resolution predictions and references are both averaged
    to hourly means keyed by target timestamp before scoring.
    """
    if resolution not in RESOLUTIONS:
        raise ValueError(f"resolution must be one of {RESOLUTIONS}")
    if len(dataset) == 0:
        raise InsufficientDataError("empty dataset", module="evaluation")
    yhat = model.predict(dataset.inputs) if predictions is None else np.asarray(predictions)
    y = dataset.targets
    if resolution == "hourly":
        _, y, yhat = hourly_pairs(dataset.target_ts, y, yhat)
        if y.size < 2:
            raise InsufficientDataError(f"only {y.size} complete hour(s) available", module="evaluation")
    return metric_set(y, yhat, resolution)


@dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    r2_regression: float
    residual_sum_squares: float
    n: int

    def predict(self, y_ref):
        return self.intercept + self.slope * np.asarray(y_ref, dtype=np.float64)

    def to_dict(self):
        return asdict(self)


def ols_fit(y_ref, y_pred):
    """Least-squares line ``y_pred = intercept + slope * y_ref``."""
    x, y = _vectors(y_ref, y_pred, 3)
    # extended precision where the platform has it: the intercept is a
    # difference of two means and cancels badly when it is small
    x, y = x.astype(np.longdouble), y.astype(np.longdouble)
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    sxx = np.sum(dx * dx)
    if sxx == 0:
        raise DegenerateError("reference values are constant; regression undefined")
    sxy = np.sum(dx * dy)
    syy = np.sum(dy * dy)
    slope = sxy / sxx
    intercept = my - slope * mx
    resid = dy - slope * dx
    r2 = sxy * sxy / (sxx * syy) if syy > 0 else 0.0
    return OlsFit(float(slope), float(intercept), float(r2), float(np.sum(resid * resid)), int(x.size))


def expanded_uncertainty(fit, y_ref, limit_value, u_ref=0.0, coverage=COVERAGE_FACTOR):
    """Relative expanded uncertainty (percent) at ``limit_value``."""
    if not limit_value > 0:
        raise ValueError("limit_value must be positive")
    n = len(np.asarray(y_ref))
    if n != fit.n:
        raise ShapeError(f"fit used {fit.n} points, got {n} references", module="evaluation")
    if n <= 2:
        raise InsufficientDataError("need more than 2 points", module="evaluation")
    bias = fit.intercept + (fit.slope - 1.0) * limit_value
    u2 = fit.residual_sum_squares / (n - 2) - u_ref**2 + bias**2
    return float(100.0 * coverage * np.sqrt(max(u2, 0.0)) / limit_value)


@dataclass(frozen=True)
class EquivalenceReport:
    fit: OlsFit
    expanded_uncertainty_percent: float
    threshold_percent: float
    passed: bool
    reference_uncertainty_used: float
    limit_value: float | None = None
    channel: str | None = None

    def to_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def equivalence_report(fit, uncertainty_percent, channel, u_ref=0.0, limit_value=None, thresholds=None):
    channel = Channel.parse(channel)
    threshold = (thresholds or THRESHOLDS)[channel]
    return EquivalenceReport(
        fit,
        float(uncertainty_percent),
        threshold,
        bool(uncertainty_percent <= threshold),
        float(u_ref),
        limit_value,
        channel.value,
    )


def assess_equivalence(y_ref, y_pred, channel, limit_value=None, u_ref=0.0):
    """OLS fit, expanded uncertainty and verdict in one call."""
    channel = Channel.parse(channel)
    limit = DEFAULT_LIMITS[channel] if limit_value is None else limit_value
    fit = ols_fit(y_ref, y_pred)
    pct = expanded_uncertainty(fit, y_ref, limit, u_ref)
    return equivalence_report(fit, pct, channel, u_ref, limit)


def write_scatter_csv(path, y_ref, y_pred, fit=None):
    """Points plus the endpoints of the fitted line and the 1:1 line."""
    y_ref, y_pred = _vectors(y_ref, y_pred)
    fit = fit or ols_fit(y_ref, y_pred)
    lo, hi = float(min(y_ref.min(), y_pred.min())), float(max(y_ref.max(), y_pred.max()))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("series", "ref", "calibrated"))
        for a, b in zip(y_ref, y_pred):
            w.writerow(("point", repr(float(a)), repr(float(b))))
        for x in (lo, hi):
            w.writerow(("fit", repr(x), repr(float(fit.predict(x)))))
        for x in (lo, hi):
            w.writerow(("one_to_one", repr(x), repr(x)))
