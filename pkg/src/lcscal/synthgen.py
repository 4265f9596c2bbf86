"""Seeded synthetic co-location data with known sensor distortions.

The reference concentration is a sum of diurnal and weekly harmonics, AR(1)
noise and sparse exponentially decaying peaks, clipped at zero. The sensor
sees it through a gain, a humidity-dependent multiplicative error, an offset,
a slow sinusoidal drift and white noise::

    s(t) = gain * r(t) * (1 + gamma * (hmd(t) - 50) / 50) + offset
           + drift_amp * sin(2 pi t / drift_period) + N(0, noise_sigma)

All randomness comes from numpy's PCG64 generator seeded with ``seed`` and is
drawn in a fixed order, so output is reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .core_data import STEP_SECONDS, AlignedSeries, Channel, parse_timestamp, write_reference_csv, write_sensor_csv

SAMPLES_PER_DAY = 86400 // STEP_SECONDS

# level multipliers relative to the PM2.5 defaults
_CHANNEL_SCALE = {"pm25": 1.0, "pm10": 1.6, "no2": 1.8}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    days: int = 30
    channel: str = "pm25"
    start: str = "2021-03-01T00:00:00Z"
    base: float = 12.0
    diurnal_amp: float = 6.0
    weekly_amp: float = 2.0
    ar1_coeff: float = 0.9
    ar1_sigma: float = 1.5
    peak_rate: float = 1.0
    peak_amp: float = 4.0
    peak_decay_hours: float = 2.0
    sensor_gain: float = 1.4
    sensor_offset: float = 3.0
    humidity_gamma: float = 0.8
    drift_amp: float = 1.0
    drift_period_days: float = 14.0
    noise_sigma: float = 0.5
    tmp_mean: float = 12.0
    tmp_amp: float = 5.0
    hmd_mean: float = 70.0
    hmd_amp: float = 12.0
    hmd_synoptic_sigma: float = 10.0

    def __post_init__(self):
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if not 0.0 <= self.ar1_coeff < 1.0:
            raise ValueError("ar1_coeff must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        Channel.parse(self.channel)

    @classmethod
    def for_channel(cls, channel, **overrides):
        """Defaults with concentration levels scaled for ``channel``."""
        ch = Channel.parse(channel).value
        k = _CHANNEL_SCALE[ch]
        scaled = {
            "base": cls.base * k,
            "diurnal_amp": cls.diurnal_amp * k,
            "weekly_amp": cls.weekly_amp * k,
            "ar1_sigma": cls.ar1_sigma * k,
            "peak_amp": cls.peak_amp * k,
            "sensor_offset": cls.sensor_offset * k,
            "drift_amp": cls.drift_amp * k,
            "noise_sigma": cls.noise_sigma * k,
        }
        scaled.update(overrides)
        return cls(channel=ch, **scaled)

    def undistorted(self):
        return replace(self, sensor_gain=1.0, sensor_offset=0.0, humidity_gamma=0.0, drift_amp=0.0, noise_sigma=0.0)

    def to_dict(self):
        return asdict(self)


def _ar1(rng, n, phi, sigma):
    z = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = sigma * z[0]
    scale = sigma * np.sqrt(1.0 - phi * phi)
    for k in range(1, n):
        out[k] = phi * out[k - 1] + scale * z[k]
    return out


def generate(config=SynthConfig()):
    """Return ``(series, truth)`` for ``config``; ``truth`` is JSON-serializable."""
    cfg = config
    channel = Channel.parse(cfg.channel)
    rng = np.random.default_rng(cfg.seed)
    n = SAMPLES_PER_DAY * cfg.days
    k = np.arange(n)
    ts = parse_timestamp(cfg.start) + STEP_SECONDS * k
    hod = (ts % 86400) / 3600.0
    dow = ((ts // 86400 + 3) % 7) + hod / 24.0  # Monday = 0
    t_days = k / SAMPLES_PER_DAY

    # reference concentration
    diurnal = cfg.diurnal_amp * (
        0.6 * np.cos(2 * np.pi * (hod - 19.0) / 24.0) + 0.4 * np.cos(4 * np.pi * (hod - 8.0) / 24.0)
    )
    weekly = cfg.weekly_amp * np.cos(2 * np.pi * (dow - 2.0) / 7.0)
    ar = _ar1(rng, n, cfg.ar1_coeff, cfg.ar1_sigma)
    n_peaks = rng.poisson(cfg.peak_rate * cfg.days)
    onsets = np.sort(rng.integers(0, n, size=n_peaks))
    amps = rng.exponential(cfg.peak_amp, size=n_peaks) if cfg.peak_amp > 0 else np.zeros(n_peaks)
    peaks = np.zeros(n)
    decay_steps = cfg.peak_decay_hours * 3600.0 / STEP_SECONDS
    for k0, a in zip(onsets, amps):
        peaks[k0:] += a * np.exp(-(k[k0:] - k0) / decay_steps)
    ref = np.maximum(cfg.base + diurnal + weekly + ar + peaks, 0.0)

    # meteorology
    phase = np.sin(2 * np.pi * (hod - 9.0) / 24.0)
    tmp = cfg.tmp_mean + cfg.tmp_amp * phase + _ar1(rng, n, 0.995, 2.0) + 0.3 * rng.standard_normal(n)
    hmd = cfg.hmd_mean - cfg.hmd_amp * phase + _ar1(rng, n, 0.995, cfg.hmd_synoptic_sigma)
    hmd = np.clip(hmd + 1.5 * rng.standard_normal(n), 5.0, 100.0)

    # sensor response
    drift = cfg.drift_amp * np.sin(2 * np.pi * t_days / cfg.drift_period_days)
    noise = rng.normal(0.0, cfg.noise_sigma, size=n)
    conc = cfg.sensor_gain * ref * (1.0 + cfg.humidity_gamma * (hmd - 50.0) / 50.0) + cfg.sensor_offset + drift + noise

    aux_noise = rng.standard_normal((2, n))
    if channel.is_pm:
        signals = {
            "conc": conc,
            "sfr": 1.0 + 0.02 * (tmp - cfg.tmp_mean) / max(cfg.tmp_amp, 1e-9) + 0.01 * aux_noise[0],
            "mtf": 20.0 + 0.05 * hmd + 0.3 * np.sqrt(ref) + 0.2 * aux_noise[1],
        }
    else:
        signals = {
            "conc": conc,
            "wev": 0.2 + 0.004 * ref * (1.0 + 0.01 * (tmp - 20.0)) + 0.002 * aux_noise[0],
            "aev": 0.19 + 0.0005 * (tmp - 20.0) + 0.001 * aux_noise[1],
        }
    signals["tmp"] = tmp
    signals["hmd"] = hmd
    series = AlignedSeries(channel, ts, signals, ref)
    truth = {
        "config": cfg.to_dict(),
        "n_samples": n,
        "n_peaks": int(n_peaks),
        "sensor_model": "gain*ref*(1+gamma*(hmd-50)/50)+offset+drift_amp*sin(2*pi*t/drift_period)+N(0,noise_sigma)",
        "prng": "numpy PCG64",
    }
    return series, truth


def write_files(series, truth, out_dir):
    """Write ``sensor.csv``, ``reference.csv`` and ``truth.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sensor_csv(out / "sensor.csv", series)
    write_reference_csv(out / "reference.csv", series.ts, series.reference)
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True))
    return [out / "sensor.csv", out / "reference.csv", out / "truth.json"]
