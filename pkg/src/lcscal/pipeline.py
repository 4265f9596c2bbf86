"""Glue from an aligned series to normalized, windowed train/val/test sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_data import fill_gaps
from .dataset import Block, NormStats, SplitSpec, apply_norm, chrono_split, fit_norm, make_inference_windows, make_windows
from .features import FeatureSpec, build_features


@dataclass
class PreparedData:
    blocks: tuple  # normalized (train, val, test) Blocks
    stats: NormStats
    feature_spec: FeatureSpec
    raw_conc: dict  # target timestamp -> raw sensed concentration

    def windows(self, W):
        return tuple(make_windows(b.matrix, b.targets, W) for b in self.blocks)

    def raw_at(self, ts):
        return np.array([self.raw_conc[int(t)] for t in ts])


def prepare(series, feature_spec=FeatureSpec(), split_spec=SplitSpec(), max_gap_steps=2):
    segments = fill_gaps(series, max_gap_steps)
    matrix, targets = build_features(segments, feature_spec)
    train, val, test = chrono_split(matrix, targets, split_spec)
    stats = fit_norm(train.matrix)
    blocks = tuple(Block(apply_norm(b.matrix, stats), b.targets) for b in (train, val, test))
    raw = {int(t): float(v) for seg in segments for t, v in zip(seg.ts, seg.signals["conc"])}
    return PreparedData(blocks, stats, feature_spec, raw)


def featurize_for_model(series, model, max_gap_steps=2, with_targets=True):
    """Features of ``series`` normalized with the statistics stored in ``model``.

    Returns ``(matrix, targets)``; targets are the reference column.
    """
    spec = FeatureSpec.from_dict(model.feature_spec) if model.feature_spec else FeatureSpec()
    stats = NormStats.from_dict(model.norm_stats)
    matrix, targets = build_features(fill_gaps(series, max_gap_steps), spec)
    return apply_norm(matrix, stats), targets


def predict_series(series, model, max_gap_steps=2):
    """Calibrated values for every window; returns ``(target_ts, predictions)``."""
    matrix, _ = featurize_for_model(series, model, max_gap_steps)
    inputs, stamps = make_inference_windows(matrix, model.config.window)
    return stamps, model.predict(inputs)


def windows_for_model(series, model, max_gap_steps=2):
    matrix, targets = featurize_for_model(series, model, max_gap_steps)
    return make_windows(matrix, targets, model.config.window)
