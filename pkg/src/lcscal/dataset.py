"""Chronological split, z-score normalization and rolling-window pairs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core_data import STEP_SECONDS
from .errors import InsufficientDataError, ShapeError, SplitError
from .features import FeatureMatrix

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.2
    test_frac: float = 0.1

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(fracs)!r}, not 1")

    def boundaries(self, T):
        # the 1e-9 nudge keeps e.g. 100 * (0.7 + 0.2) = 89.999... from flooring to 89
        a = math.floor(T * self.train_frac + 1e-9)
        b = math.floor(T * (self.train_frac + self.val_frac) + 1e-9)
        return a, b


class Block(NamedTuple):
    matrix: FeatureMatrix
    targets: np.ndarray


def chrono_split(matrix, targets, spec=SplitSpec()):
    """Contiguous train/val/test blocks in chronological order."""
    targets = np.asarray(targets, dtype=np.float64)
    T = len(matrix)
    if len(targets) != T:
        raise ShapeError(f"{len(targets)} targets for {T} rows", module="dataset")
    if T < 10:
        raise SplitError(f"need at least 10 rows to split, got {T}")
    a, b = spec.boundaries(T)
    bounds = [(0, a), (a, b), (b, T)]
    for name, (lo, hi) in zip(("train", "val", "test"), bounds):
        if hi <= lo:
            raise SplitError(f"{name} block is empty for T={T}")
    return tuple(Block(matrix.rows(lo, hi), targets[lo:hi]) for lo, hi in bounds)


@dataclass(frozen=True, eq=False)
class NormStats:
    names: tuple
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.maximum(np.asarray(self.sigma, dtype=np.float64), SIGMA_FLOOR)
        if mu.shape != sigma.shape or mu.shape != (len(self.names),):
            raise ShapeError("mu/sigma/names lengths differ", module="dataset")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def to_dict(self):
        return {"names": list(self.names), "mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), d["mu"], d["sigma"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_norm(train_matrix):
    """Per-column mean and population standard deviation of the training rows."""
    data = train_matrix.data
    if data.shape[0] == 0:
        raise InsufficientDataError("cannot fit normalization on an empty block", module="dataset")
    return NormStats(train_matrix.names, data.mean(axis=0), data.std(axis=0))


def _check(matrix, stats):
    if matrix.n_features != len(stats.mu):
        raise ShapeError(f"matrix has {matrix.n_features} features, stats {len(stats.mu)}", module="dataset")
    if tuple(matrix.names) != stats.names:
        raise ShapeError("feature names do not match normalization stats", module="dataset")


def apply_norm(matrix, stats):
    _check(matrix, stats)
    return matrix.with_data((matrix.data - stats.mu) / stats.sigma)


def invert_norm(matrix, stats):
    _check(matrix, stats)
    return matrix.with_data(matrix.data * stats.sigma + stats.mu)


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """``N`` input windows of shape ``(W, F)`` with next-step targets.

    ``start_ts`` is the timestamp of each window's first row, ``target_ts``
    the timestamp of its target (one step after the last input row).
    """

    inputs: np.ndarray
    targets: np.ndarray
    window: int
    start_ts: np.ndarray
    target_ts: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n_features(self):
        return self.inputs.shape[2]

    def subset(self, idx):
        return WindowedDataset(self.inputs[idx], self.targets[idx], self.window, self.start_ts[idx], self.target_ts[idx])


def _segment_runs(segment):
    if len(segment) == 0:
        return []
    cuts = np.flatnonzero(np.diff(segment) != 0) + 1
    edges = [0, *cuts.tolist(), len(segment)]
    return list(zip(edges[:-1], edges[1:]))


def make_windows(matrix, targets, W):
    """Rolling windows of ``W`` rows paired with the target one step later.

    Pair ``i`` (0-based) holds rows ``i .. i+W-1`` and target ``targets[i+W]``,
    giving ``T - W`` pairs per segment. Windows never cross segments.
    """
    W = int(W)
    targets = np.asarray(targets, dtype=np.float64)
    if W < 1:
        raise ValueError("window must be >= 1")
    if len(targets) != len(matrix):
        raise ShapeError(f"{len(targets)} targets for {len(matrix)} rows", module="dataset")
    F = matrix.n_features
    xs, ys, t0, t1 = [], [], [], []
    for lo, hi in _segment_runs(matrix.segment):
        T = hi - lo
        if T <= W:
            continue
        view = sliding_window_view(matrix.data[lo:hi], W, axis=0)  # (T-W+1, F, W)
        xs.append(np.ascontiguousarray(view[: T - W].transpose(0, 2, 1)))
        ys.append(targets[lo + W : hi])
        t0.append(matrix.ts[lo : hi - W])
        t1.append(matrix.ts[lo + W : hi])
    if not xs:
        raise InsufficientDataError(
            f"no segment longer than window W={W} (longest has {max((h - l for l, h in _segment_runs(matrix.segment)), default=0)} rows)",
            module="dataset",
        )
    return WindowedDataset(
        np.concatenate(xs).reshape(-1, W, F),
        np.concatenate(ys),
        W,
        np.concatenate(t0),
        np.concatenate(t1),
    )


def make_inference_windows(matrix, W):
    """All ``T - W + 1`` windows per segment, stamped one step past the last row."""
    W = int(W)
    xs, stamps = [], []
    for lo, hi in _segment_runs(matrix.segment):
        if hi - lo < W:
            continue
        view = sliding_window_view(matrix.data[lo:hi], W, axis=0)
        xs.append(np.ascontiguousarray(view.transpose(0, 2, 1)))
        stamps.append(matrix.ts[lo + W - 1 : hi] + STEP_SECONDS)
    if not xs:
        raise InsufficientDataError(f"no segment with at least W={W} rows", module="dataset")
    return np.concatenate(xs), np.concatenate(stamps)
