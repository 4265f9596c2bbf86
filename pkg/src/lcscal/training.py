"""MAE training with Adam, early stopping and the hyperparameter grid search."""

from __future__ import annotations

import csv
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ShapeError, TrainingError
from .evaluation import r2_direct
from .neuralnet import backward_batch, forward_batch, init_params

log = logging.getLogger(__name__)


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ShapeError(f"length mismatch {y.shape[0]} vs {yhat.shape[0]}", module="training")
    if y.size == 0:
        raise ShapeError("empty vectors", module="training")
    return y, yhat


def mae_loss(y, yhat):
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def mae_grad(y, yhat):
    """Subgradient of the MAE w.r.t. ``yhat``; zero where residual is zero."""
    y, yhat = _pair(y, yhat)
    return np.sign(yhat - y) / y.size


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    eta: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, eta=1e-4, **kw):
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()}, eta=eta, **kw)


def adam_step(params, grads, state):
    """Bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[k] -= state.eta * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass(frozen=True)
class TrainSpec:
    max_epochs: int = 200
    batch_size: int = 64
    patience: int = 10
    min_delta: float = 0.0
    seed: int = 0
    eta: float = 1e-4
    scale_targets: bool = False

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("max_epochs, batch_size and patience must be positive")


@dataclass(frozen=True)
class GridSpec:
    windows: tuple = (8, 12, 16, 20, 24)
    etas: tuple = (1e-3, 1e-4, 1e-5)
    batch_sizes: tuple = (16, 32, 48, 64)

    def __post_init__(self):
        if not (self.windows and self.etas and self.batch_sizes):
            raise ValueError("grid axes must be non-empty")

    def combinations(self):
        return list(itertools.product(self.windows, self.etas, self.batch_sizes))


@dataclass
class TrainReport:
    train_mae: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    train_objective: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    final: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    @property
    def best_val_mae(self):
        return self.val_mae[self.best_epoch - 1]

    def to_dict(self):
        return asdict(self)

    def write_curves(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "train_mae", "val_mae"))
            for i, (a, b) in enumerate(zip(self.train_mae, self.val_mae), start=1):
                w.writerow((i, repr(a), repr(b)))


class EarlyStopping:
    """Tracks the best validation score; signals a stop after ``patience``
    epochs without an improvement larger than ``min_delta``."""

    def __init__(self, patience=10, min_delta=0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best_value = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch, value):
        """Record ``value`` for ``epoch``; return ``(improved, stop)``."""
        if value < self.best_value - self.min_delta:
            self.best_value = value
            self.best_epoch = epoch
            self.wait = 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


def _val_mae(model, dataset):
    return mae_loss(dataset.targets, model.predict(dataset.inputs))


def prepare_output_layer(model, targets, scale_targets=False):
    """Start the output near the target level so training need not climb to it."""
    targets = np.asarray(targets, dtype=np.float64)
    if scale_targets:
        model.target_mu = float(targets.mean())
        model.target_sigma = float(max(targets.std(), 1e-8))
        model.params["out_b"][:] = 0.0
    else:
        model.target_mu, model.target_sigma = 0.0, 1.0
        model.params["out_b"][:] = float(np.median(targets))
    model.touch()


def fit(model, train, val, spec=TrainSpec()):
    """Train a copy of ``model``; return the best-validation snapshot and report."""
    if len(train) == 0 or len(val) == 0:
        raise ShapeError("train and validation sets must be non-empty", module="training")
    t_start = time.perf_counter()
    model = model.copy()
    prepare_output_layer(model, train.targets, spec.scale_targets)
    rng = np.random.default_rng(spec.seed)
    state = AdamState.zeros_like(model.params, eta=spec.eta)
    stopper = EarlyStopping(spec.patience, spec.min_delta)
    report = TrainReport()
    best = model.copy()
    n = len(train)
    for epoch in range(1, spec.max_epochs + 1):
        order = rng.permutation(n)
        abs_sum = 0.0
        obj_sum = 0.0
        for lo in range(0, n, spec.batch_size):
            idx = order[lo : lo + spec.batch_size]
            y = train.targets[idx]
            preds, cache = forward_batch(model, train.inputs[idx], "train", rng)
            batch_mae = mae_loss(y, preds)
            abs_sum += batch_mae * len(idx)
            obj_sum += (batch_mae + model.l2_penalty()) * len(idx)
            grads = backward_batch(model, cache, mae_grad(y, preds))
            adam_step(model.params, grads, state)
            model.touch()
        val_mae = _val_mae(model, val)
        report.train_mae.append(abs_sum / n)
        report.train_objective.append(obj_sum / n)
        report.val_mae.append(float(val_mae))
        if not np.isfinite(val_mae) or not np.isfinite(report.train_mae[-1]):
            raise TrainingError(epoch)
        improved, stop = stopper.update(epoch, val_mae)
        if improved:
            best = model.copy()
        log.debug("epoch %d train %.4f val %.4f", epoch, report.train_mae[-1], val_mae)
        if stop:
            report.stopped_early = epoch < spec.max_epochs
            break
    report.best_epoch = stopper.best_epoch
    report.final = {
        "train_mae": mae_loss(train.targets, best.predict(train.inputs)),
        "val_mae": report.best_val_mae,
        "epochs_run": len(report.val_mae),
    }
    report.wall_clock_s = time.perf_counter() - t_start
    return best, report


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------


def _run_trial(args):
    W, eta, batch, base_config, train_spec, train_ds, val_ds = args
    config = replace(base_config, window=W, n_features=train_ds.n_features)
    spec = replace(train_spec, eta=eta, batch_size=batch)
    trial = {"window": W, "eta": eta, "batch_size": batch}
    try:
        model, report = fit(init_params(config, train_spec.seed), train_ds, val_ds, spec)
        val_pred = model.predict(val_ds.inputs)
        trial.update(
            status="ok",
            val_r2=r2_direct(val_ds.targets, val_pred),
            val_mae=report.best_val_mae,
            best_epoch=report.best_epoch,
            epochs_run=len(report.val_mae),
        )
        return trial, model
    except (TrainingError, FloatingPointError, ValueError) as exc:
        trial.update(status="failed", error=str(exc))
        return trial, None


def _rank_key(trial):
    if trial["status"] != "ok" or not np.isfinite(trial["val_r2"]):
        return (1, 0.0, 0, 0, 0.0)
    return (0, -trial["val_r2"], trial["window"], -trial["batch_size"], -trial["eta"])


@dataclass
class GridResult:
    best: dict
    trials: list
    best_model: object = None


def grid_search(gridspec, build_data, base_config, train_spec=TrainSpec(), jobs=1):
    """Train one model per (window, eta, batch) combination.

    ``build_data(W)`` returns ``(train_ds, val_ds)`` windowed with ``W``.
    Trials are ranked by validation R^2, ties broken by smaller window, larger
    batch, larger learning rate. Failed trials are recorded, not raised.
    """
    data = {W: build_data(W) for W in gridspec.windows}
    jobs_args = [
        (W, eta, batch, base_config, train_spec, *data[W]) for W, eta, batch in gridspec.combinations()
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, jobs_args))
    else:
        results = [_run_trial(a) for a in jobs_args]
    order = sorted(range(len(results)), key=lambda i: _rank_key(results[i][0]))
    trials = [results[i][0] for i in order]
    best_trial, best_model = results[order[0]]
    if best_trial["status"] != "ok":
        raise TrainingError(0, "every grid trial failed")
    return GridResult(best_trial, trials, best_model)


__all__ = [
    "mae_loss",
    "mae_grad",
    "AdamState",
    "adam_step",
    "TrainSpec",
    "GridSpec",
    "TrainReport",
    "EarlyStopping",
    "fit",
    "grid_search",
    "GridResult",
    "prepare_output_layer",
]
