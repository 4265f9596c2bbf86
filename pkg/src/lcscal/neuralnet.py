"""Sequence-to-one LSTM regressor with exact backpropagation-through-time.

Architecture: LSTM(H) -> last hidden state -> Dense(D) + Leaky-ReLU ->
inverted dropout -> Dense(1), all in float64. Recurrent kernels live in
:mod:`lcscal._kernels`.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import IntegrityError, ShapeError

FORMAT_TAG = "lcscal-model"
FORMAT_VERSION = 1

PARAM_ORDER = ("w_input", "w_hidden", "bias", "dense_w", "dense_b", "out_w", "out_b")
WEIGHT_KEYS = ("w_input", "w_hidden", "dense_w", "out_w")  # L2-penalized

_version_counter = itertools.count(1)


@dataclass(frozen=True)
class ModelConfig:
    n_features: int
    window: int = 12
    hidden: int = 128
    dense: int = 64
    dropout_rate: float = 0.3
    leaky_alpha: float = 0.01
    l2_lambda: float = 1e-4

    def __post_init__(self):
        for name in ("n_features", "window", "hidden", "dense"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.leaky_alpha < 0 or self.l2_lambda < 0:
            raise ValueError("leaky_alpha and l2_lambda must be non-negative")

    def param_shapes(self):
        F, H, D = self.n_features, self.hidden, self.dense
        return {
            "w_input": (4 * H, F),
            "w_hidden": (4 * H, H),
            "bias": (4 * H,),
            "dense_w": (D, H),
            "dense_b": (D,),
            "out_w": (1, D),
            "out_b": (1,),
        }

    @property
    def n_params(self):
        F, H, D = self.n_features, self.hidden, self.dense
        return 4 * H * (F + H + 1) + D * (H + 1) + (D + 1)


def leaky_relu(x, alpha=0.01):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, x, alpha * x)
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class LstmModel:
    config: ModelConfig
    params: dict
    channel: str | None = None
    feature_spec: dict | None = None
    norm_stats: dict | None = None
    target_mu: float = 0.0
    target_sigma: float = 1.0
    version: int = field(default_factory=lambda: next(_version_counter))

    def __post_init__(self):
        shapes = self.config.param_shapes()
        for k in PARAM_ORDER:
            arr = np.asarray(self.params[k], dtype=np.float64)
            if arr.shape != shapes[k]:
                raise ShapeError(f"{k}: shape {arr.shape}, expected {shapes[k]}", module="neuralnet")
            self.params[k] = arr

    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())

    def touch(self):
        """Mark parameters as modified, invalidating outstanding caches."""
        self.version = next(_version_counter)

    def copy(self):
        return LstmModel(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            self.channel,
            copy.deepcopy(self.feature_spec),
            copy.deepcopy(self.norm_stats),
            self.target_mu,
            self.target_sigma,
        )

    def l2_penalty(self):
        return self.config.l2_lambda * sum(float(np.sum(self.params[k] ** 2)) for k in WEIGHT_KEYS)

    def flat_params(self):
        return np.concatenate([self.params[k].ravel() for k in PARAM_ORDER])

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.config.n_params:
            raise ShapeError(f"expected {self.config.n_params} values, got {flat.size}", module="neuralnet")
        pos = 0
        for k, shape in self.config.param_shapes().items():
            n = int(np.prod(shape))
            self.params[k] = flat[pos : pos + n].reshape(shape).copy()
            pos += n
        self.touch()

    def predict(self, inputs, batch_size=2048):
        """Eval-mode predictions for an ``(N, W, F)`` array of windows."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if len(inputs) == 0:
            return np.empty(0)
        out = [forward_batch(self, inputs[i : i + batch_size], "eval")[0] for i in range(0, len(inputs), batch_size)]
        return np.concatenate(out)

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "channel": self.channel,
            "feature_spec": self.feature_spec,
            "norm_stats": self.norm_stats,
            "target": {"mu": self.target_mu, "sigma": self.target_sigma},
            "param_order": list(PARAM_ORDER),
            "params": {k: self.params[k].ravel().tolist() for k in PARAM_ORDER},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT_TAG:
            raise ValueError("not an lcscal model file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')!r}")
        config = ModelConfig(**d["config"])
        shapes = config.param_shapes()
        params = {k: np.asarray(d["params"][k], dtype=np.float64).reshape(shapes[k]) for k in PARAM_ORDER}
        return cls(
            config,
            params,
            d.get("channel"),
            d.get("feature_spec"),
            d.get("norm_stats"),
            d["target"]["mu"],
            d["target"]["sigma"],
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_params(config, seed=0):
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    shapes = config.param_shapes()
    params = {}
    for k in PARAM_ORDER:
        shape = shapes[k]
        if k in WEIGHT_KEYS:
            fan_out, fan_in = shape
            s = np.sqrt(6.0 / (fan_in + fan_out))
            params[k] = rng.uniform(-s, s, size=shape)
        else:
            params[k] = np.zeros(shape)
    H = config.hidden
    params["bias"][H : 2 * H] = 1.0
    return LstmModel(config, params)


@dataclass
class ForwardCache:
    model_id: int
    version: int
    x: np.ndarray  # time-major (W, B, F)
    gates: np.ndarray
    c: np.ndarray
    h: np.ndarray
    tanh_c: np.ndarray
    dense_pre: np.ndarray
    dense_act: np.ndarray
    mask: np.ndarray | None

    @property
    def batch(self):
        return self.x.shape[1]

    @property
    def last_hidden(self):
        return self.h[-1]


def _check_inputs(config, inputs):
    if inputs.ndim != 3 or inputs.shape[1:] != (config.window, config.n_features):
        raise ShapeError(
            f"input shape {inputs.shape[1:] if inputs.ndim == 3 else inputs.shape} "
            f"!= (W={config.window}, F={config.n_features})",
            module="neuralnet",
        )


def lstm_forward(params, sequence):
    """Run the LSTM over one ``(W, F)`` sequence from zero state.

    Returns ``(last_hidden, cache)`` where cache is
    ``(x, gates, c, h, tanh_c)`` in time-major batch-of-one layout.
    """
    sequence = np.asarray(sequence, dtype=np.float64)
    F = params["w_input"].shape[1]
    if sequence.ndim != 2 or sequence.shape[1] != F:
        raise ShapeError(f"sequence shape {sequence.shape} incompatible with F={F}", module="neuralnet")
    x = np.ascontiguousarray(sequence[:, None, :])
    gates, c, h, tanh_c = _kernels.lstm_forward(x, params["w_input"], params["w_hidden"], params["bias"])
    return h[-1, 0].copy(), (x, gates, c, h, tanh_c)


def forward_batch(model, inputs, mode="eval", rng=None):
    """Forward pass over ``(B, W, F)`` windows; returns ``(predictions, cache)``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = model.config
    inputs = np.asarray(inputs, dtype=np.float64)
    _check_inputs(cfg, inputs)
    p = model.params
    x = np.ascontiguousarray(inputs.transpose(1, 0, 2))
    gates, c, h, tanh_c = _kernels.lstm_forward(x, p["w_input"], p["w_hidden"], p["bias"])
    pre = h[-1] @ p["dense_w"].T + p["dense_b"]
    act = np.where(pre > 0, pre, cfg.leaky_alpha * pre)
    mask = None
    if mode == "train" and cfg.dropout_rate > 0:
        if rng is None:
            raise ValueError("train mode with dropout needs an rng")
        keep = rng.random(act.shape) >= cfg.dropout_rate
        mask = keep / (1.0 - cfg.dropout_rate)
        act_out = act * mask
    else:
        act_out = act
    raw = act_out @ p["out_w"][0] + p["out_b"][0]
    preds = raw * model.target_sigma + model.target_mu
    cache = ForwardCache(id(model), model.version, x, gates, c, h, tanh_c, pre, act, mask)
    return preds, cache


def model_forward(model, sequence, mode="eval", rng_seed=None):
    """Scalar prediction for a single ``(W, F)`` window."""
    rng = None if rng_seed is None else np.random.default_rng(rng_seed)
    preds, cache = forward_batch(model, np.asarray(sequence, dtype=np.float64)[None], mode, rng)
    return float(preds[0]), cache


def backward_batch(model, cache, d_preds):
    """Gradients of ``sum_b d_preds[b] * pred_b + l2_lambda * sum(w**2)``."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise IntegrityError("cache was produced by a different or since-modified model")
    d_preds = np.asarray(d_preds, dtype=np.float64).reshape(-1)
    if d_preds.shape[0] != cache.batch:
        raise ShapeError(f"{d_preds.shape[0]} upstream gradients for batch of {cache.batch}", module="neuralnet")
    cfg, p = model.config, model.params
    d_raw = d_preds * model.target_sigma
    act_out = cache.dense_act if cache.mask is None else cache.dense_act * cache.mask
    grads = {
        "out_w": (d_raw @ act_out)[None, :],
        "out_b": np.array([d_raw.sum()]),
    }
    d_act = d_raw[:, None] * p["out_w"]
    if cache.mask is not None:
        d_act = d_act * cache.mask
    d_pre = d_act * np.where(cache.dense_pre > 0, 1.0, cfg.leaky_alpha)
    h_last = cache.h[-1]
    grads["dense_w"] = d_pre.T @ h_last
    grads["dense_b"] = d_pre.sum(axis=0)
    dh_last = d_pre @ p["dense_w"]
    d_wx, d_wh, d_b = _kernels.lstm_backward(
        cache.x, p["w_hidden"], cache.gates, cache.c, cache.h, cache.tanh_c, dh_last
    )
    grads["w_input"], grads["w_hidden"], grads["bias"] = d_wx, d_wh, d_b
    if cfg.l2_lambda:
        for k in WEIGHT_KEYS:
            grads[k] = grads[k] + 2.0 * cfg.l2_lambda * p[k]
    return {k: grads[k] for k in PARAM_ORDER}


def model_backward(model, cache, d_prediction):
    """Parameter gradients for one forward call (prediction + L2 penalty)."""
    return backward_batch(model, cache, np.atleast_1d(d_prediction))
