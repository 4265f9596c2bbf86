"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 data/validation, 3 I/O, 4 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .core_data import Channel, align, detect_channel_family, parse_csv, parse_reference_csv, write_reference_csv
from .dataset import SplitSpec
from .errors import CalibrationError, DataError, IntegrityError, TrainingError
from .evaluation import DEFAULT_LIMITS, assess_equivalence, evaluate, hourly_pairs, write_scatter_csv
from .features import FeatureSpec
from .neuralnet import LstmModel, ModelConfig, init_params
from .pipeline import prepare, predict_series, windows_for_model
from .synthgen import SynthConfig, generate, write_files
from .training import GridSpec, TrainSpec, fit, grid_search

log = logging.getLogger("lcscal")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO, EXIT_TRAIN = 0, 1, 2, 3, 4
OUTPUT_ENV = "LCSCAL_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

_MODEL_KEYS = ("window", "hidden", "dense", "dropout_rate", "leaky_alpha", "l2_lambda")


@dataclass
class RunConfig:
    channel: str = "pm25"
    sensor: str | None = None
    reference: str | None = None
    synth: dict | None = None
    features: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    grid: dict | None = None
    output_dir: str | None = None
    seed: int = 0
    max_gap_steps: int = 2

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown run-config keys: {sorted(unknown)}")
        inputs = d.get("inputs") or {}
        d = {k: v for k, v in d.items() if k != "inputs"}
        d.setdefault("sensor", inputs.get("sensor"))
        d.setdefault("reference", inputs.get("reference"))
        return cls(**d)

    def validate(self):
        has_files = self.sensor is not None or self.reference is not None
        if has_files == (self.synth is not None):
            raise UsageError("give exactly one of sensor/reference files or a synth config")
        if has_files and (self.sensor is None or self.reference is None):
            raise UsageError("both --sensor and --reference are required")
        bad = set(self.model) - set(_MODEL_KEYS)
        if bad:
            raise UsageError(f"unknown model keys: {sorted(bad)}")

    def feature_spec(self):
        return FeatureSpec.from_dict(self.features)

    def split_spec(self):
        return SplitSpec(**self.split)

    def train_spec(self):
        return TrainSpec(**{"seed": self.seed, **self.train})

    def grid_spec(self):
        return None if self.grid is None else GridSpec(**{k: tuple(v) for k, v in self.grid.items()})


def _load_run_config(args):
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"run config is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)


def _output_dir(args, cfg=None):
    out = args.out or (cfg.output_dir if cfg else None) or os.environ.get(OUTPUT_ENV) or "lcscal-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _load_series(sensor, reference, channel):
    channel = Channel.parse(channel)
    family = detect_channel_family(sensor)
    if family is not None and family != ("no2" if channel is Channel.NO2 else "pm"):
        raise DataError(f"sensor file {sensor} carries {family} columns but channel is {channel.value}", module="cli")
    return align(parse_csv(sensor, channel), parse_reference_csv(reference), channel)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(args):
    cfg = _load_run_config(args)
    synth = dict(cfg.synth or {})
    for key in ("seed", "days", "channel"):
        value = getattr(args, key)
        if value is not None:
            synth[key] = value
    channel = synth.pop("channel", cfg.channel)
    config = SynthConfig.for_channel(channel, **synth)
    series, truth = generate(config)
    out = _output_dir(args, cfg)
    for p in write_files(series, truth, out):
        print(p)
    return EXIT_OK


def _apply_train_overrides(cfg, args):
    if args.sensor or args.reference:
        cfg.sensor, cfg.reference, cfg.synth = args.sensor, args.reference, None
    if args.synth:
        cfg.synth = cfg.synth or {}
        cfg.sensor = cfg.reference = None
    if args.channel:
        cfg.channel = args.channel
    if args.seed is not None:
        cfg.seed = args.seed
    if args.days is not None:
        if cfg.synth is None:
            raise UsageError("--days applies only to synthetic input")
        cfg.synth["days"] = args.days
    for flag, key in (("window", "window"), ("hidden", "hidden"), ("dense", "dense"), ("dropout", "dropout_rate")):
        if getattr(args, flag) is not None:
            cfg.model[key] = getattr(args, flag)
    for flag, key in (("epochs", "max_epochs"), ("eta", "eta"), ("batch_size", "batch_size"), ("patience", "patience")):
        if getattr(args, flag) is not None:
            cfg.train[key] = getattr(args, flag)
    if args.grid and cfg.grid is None:
        cfg.grid = {}
    return cfg


def cmd_train(args):
    cfg = _apply_train_overrides(_load_run_config(args), args)
    cfg.validate()
    out = _output_dir(args, cfg)
    channel = Channel.parse(cfg.channel)
    if cfg.synth is not None:
        synth = {"seed": cfg.seed, **cfg.synth}
        series, _ = generate(SynthConfig.for_channel(channel, **synth))
    else:
        series = _load_series(cfg.sensor, cfg.reference, channel)
    feature_spec = cfg.feature_spec()
    prep = prepare(series, feature_spec, cfg.split_spec(), cfg.max_gap_steps)
    train_spec = cfg.train_spec()
    n_features = prep.blocks[0].matrix.n_features
    base = ModelConfig(n_features=n_features, **cfg.model)
    report_extra = {}
    grid = cfg.grid_spec()
    if grid is not None:
        result = grid_search(grid, lambda W: prep.windows(W)[:2], base, train_spec, jobs=args.jobs)
        _write_json(out / "trials.json", {"best": result.best, "trials": result.trials})
        model = result.best_model
        base = model.config
        # refit the winner to obtain its report and curves
        spec = replace(train_spec, eta=result.best["eta"], batch_size=result.best["batch_size"])
        model, report = fit(init_params(base, train_spec.seed), *prep.windows(base.window)[:2], spec)
        report_extra["grid_best"] = result.best
        report_extra["n_trials"] = len(result.trials)
    else:
        train_ds, val_ds, _ = prep.windows(base.window)
        model, report = fit(init_params(base, train_spec.seed), train_ds, val_ds, train_spec)
    model.channel = channel.value
    model.feature_spec = feature_spec.to_dict()
    model.norm_stats = prep.stats.to_dict()
    model.save(out / "model.json")
    prep.stats.save(out / "norm_stats.json")
    report.write_curves(out / "curves.csv")
    datasets = dict(zip(("train", "val", "test"), prep.windows(model.config.window)))
    metrics = {name: evaluate(model, ds).to_dict() for name, ds in datasets.items()}
    _write_json(
        out / "train_report.json",
        {
            **report.to_dict(),
            "metrics": metrics,
            "test_r2": metrics["test"]["r2_direct"],
            "model_config": asdict(model.config),
            "train_spec": asdict(train_spec),
            "channel": channel.value,
            **report_extra,
        },
    )
    print(f"test r2={metrics['test']['r2_direct']:.4f} mae={metrics['test']['mae']:.4f} -> {out}")
    return EXIT_OK


def _load_model(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    try:
        return LstmModel.load(path)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read model {path}: {exc}", module="cli") from None


def _model_channel(model, args):
    channel = Channel.parse(model.channel or "pm25")
    if getattr(args, "channel", None) and Channel.parse(args.channel) is not channel:
        raise DataError(f"model was trained for {channel.value}, data channel is {args.channel}", module="cli")
    return channel


def cmd_calibrate(args):
    model = _load_model(args.model)
    channel = _model_channel(model, args)
    family = detect_channel_family(args.sensor)
    if family is not None and family != ("no2" if channel is Channel.NO2 else "pm"):
        raise DataError(f"sensor file carries {family} columns but model is {channel.value}", module="cli")
    records = parse_csv(args.sensor, channel)
    # reference is not needed; align against a placeholder column of zeros
    series = align(records, [(r.ts, 0.0) for r in records], channel)
    stamps, preds = predict_series(series, model, args.max_gap_steps)
    out = Path(args.out) if args.out else _output_dir(argparse.Namespace(out=None)) / "calibrated.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_reference_csv(out, stamps, preds)
    out.write_text(out.read_text().replace("ts,ref", "ts,calibrated", 1))
    print(out)
    return EXIT_OK


def _predict_pairs(args):
    model = _load_model(args.model)
    channel = _model_channel(model, args)
    series = _load_series(args.sensor, args.reference, channel)
    ds = windows_for_model(series, model, args.max_gap_steps)
    return model, channel, ds, model.predict(ds.inputs)


def cmd_evaluate(args):
    model, channel, ds, preds = _predict_pairs(args)
    metrics = evaluate(model, ds, args.resolution, predictions=preds)
    out = _output_dir(args)
    y_ref, y_pred = ds.targets, preds
    if args.resolution == "hourly":
        _, y_ref, y_pred = hourly_pairs(ds.target_ts, ds.targets, preds)
    _write_json(out / "metrics.json", {**metrics.to_dict(), "channel": channel.value})
    write_scatter_csv(out / "scatter.csv", y_ref, y_pred)
    print(json.dumps(metrics.to_dict()))
    return EXIT_OK


def cmd_equivalence(args):
    if args.limit is not None and not args.limit > 0:
        raise UsageError("--limit must be positive")
    if args.uref < 0:
        raise UsageError("--uref must be non-negative")
    model, channel, ds, preds = _predict_pairs(args)
    limit = DEFAULT_LIMITS[channel] if args.limit is None else args.limit
    report = assess_equivalence(ds.targets, preds, channel, limit, args.uref)
    out = _output_dir(args)
    report.save(out / "equivalence.json")
    print(json.dumps(report.to_dict()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="lcscal", description="Low-cost air-quality sensor calibration with an LSTM.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic co-location dataset")
    g.add_argument("--seed", type=int)
    g.add_argument("--days", type=int)
    g.add_argument("--channel", choices=[c.value for c in Channel])
    g.add_argument("--config", help="run-config JSON (its 'synth' block is used)")
    g.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./lcscal-out)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="featurize, window and fit a calibration model")
    t.add_argument("--config", help="run-config JSON; flags override it")
    t.add_argument("--sensor")
    t.add_argument("--reference")
    t.add_argument("--synth", action="store_true", help="train on generated data")
    t.add_argument("--days", type=int)
    t.add_argument("--channel", choices=[c.value for c in Channel])
    t.add_argument("--seed", type=int)
    t.add_argument("--window", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--dense", type=int)
    t.add_argument("--dropout", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--eta", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--grid", action="store_true", help="run the window/eta/batch grid search")
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("calibrate", help="apply a saved model to a sensor CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--sensor", required=True)
    c.add_argument("--channel", choices=[c.value for c in Channel])
    c.add_argument("--max-gap-steps", type=int, default=2)
    c.add_argument("--out", help="output CSV path")
    c.set_defaults(func=cmd_calibrate)

    for name, func, helptext in (
        ("evaluate", cmd_evaluate, "metrics of a saved model against reference data"),
        ("equivalence", cmd_equivalence, "expanded-uncertainty equivalence check"),
    ):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--model", required=True)
        e.add_argument("--sensor", required=True)
        e.add_argument("--reference", required=True)
        e.add_argument("--channel", choices=[c.value for c in Channel])
        e.add_argument("--max-gap-steps", type=int, default=2)
        e.add_argument("--out")
        if name == "evaluate":
            e.add_argument("--resolution", choices=("15min", "hourly"), default="15min")
        else:
            e.add_argument("--limit", type=float, help="limit value L (default per channel)")
            e.add_argument("--uref", type=float, default=0.0, help="reference-method standard uncertainty")
        e.set_defaults(func=func)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"lcscal: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lcscal: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"lcscal: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (DataError, IntegrityError) as exc:
        print(f"lcscal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CalibrationError as exc:
        print(f"lcscal: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"lcscal: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"lcscal: invalid value: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
