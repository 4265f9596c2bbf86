"""Calibration of low-cost air-quality sensors against co-located reference
monitors with a sequence-to-one LSTM, plus equivalence statistics."""

__version__ = "0.1.0"

from .core_data import AlignedSeries, Channel, SensorRecord, align, fill_gaps, hourly_average, parse_csv  # noqa: E402
from .features import FeatureMatrix, FeatureSpec, build_feature_matrix  # noqa: E402
from .dataset import NormStats, SplitSpec, WindowedDataset, make_windows  # noqa: E402
from .neuralnet import LstmModel, ModelConfig, init_params  # noqa: E402
from .training import GridSpec, TrainSpec, fit, grid_search  # noqa: E402
from .evaluation import MetricSet, OlsFit, EquivalenceReport, evaluate  # noqa: E402
from .synthgen import SynthConfig, generate  # noqa: E402

__all__ = [
    "AlignedSeries",
    "Channel",
    "SensorRecord",
    "align",
    "fill_gaps",
    "hourly_average",
    "parse_csv",
    "FeatureMatrix",
    "FeatureSpec",
    "build_feature_matrix",
    "NormStats",
    "SplitSpec",
    "WindowedDataset",
    "make_windows",
    "LstmModel",
    "ModelConfig",
    "init_params",
    "GridSpec",
    "TrainSpec",
    "fit",
    "grid_search",
    "MetricSet",
    "OlsFit",
    "EquivalenceReport",
    "evaluate",
    "SynthConfig",
    "generate",
]
