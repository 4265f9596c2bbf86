import numpy as np
import pytest

from lcscal.core_data import STEP_SECONDS, Channel, series_from_arrays
from lcscal.neuralnet import ModelConfig, init_params

T0 = 1_614_556_800  # 2021-03-01T00:00:00Z, a Monday


def make_series(n=60, channel="pm25", start=T0, seed=0, ts=None):
    rng = np.random.default_rng(seed)
    ch = Channel.parse(channel)
    if ts is None:
        ts = start + STEP_SECONDS * np.arange(n)
    n = len(ts)
    signals = {name: 10.0 + rng.random(n) * 5 for name in ch.signal_fields}
    signals["hmd"] = 40.0 + 30 * rng.random(n)
    ref = 8.0 + rng.random(n) * 4
    return series_from_arrays(ch, ts, signals, ref)


@pytest.fixture
def pm_series():
    return make_series()


@pytest.fixture
def tiny_model():
    cfg = ModelConfig(n_features=3, window=5, hidden=4, dense=3, dropout_rate=0.3, l2_lambda=1e-2)
    return init_params(cfg, seed=11)


@pytest.fixture
def record(request):
    """Log one PASS/FAIL line per acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def _record(number, title, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        lines.append(line)
        print(line)
        assert ok, line

    return _record


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
