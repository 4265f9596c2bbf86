import csv
import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from lcscal.core_data import STEP_SECONDS, Channel
from lcscal.dataset import WindowedDataset
from lcscal.errors import DegenerateError, InsufficientDataError, ShapeError
from lcscal.evaluation import (
    DEFAULT_LIMITS,
    OlsFit,
    assess_equivalence,
    equivalence_report,
    evaluate,
    expanded_uncertainty,
    mae,
    ols_fit,
    r2_direct,
    rmse,
    write_scatter_csv,
)
from lcscal.neuralnet import ModelConfig, init_params

from conftest import T0
from oracles import brute_ols

finite = st.floats(-1e4, 1e4, allow_nan=False)


class TestR2:
    def test_perfect(self):
        assert r2_direct([1, 2, 3], [1, 2, 3]) == 1.0

    def test_mean_baseline(self):
        y = np.array([1.0, 4.0, 2.0, 7.0])
        assert r2_direct(y, np.full(4, y.mean())) == 0.0

    def test_hand_sum(self):
        # SS_res = 4 * 0.25 = 1, SS_tot = 2.25 + 0.25 + 0.25 + 2.25 = 5
        assert r2_direct([1, 2, 3, 4], [1.5, 2.5, 2.5, 3.5]) == pytest.approx(1 - 1 / 5, rel=1e-15)

    def test_constant_reference(self):
        with pytest.raises(DegenerateError):
            r2_direct([2, 2, 2], [1, 2, 3])

    def test_can_be_negative(self):
        assert r2_direct([1, 2, 3], [3, 2, 1]) < 0


class TestErrors:
    def test_rmse_examples(self):
        assert rmse([1, 2, 3], [2, 2, 2]) == pytest.approx(np.sqrt(2 / 3), rel=1e-15)
        assert rmse([4.0], [4.0]) == 0.0
        assert rmse([0.0], [5.0]) == 5.0

    def test_mismatch(self):
        for fn in (mae, rmse, r2_direct):
            with pytest.raises(ShapeError):
                fn([1, 2, 3], [1, 2])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=40))
    def test_rmse_at_least_mae(self, pairs):
        y, yhat = map(np.array, zip(*pairs))
        assert rmse(y, yhat) >= mae(y, yhat) * (1 - 1e-12) >= 0


class TestOls:
    def test_exact_line(self):
        x = np.arange(10.0)
        fit = ols_fit(x, 2 * x + 1)
        assert fit.slope == pytest.approx(2.0, rel=1e-14)
        assert fit.intercept == pytest.approx(1.0, abs=1e-12)
        assert fit.r2_regression == pytest.approx(1.0, rel=1e-14)

    def test_identity(self):
        x = np.array([3.0, 1.0, 4.0, 1.5, 9.0])
        fit = ols_fit(x, x)
        assert (fit.slope, fit.intercept, fit.r2_regression, fit.residual_sum_squares) == (1.0, 0.0, 1.0, 0.0)
        assert fit.r2_regression == r2_direct(x, x)

    def test_peak_bias_direction(self):
        # predictions track the shape but overestimate peaks: correlation stays high, direct R2 drops
        rng = np.random.default_rng(0)
        y = 10 + 5 * rng.random(200)
        y[::20] += 30
        yhat = y + 0.8 * np.maximum(y - 20, 0) + rng.normal(0, 0.5, 200)
        assert ols_fit(y, yhat).r2_regression >= r2_direct(y, yhat)

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            ols_fit([1, 1, 1], [1, 2, 3])

    def test_too_few(self):
        with pytest.raises(InsufficientDataError):
            ols_fit([1, 2], [1, 2])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30))
    def test_matches_normal_equations(self, pairs):
        x, y = map(np.array, zip(*pairs))
        assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3)
        fit = ols_fit(x, y)
        slope, intercept, r2, rss = brute_ols(x.tolist(), y.tolist())
        assert fit.slope == pytest.approx(slope, rel=1e-7, abs=1e-9)
        assert fit.intercept == pytest.approx(intercept, rel=1e-7, abs=1e-7)
        assert fit.r2_regression == pytest.approx(r2, rel=1e-7, abs=1e-9)


class TestExpandedUncertainty:
    def test_identity_zero(self):
        y = np.linspace(1, 30, 50)
        assert expanded_uncertainty(ols_fit(y, y), y, 25.0) == 0.0

    def test_closed_form(self):
        fit = OlsFit(slope=1.0, intercept=0.0, r2_regression=1.0, residual_sum_squares=8.0, n=10)
        assert expanded_uncertainty(fit, np.zeros(10), 20.0) == pytest.approx(10.0, rel=1e-15)

    def test_bias_and_uref(self):
        fit = OlsFit(slope=1.1, intercept=-1.0, r2_regression=1.0, residual_sum_squares=8.0, n=10)
        # u2 = 1 - 0.25 + (-1 + 0.1*20)^2 = 1.75
        assert expanded_uncertainty(fit, np.zeros(10), 20.0, u_ref=0.5) == pytest.approx(10 * np.sqrt(1.75), rel=1e-14)

    def test_floor_at_zero(self):
        fit = OlsFit(1.0, 0.0, 1.0, 8.0, 10)
        assert expanded_uncertainty(fit, np.zeros(10), 20.0, u_ref=5.0) == 0.0

    def test_n_le_two(self):
        fit = OlsFit(1.0, 0.0, 1.0, 0.0, 2)
        with pytest.raises(InsufficientDataError):
            expanded_uncertainty(fit, np.zeros(2), 20.0)

    def test_bad_limit(self):
        y = np.arange(5.0)
        with pytest.raises(ValueError):
            expanded_uncertainty(ols_fit(y, y), y, 0.0)

    def test_noise_oracle(self):
        rng = np.random.default_rng(11)
        sigma, L = 1.5, 25.0
        y = 5 + 30 * rng.random(5000)
        pct = expanded_uncertainty(ols_fit(y, y + rng.normal(0, sigma, y.size)), y, L)
        assert abs(pct - 200 * sigma / L) <= 0.2 * 200 * sigma / L


class TestEquivalenceReport:
    @pytest.mark.parametrize(
        "channel,pct,passed", [("no2", 22.11, True), ("pm10", 12.42, True), ("pm25", 9.1, True), ("pm25", 51.0, False), ("no2", 25.01, False)]
    )
    def test_verdicts(self, channel, pct, passed):
        rep = equivalence_report(OlsFit(1, 0, 1, 0, 3), pct, channel)
        assert rep.passed is passed
        assert rep.threshold_percent == (25.0 if channel == "no2" else 50.0)

    @given(st.floats(0, 200), st.floats(0, 200))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        fit = OlsFit(1, 0, 1, 0, 3)
        if equivalence_report(fit, hi, "pm10").passed:
            assert equivalence_report(fit, lo, "pm10").passed

    def test_json_and_uref_echo(self, tmp_path):
        y = np.linspace(1, 40, 30)
        rep = assess_equivalence(y, y, "pm25", u_ref=0.3)
        rep.save(tmp_path / "e.json")
        doc = json.loads((tmp_path / "e.json").read_text())
        assert doc["pass"] is True and doc["reference_uncertainty_used"] == 0.3
        assert doc["limit_value"] == DEFAULT_LIMITS[Channel.PM25]
        assert set(doc["fit"]) == {"slope", "intercept", "r2_regression", "residual_sum_squares", "n"}


def _dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    start = T0 + 12 * STEP_SECONDS
    tts = start + STEP_SECONDS * np.arange(n)
    return WindowedDataset(rng.normal(size=(n, 3, 2)), 10 + rng.random(n), 3, tts - 3 * STEP_SECONDS, tts)


class TestEvaluate:
    model = init_params(ModelConfig(n_features=2, window=3, hidden=3, dense=2))

    def test_perfect_predictions(self):
        ds = _dataset(40)
        m = evaluate(self.model, ds, predictions=ds.targets)
        assert (m.r2_direct, m.mae, m.rmse, m.n) == (1.0, 0.0, 0.0, 40)

    def test_hourly(self):
        ds = _dataset(40)
        preds = ds.targets + 0.1
        m = evaluate(self.model, ds, "hourly", predictions=preds)
        assert m.resolution == "hourly" and m.n == 10
        assert m.mae == pytest.approx(0.1, rel=1e-9)

    def test_hourly_needs_two_hours(self):
        ds = _dataset(6)
        with pytest.raises(InsufficientDataError):
            evaluate(self.model, ds, "hourly", predictions=ds.targets)

    def test_model_predictions_used(self):
        ds = _dataset(10)
        assert evaluate(self.model, ds).mae == pytest.approx(mae(ds.targets, self.model.predict(ds.inputs)))

    def test_bad_resolution(self):
        with pytest.raises(ValueError):
            evaluate(self.model, _dataset(10), "daily")


def test_scatter_csv(tmp_path):
    y = np.array([1.0, 2.0, 3.0, 4.0])
    p = 2 * y + 1
    write_scatter_csv(tmp_path / "s.csv", y, p)
    rows = list(csv.reader((tmp_path / "s.csv").open()))
    assert rows[0] == ["series", "ref", "calibrated"]
    kinds = [r[0] for r in rows[1:]]
    assert kinds == ["point"] * 4 + ["fit"] * 2 + ["one_to_one"] * 2
    lo_fit = rows[5]
    assert float(lo_fit[2]) == pytest.approx(2 * float(lo_fit[1]) + 1)
    assert rows[7][1] == rows[7][2]
