import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcscal.core_data import STEP_SECONDS, Channel
from lcscal.dataset import (
    SIGMA_FLOOR,
    NormStats,
    SplitSpec,
    apply_norm,
    chrono_split,
    fit_norm,
    invert_norm,
    make_inference_windows,
    make_windows,
)
from lcscal.errors import InsufficientDataError, ShapeError, SplitError
from lcscal.features import FeatureMatrix
from lcscal.pipeline import prepare

from conftest import T0, make_series


def matrix(T, F=2, segment=None, seed=0):
    data = np.random.default_rng(seed).normal(size=(T, F))
    names = tuple(f"f{i}" for i in range(F))
    return FeatureMatrix(names, data, Channel.PM25, T0 + STEP_SECONDS * np.arange(T), segment)


class TestSplit:
    @pytest.mark.parametrize("T,sizes", [(100, (70, 20, 10)), (10, (7, 2, 1)), (1000, (700, 200, 100))])
    def test_sizes(self, T, sizes):
        blocks = chrono_split(matrix(T), np.arange(T, dtype=float))
        assert tuple(len(b.matrix) for b in blocks) == sizes
        assert tuple(len(b.targets) for b in blocks) == sizes

    def test_too_short(self):
        with pytest.raises(SplitError):
            chrono_split(matrix(3), np.zeros(3))

    def test_chronological(self):
        T = 57
        blocks = chrono_split(matrix(T), np.arange(T, dtype=float))
        joined = np.concatenate([b.targets for b in blocks])
        np.testing.assert_array_equal(joined, np.arange(T))
        assert blocks[0].matrix.ts[-1] < blocks[1].matrix.ts[0] < blocks[2].matrix.ts[0]

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(0.5, 0.2, 0.2)
        with pytest.raises(ValueError):
            SplitSpec(1.0, 0.0, 0.0)


class TestNorm:
    def test_population_std(self):
        m = FeatureMatrix(("a",), np.array([[1.0], [2.0], [3.0]]), Channel.PM25)
        s = fit_norm(m)
        assert s.mu[0] == 2.0
        assert s.sigma[0] == pytest.approx(math.sqrt(2 / 3), rel=1e-15)

    def test_constant_floor(self):
        s = fit_norm(FeatureMatrix(("a",), np.full((5, 1), 4.0), Channel.PM25))
        assert s.sigma[0] == SIGMA_FLOOR

    def test_shape(self):
        assert fit_norm(matrix(20)).mu.shape == (2,)

    def test_apply_example(self):
        m = FeatureMatrix(("a",), np.array([[5.0]]), Channel.PM25)
        assert apply_norm(m, NormStats(("a",), [2.0], [1.0])).data[0, 0] == 3.0

    def test_roundtrip(self):
        m = matrix(50, F=4)
        s = fit_norm(m)
        z = apply_norm(m, s)
        np.testing.assert_allclose(z.data.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(invert_norm(z, s).data, m.data, rtol=1e-9, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            apply_norm(matrix(5, F=3), fit_norm(matrix(5, F=2)))

    def test_json_roundtrip(self, tmp_path):
        s = fit_norm(matrix(30, F=3))
        s.save(tmp_path / "n.json")
        back = NormStats.load(tmp_path / "n.json")
        assert back.names == s.names
        np.testing.assert_array_equal(back.mu, s.mu)
        np.testing.assert_array_equal(back.sigma, s.sigma)

    def test_stats_from_train_only(self):
        prepared = prepare(make_series(400, seed=5))
        train, val, _ = prepared.blocks
        # recover raw train rows from the stored stats, then refit
        raw_train = invert_norm(train.matrix, prepared.stats)
        refit = fit_norm(raw_train)
        np.testing.assert_allclose(refit.mu, prepared.stats.mu, rtol=1e-9, atol=1e-9)
        raw_val = invert_norm(val.matrix, prepared.stats)
        both = FeatureMatrix(raw_train.names, np.vstack([raw_train.data, raw_val.data]), Channel.PM25)
        assert not np.allclose(fit_norm(both).mu, prepared.stats.mu)


class TestWindows:
    def test_small_example(self):
        m = matrix(5)
        y = np.arange(5, dtype=float) * 10
        ds = make_windows(m, y, 2)
        assert len(ds) == 3
        np.testing.assert_array_equal(ds.inputs[0], m.data[0:2])
        assert ds.targets[0] == y[2]

    def test_reference_window(self):
        assert len(make_windows(matrix(100), np.zeros(100), 12)) == 88

    def test_t_equals_w(self):
        with pytest.raises(InsufficientDataError):
            make_windows(matrix(12), np.zeros(12), 12)

    def test_rolling_and_no_leakage(self):
        m = matrix(40, F=3)
        ds = make_windows(m, np.zeros(40), 6)
        np.testing.assert_array_equal(ds.inputs[1:, :-1], ds.inputs[:-1, 1:])
        last_row_ts = ds.start_ts + (ds.window - 1) * STEP_SECONDS
        assert np.all(ds.target_ts > last_row_ts)
        assert np.all(ds.target_ts - ds.start_ts == ds.window * STEP_SECONDS)

    def test_segments_not_crossed(self):
        seg = np.r_[np.zeros(10, int), np.ones(8, int), np.full(3, 2)]
        m = matrix(21, segment=seg)
        ds = make_windows(m, np.arange(21, dtype=float), 4)
        assert len(ds) == (10 - 4) + (8 - 4)
        np.testing.assert_array_equal(ds.targets, np.r_[4:10, 14:18])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 60).flatmap(lambda T: st.tuples(st.just(T), st.integers(1, T - 1))))
    def test_pair_count_and_targets(self, TW):
        T, W = TW
        y = np.arange(T, dtype=float)
        ds = make_windows(matrix(T, F=1), y, W)
        assert len(ds) == T - W
        np.testing.assert_array_equal(ds.targets, y[W:])
        assert np.all(np.isfinite(ds.inputs))

    def test_inference_windows(self):
        m = matrix(10)
        x, stamps = make_inference_windows(m, 4)
        assert x.shape == (7, 4, 2)
        np.testing.assert_array_equal(x[-1], m.data[6:10])
        assert stamps[0] == m.ts[3] + STEP_SECONDS

    def test_subset(self):
        ds = make_windows(matrix(20), np.arange(20.0), 3)
        sub = ds.subset(np.array([0, 2]))
        assert len(sub) == 2 and sub.targets.tolist() == [3.0, 5.0]
