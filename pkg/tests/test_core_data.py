import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcscal.core_data import (
    STEP_SECONDS,
    Channel,
    SensorRecord,
    align,
    fill_gaps,
    format_timestamp,
    hourly_average,
    parse_csv,
    parse_reference_csv,
    parse_timestamp,
    write_sensor_csv,
)
from lcscal.errors import AlignmentError, EmptyInputError, RowError, SchemaError

from conftest import T0, make_series


def _rec(ts, **kw):
    base = dict(conc=10.0, tmp=15.0, hmd=60.0, sfr=1.0, mtf=20.0)
    base.update(kw)
    return SensorRecord(ts=ts, **base)


class TestParseCsv:
    def test_single_pm_row(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("ts,conc,tmp,hmd,sfr,mtf\n2021-03-01T00:00:00Z,12.5,10.1,55,1.02,21.3\n")
        (rec,) = parse_csv(p, "pm25")
        assert rec == SensorRecord(ts=T0, conc=12.5, tmp=10.1, hmd=55.0, sfr=1.02, mtf=21.3)

    def test_missing_sfr_names_column(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("ts,conc,tmp,hmd,mtf\n1614556800,1,2,3,4\n")
        with pytest.raises(SchemaError) as exc:
            parse_csv(p, Channel.PM25)
        assert exc.value.column == "sfr"
        assert "sfr" in str(exc.value)

    def test_no2_volts_passthrough(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("ts,conc,tmp,hmd,wev,aev\n1614556800,20,10,50,0.215,0.198\n")
        (rec,) = parse_csv(p, "no2")
        assert rec.wev == 0.215 and rec.aev == 0.198
        assert rec.sfr is None and rec.mtf is None

    def test_bad_cell_reports_line(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("ts,conc,tmp,hmd,sfr,mtf\n1614556800,1,2,3,4,5\n1614557700,x,2,3,4,5\n")
        with pytest.raises(RowError) as exc:
            parse_csv(p, "pm10")
        assert exc.value.line == 3

    def test_empty_file(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("")
        with pytest.raises(EmptyInputError):
            parse_csv(p, "pm25")

    def test_header_only(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("ts,conc,tmp,hmd,sfr,mtf\n")
        with pytest.raises(EmptyInputError):
            parse_csv(p, "pm25")

    def test_reference_file(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("ts,ref\n2021-03-01T00:15:00Z,7.5\n")
        assert parse_reference_csv(p) == [(T0 + 900, 7.5)]

    def test_roundtrip(self, tmp_path):
        s = make_series(10)
        write_sensor_csv(tmp_path / "s.csv", s)
        recs = parse_csv(tmp_path / "s.csv", "pm25")
        assert recs == s.records


def test_timestamp_formats():
    assert parse_timestamp("2021-03-01T00:00:00Z") == T0
    assert parse_timestamp(str(T0)) == T0
    assert format_timestamp(T0) == "2021-03-01T00:00:00Z"
    with pytest.raises(ValueError):
        parse_timestamp("01/03/2021")


class TestAlign:
    def test_partial_overlap(self):
        t = [T0 + k * STEP_SECONDS for k in range(4)]
        s = align([_rec(t[0]), _rec(t[1]), _rec(t[2])], [(t[1], 1.0), (t[2], 2.0), (t[3], 3.0)], "pm25")
        assert list(s.ts) == [t[1], t[2]]
        assert list(s.reference) == [1.0, 2.0]
        assert s.dropped == ((t[0], t[0], "sensor"), (t[3], t[3], "reference"))

    def test_identical_sets(self):
        t = [T0 + k * STEP_SECONDS for k in range(100)]
        s = align([_rec(x) for x in t], [(x, 1.0) for x in t], "pm25")
        assert len(s) == 100 and s.dropped == ()

    def test_disjoint(self):
        with pytest.raises(AlignmentError):
            align([_rec(T0)], [(T0 + 900, 1.0)], "pm25")

    def test_sorts_output(self):
        t = [T0 + k * STEP_SECONDS for k in (3, 1, 2)]
        s = align([_rec(x) for x in t], [(x, float(x)) for x in reversed(t)], "pm25")
        assert np.all(np.diff(s.ts) > 0)

    def test_off_grid_rejected(self):
        with pytest.raises(AlignmentError):
            align([_rec(T0 + 60)], [(T0 + 60, 1.0)], "pm25")

    def test_idempotent(self):
        t = [T0 + k * STEP_SECONDS for k in (0, 1, 2, 5, 6)]
        s = align([_rec(x, conc=float(i)) for i, x in enumerate(t)], [(x, 2.0) for x in t[1:]], "pm25")
        again = align(s.records, list(zip(s.ts.tolist(), s.reference.tolist())), "pm25")
        np.testing.assert_array_equal(again.ts, s.ts)
        np.testing.assert_array_equal(again.reference, s.reference)
        for k in s.signals:
            np.testing.assert_array_equal(again.signals[k], s.signals[k])
        assert again.dropped == ()


class TestFillGaps:
    def test_single_slot_midpoint(self):
        ts = T0 + STEP_SECONDS * np.array([0, 2])
        s = make_series(ts=ts)
        s = type(s)(s.channel, ts, {**s.signals, "conc": np.array([10.0, 12.0])}, np.array([1.0, 3.0]))
        (seg,) = fill_gaps(s, max_gap_steps=1)
        assert list(seg.signals["conc"]) == [10.0, 11.0, 12.0]
        assert list(seg.reference) == [1.0, 2.0, 3.0]

    def test_long_gap_splits(self):
        ts = T0 + STEP_SECONDS * np.r_[0:4, 9:14]  # 5 missing slots
        segs = fill_gaps(make_series(ts=ts), max_gap_steps=2)
        assert [len(s) for s in segs] == [4, 5]

    def test_gap_free_unchanged(self, pm_series):
        (seg,) = fill_gaps(pm_series)
        np.testing.assert_array_equal(seg.ts, pm_series.ts)
        np.testing.assert_array_equal(seg.signals["conc"], pm_series.signals["conc"])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(1, 6), min_size=1, max_size=30), st.integers(0, 4))
    def test_segments_uniform(self, steps, max_gap):
        ts = T0 + STEP_SECONDS * np.cumsum([0] + steps)
        segs = fill_gaps(make_series(ts=ts), max_gap)
        for seg in segs:
            assert np.all(np.diff(seg.ts) == STEP_SECONDS)
        assert sum(len(s) for s in segs) >= len(ts)
        assert len(segs) == 1 + sum(1 for d in steps if d - 1 > max_gap)


class TestHourlyAverage:
    def test_mean_of_slots(self):
        ts = T0 + STEP_SECONDS * np.arange(4)
        hours, vals = hourly_average(ts, [1, 2, 3, 4])
        assert list(hours) == [T0] and list(vals) == [2.5]

    def test_two_slots_omitted(self):
        ts = T0 + STEP_SECONDS * np.array([0, 1])
        hours, vals = hourly_average(ts, [1.0, 2.0])
        assert hours.size == 0 and vals.size == 0

    def test_nan_counts_as_missing(self):
        ts = T0 + STEP_SECONDS * np.arange(4)
        _, vals = hourly_average(ts, [1.0, np.nan, 3.0, 5.0])
        assert list(vals) == [3.0]

    def test_constant_day(self):
        ts = T0 + STEP_SECONDS * np.arange(96)
        hours, vals = hourly_average(ts, np.full(96, 7.0))
        assert len(vals) == 24 and np.all(vals == 7.0)
        assert np.all(hours % 3600 == 0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40), st.integers(0, 3), st.floats(-50, 50))
    def test_constant_and_length(self, n, offset, c):
        ts = T0 + STEP_SECONDS * (offset + np.arange(n))
        _, vals = hourly_average(ts, np.full(n, c))
        assert len(vals) <= -(-n // 4) + 1 if offset else len(vals) <= -(-n // 4)
        np.testing.assert_allclose(vals, c, rtol=1e-12, atol=1e-12)
