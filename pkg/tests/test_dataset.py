"""Container validation, CSV round trips, filtering, splitting."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tendonid.dataset import (
    Dataset,
    TimeSeries,
    concat,
    load_csv,
    lowpass_filter,
    save_csv,
    split,
)
from tendonid.errors import DataError


def make_dataset(m=50, p=2, q=2, dt=0.03, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        inputs=TimeSeries(dt, rng.normal(size=(m, p)),
                          [f"u{j + 1}" for j in range(p)]),
        outputs=TimeSeries(dt, rng.normal(size=(m, q)),
                           [f"y{j + 1}" for j in range(q)]),
    )


class TestTimeSeries:
    def test_default_channel_names(self):
        ts = TimeSeries(0.01, np.zeros((5, 3)))
        assert ts.channel_names == ["ch1", "ch2", "ch3"]
        assert ts.num_samples == 5
        assert ts.num_channels == 3

    def test_time_axis(self):
        ts = TimeSeries(0.5, np.zeros((4, 1)))
        assert_allclose(ts.time, [0.0, 0.5, 1.0, 1.5])

    def test_single_sample_rejected(self):
        with pytest.raises(DataError):
            TimeSeries(0.01, np.zeros((1, 2)))

    def test_nonfinite_rejected(self):
        vals = np.zeros((5, 2))
        vals[3, 1] = np.nan
        with pytest.raises(DataError):
            TimeSeries(0.01, vals)

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(DataError):
            TimeSeries(0.0, np.zeros((5, 2)))


class TestDataset:
    def test_mismatched_lengths_rejected(self):
        with pytest.raises(DataError):
            Dataset(
                inputs=TimeSeries(0.01, np.zeros((5, 2))),
                outputs=TimeSeries(0.01, np.zeros((6, 2))),
            )

    def test_mismatched_rates_rejected(self):
        with pytest.raises(DataError):
            Dataset(
                inputs=TimeSeries(0.01, np.zeros((5, 2))),
                outputs=TimeSeries(0.02, np.zeros((5, 2))),
            )


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        ds = make_dataset(seed=11)
        path = tmp_path / "run.csv"
        save_csv(ds, path)
        back = load_csv(path)
        # %.17g output reproduces doubles bit for bit
        assert_allclose(back.inputs.values, ds.inputs.values, rtol=0, atol=0)
        assert_allclose(back.outputs.values, ds.outputs.values, rtol=0, atol=0)
        assert back.sample_time_s == pytest.approx(ds.sample_time_s, rel=1e-12)

    def test_round_trip_byte_identical(self, tmp_path):
        ds = make_dataset(seed=7)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_csv(ds, p1)
        save_csv(load_csv(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv")

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,u1,y1\n0,1,2\n0.01,1,2\n")
        with pytest.raises(DataError):
            load_csv(path)

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,u1,z1\n0,1,2\n0.01,1,2\n")
        with pytest.raises(DataError):
            load_csv(path)

    def test_nonuniform_grid(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,u1,y1\n0,1,2\n0.01,1,2\n0.05,1,2\n")
        with pytest.raises(DataError):
            load_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,u1,y1\n0,1,2\n0.01,oops,2\n")
        with pytest.raises(DataError):
            load_csv(path)

    def test_nan_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,u1,y1\n0,1,2\n0.01,nan,2\n")
        with pytest.raises(DataError):
            load_csv(path)


class TestLowpass:
    def test_constant_passes_through(self):
        ts = TimeSeries(0.01, np.full((40, 2), 3.7))
        out = lowpass_filter(ts, 0.5)
        assert_allclose(out.values, ts.values, rtol=0, atol=1e-12)

    def test_zero_phase(self):
        # forward+backward filtering of an even signal stays even; the
        # record is long enough for the impulse-response tails to die
        # out before the edges
        m = 241
        x = np.exp(-0.5 * ((np.arange(m) - 120) / 10.0) ** 2)
        out = lowpass_filter(TimeSeries(0.01, x[:, None]), 0.3)
        y = out.values[:, 0]
        assert_allclose(y, y[::-1], rtol=0, atol=1e-12)

    def test_attenuates_high_frequency(self):
        m = 400
        k = np.arange(m)
        slow = np.sin(2 * np.pi * k / 200.0)
        fast = np.sin(2 * np.pi * k / 4.0)
        ts = TimeSeries(0.01, np.column_stack([slow + fast, slow]))
        out = lowpass_filter(ts, 0.2)
        resid = out.values[:, 0] - out.values[:, 1]
        # the pi/2 rad/sample component should drop by well over 10x
        assert np.max(np.abs(resid[50:-50])) < 0.1 * np.max(np.abs(fast))

    def test_half_power_at_cutoff(self):
        # one analog-style check of the design equation: a single pass
        # attenuates the cutoff frequency to 1/2 power, so the two-pass
        # cascade lands at 1/2 amplitude
        wc = 2 * np.pi / 20.0
        m = 2000
        x = np.sin(wc * np.arange(m))
        y = lowpass_filter(TimeSeries(1.0, x[:, None]), wc).values[:, 0]
        amp = np.max(np.abs(y[500:-500]))
        assert_allclose(amp, 0.5, atol=0.02)

    def test_cutoff_domain(self):
        ts = TimeSeries(0.01, np.zeros((5, 1)))
        for wc in (0.0, -0.1, np.pi, 4.0):
            with pytest.raises(DataError):
                lowpass_filter(ts, wc)


class TestSplitConcat:
    def test_split_is_contiguous_prefix(self):
        ds = make_dataset(m=10, seed=2)
        tr, va = split(ds, 0.6)
        assert tr.num_samples == 6
        assert va.num_samples == 4
        assert_allclose(tr.outputs.values, ds.outputs.values[:6])
        assert_allclose(va.outputs.values, ds.outputs.values[6:])

    def test_split_degenerate_fraction(self):
        ds = make_dataset(m=10)
        for frac in (0.05, 0.95):
            with pytest.raises(DataError):
                split(ds, frac)

    def test_concat_inverts_split(self):
        ds = make_dataset(m=30, seed=5)
        tr, va = split(ds, 0.5)
        back = concat([tr, va])
        assert_allclose(back.inputs.values, ds.inputs.values)
        assert_allclose(back.outputs.values, ds.outputs.values)

    def test_concat_rate_mismatch(self):
        a = make_dataset(m=10, dt=0.01)
        b = make_dataset(m=10, dt=0.02)
        with pytest.raises(DataError):
            concat([a, b])
