import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from automixer.data import (BizITObsFrame, Channel, ChannelSchema,
                            GuardedFrame, Normalizer, chronological_split,
                            event_labels, fit_apply_normalizer, load_frame,
                            make_windows)
from automixer.errors import DataError, SchemaError, UsageError


def schema(n_kpi=2, n_event=1):
    return ChannelSchema(
        [Channel(f"kpi_{i}", "biz-kpi") for i in range(n_kpi)]
        + [Channel(f"evt_{i}", "it-event") for i in range(n_event)])


def frame_of(n_rows, n_kpi=2, n_event=1, seed=0):
    sch = schema(n_kpi, n_event)
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(n_rows, len(sch)))
    return BizITObsFrame(np.arange(n_rows, dtype=float), values, sch)


class TestSchema:
    def test_masks(self):
        sch = schema(2, 3)
        assert sch.kpi_mask == [0, 1]
        assert sch.event_mask == [2, 3, 4]

    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            ChannelSchema([Channel("a", "biz-kpi"), Channel("a", "it-event")])

    def test_unknown_role_rejected(self):
        with pytest.raises(SchemaError):
            ChannelSchema([Channel("a", "metric")])

    def test_save_load_round_trip(self, tmp_path):
        sch = schema(2, 2)
        path = tmp_path / "schema.csv"
        sch.save(path)
        loaded = ChannelSchema.load(path)
        assert loaded.names == sch.names
        assert loaded.event_mask == sch.event_mask


class TestFrameValidation:
    def test_non_increasing_timestamps(self):
        with pytest.raises(DataError, match="row 2"):
            BizITObsFrame([0.0, 2.0, 1.0], np.zeros((3, 3)), schema())

    def test_unequal_spacing(self):
        with pytest.raises(DataError, match="equally spaced"):
            BizITObsFrame([0.0, 1.0, 3.0, 4.0], np.zeros((4, 3)), schema())

    def test_spacing_tolerance_one_percent(self):
        ts = np.arange(10, dtype=float)
        ts[5] += 0.005  # within 1% of unit step
        BizITObsFrame(ts, np.zeros((10, 3)), schema())

    def test_nan_rejected(self):
        values = np.zeros((4, 3))
        values[1, 2] = np.nan
        with pytest.raises(DataError, match="NaN"):
            BizITObsFrame(np.arange(4.0), values, schema())

    def test_channel_count_mismatch(self):
        with pytest.raises(SchemaError):
            BizITObsFrame(np.arange(4.0), np.zeros((4, 5)), schema())


class TestLoadFrame:
    def write(self, tmp_path, text, schema_text="kpi_0,biz-kpi\nevt_0,it-event\n"):
        data = tmp_path / "data.csv"
        data.write_text(text)
        sidecar = tmp_path / "schema.csv"
        sidecar.write_text(schema_text)
        return data, sidecar

    def test_round_trip(self, tmp_path):
        frame = frame_of(10)
        data = tmp_path / "data.csv"
        sidecar = tmp_path / "schema.csv"
        frame.save(data)
        frame.schema.save(sidecar)
        loaded = load_frame(data, sidecar)
        np.testing.assert_array_equal(loaded.values, frame.values)
        np.testing.assert_array_equal(loaded.timestamps, frame.timestamps)

    def test_header_mismatch_names_offender(self, tmp_path):
        data, sidecar = self.write(
            tmp_path, "timestamp,kpi_0,bogus\n0,1.0,2.0\n")
        with pytest.raises(DataError, match="bogus"):
            load_frame(data, sidecar)

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        data, sidecar = self.write(
            tmp_path, "timestamp,kpi_0,evt_0\n0,1.0,2.0\n1,oops,0.0\n")
        with pytest.raises(DataError, match=r"row 3, column 2"):
            load_frame(data, sidecar)

    def test_ragged_row(self, tmp_path):
        data, sidecar = self.write(
            tmp_path, "timestamp,kpi_0,evt_0\n0,1.0,2.0\n1,3.0\n")
        with pytest.raises(DataError, match="row 3"):
            load_frame(data, sidecar)

    def test_empty_file(self, tmp_path):
        data, sidecar = self.write(tmp_path, "")
        with pytest.raises(DataError, match="empty"):
            load_frame(data, sidecar)

    def test_iso_timestamps(self, tmp_path):
        data, sidecar = self.write(
            tmp_path,
            "timestamp,kpi_0,evt_0\n"
            "2026-01-01T00:00:00,1.0,0\n"
            "2026-01-01T01:00:00,2.0,0\n"
            "2026-01-01T02:00:00,3.0,1\n")
        frame = load_frame(data, sidecar)
        assert len(frame) == 3
        assert np.all(np.diff(frame.timestamps) == 3600.0)


class TestSplit:
    def test_exact_100_rows(self):
        train, val, test = chronological_split(frame_of(150), min_window=50)
        assert (len(train), len(val), len(test)) == (90, 30, 30)

    def test_remainder_goes_to_test(self):
        train, val, test = chronological_split(frame_of(8834), min_window=48)
        assert (len(train), len(val), len(test)) == (5300, 1766, 1768)
        assert len(train) + len(val) + len(test) == 8834

    def test_chronological_order(self):
        train, val, test = chronological_split(frame_of(200), min_window=48)
        assert train.timestamps[-1] < val.timestamps[0] < test.timestamps[0]

    def test_too_short(self):
        with pytest.raises(DataError, match="too short"):
            chronological_split(frame_of(100), min_window=48)

    def test_bad_ratios(self):
        with pytest.raises(DataError):
            chronological_split(frame_of(200), ratios=(0.5, 0.2, 0.2))


class TestNormalizer:
    def test_train_stats_zero_mean_unit_std(self):
        train, val, test = chronological_split(frame_of(300), min_window=48)
        train_n, val_n, test_n, norm = fit_apply_normalizer(train, val, test)
        np.testing.assert_allclose(train_n.values.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(train_n.values.std(axis=0), 1, atol=1e-12)
        # val/test use TRAIN statistics, so they are generally not centered
        assert np.any(np.abs(val_n.values.mean(axis=0)) > 1e-6)

    def test_round_trip(self):
        frame = frame_of(100)
        norm = Normalizer.fit(frame)
        np.testing.assert_allclose(norm.invert(norm.apply(frame.values)),
                                   frame.values, atol=1e-9)

    def test_constant_channel_named(self):
        sch = schema(2, 1)
        values = np.random.default_rng(0).normal(size=(50, 3))
        values[:, 1] = 7.0
        frame = BizITObsFrame(np.arange(50.0), values, sch)
        with pytest.raises(DataError, match="kpi_1"):
            Normalizer.fit(frame)

    def test_leakage_tripwire(self):
        # shifting the test split must NOT change the fitted statistics
        full = frame_of(300, seed=3)
        train, val, test = chronological_split(full, min_window=48)
        norm_before = Normalizer.fit(train)
        shifted_test = BizITObsFrame(test.timestamps, test.values + 100.0,
                                     test.schema)
        norm_after = Normalizer.fit(train)
        np.testing.assert_array_equal(norm_before.mean, norm_after.mean)
        # and applying train stats to the shifted test shows the shift
        assert np.all(norm_after.apply(shifted_test.values).mean(axis=0) > 10)


class TestWindows:
    def test_count_formula_examples(self):
        values = np.zeros((100, 2))
        assert len(make_windows(values, 24, 24, stride=1)) == 53
        assert len(make_windows(values, 24, 24, stride=24)) == 3

    def test_contents(self):
        values = np.arange(20.0).reshape(10, 2)
        wins = make_windows(values, 3, 2, stride=4)
        assert len(wins) == 2
        np.testing.assert_array_equal(wins[0].x, values[0:3])
        np.testing.assert_array_equal(wins[0].y, values[3:5])
        assert wins[1].origin == 4
        np.testing.assert_array_equal(wins[1].y, values[7:9])

    def test_too_short_returns_empty(self):
        assert make_windows(np.zeros((10, 2)), 8, 8) == []

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(10, 400), sl=st.integers(1, 48), fl=st.integers(1, 48),
           stride=st.integers(1, 48))
    def test_count_property(self, n, sl, fl, stride):
        wins = make_windows(np.zeros((n, 1)), sl, fl, stride)
        expected = 0 if n < sl + fl else (n - sl - fl) // stride + 1
        assert len(wins) == expected
        for w in wins:
            assert w.x.shape == (sl, 1) and w.y.shape == (fl, 1)
            assert w.origin + sl + fl <= n


class TestEventLabels:
    def test_any_positive(self):
        sch = schema(1, 2)
        y = np.zeros((4, 3))
        y[2, 1] = 3.0  # count burst on first event channel
        np.testing.assert_array_equal(event_labels(y, sch), [1.0, 0.0])

    def test_kpi_values_ignored(self):
        sch = schema(1, 2)
        y = np.zeros((4, 3))
        y[:, 0] = 99.0
        np.testing.assert_array_equal(event_labels(y, sch), [0.0, 0.0])


class TestGuardedFrame:
    def test_access_before_unlock_raises(self):
        guard = GuardedFrame(frame_of(10), label="test")
        with pytest.raises(UsageError, match="test split"):
            _ = guard.values

    def test_unlock_returns_frame(self):
        frame = frame_of(10)
        guard = GuardedFrame(frame)
        assert guard.unlock() is frame
        assert guard.values.shape == (10, 3)
