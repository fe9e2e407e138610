import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urbanfusion.core import SignalStream
from urbanfusion.errors import DownsampleRequested, NoOverlap, TooFewSamples
from urbanfusion.ingest import align, apply_clock_offset, read_frame, upsample_linear, write_frame


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(-1e3, 1e3), st.integers(2, 60))
def test_upsampling_reproduces_affine_signals(a, b, n):
    t = 1.46e9 + np.arange(n) * 2.5
    up = upsample_linear(SignalStream("p", "sound_db", t, a * (t - t[0]) + b, 0.4), 1.0)
    assert up.nominal_hz == 1.0
    assert up.timestamps[0] == t[0] and up.timestamps[-1] <= t[-1]
    np.testing.assert_allclose(up.values, a * (up.timestamps - t[0]) + b, atol=1e-9)


def test_upsampling_keeps_original_samples():
    t = np.arange(0, 25, 2.5)
    v = np.sin(t)
    up = upsample_linear(SignalStream("p", "dust_mg_m3", t, v, 0.4), 1.0)
    on_grid = np.isin(up.timestamps, t)
    np.testing.assert_allclose(up.values[on_grid], v[np.isin(t, up.timestamps)])


def test_upsampling_errors():
    with pytest.raises(TooFewSamples):
        upsample_linear(SignalStream("p", "sound_db", [0.0], [1.0], 0.4), 1.0)
    with pytest.raises(DownsampleRequested):
        upsample_linear(SignalStream("p", "eda_us", [0.0, 0.25], [1.0, 1.0], 4.0), 1.0)


def test_clock_offset_shifts_timestamps():
    s = SignalStream("p", "eda_us", [0.0, 0.25], [1.0, 2.0], 4.0)
    assert apply_clock_offset(s, 1.5).timestamps.tolist() == [1.5, 1.75]
    assert apply_clock_offset(s, 0.0) is s


def _s(ch, t, v=None):
    t = np.asarray(t, dtype=float)
    return SignalStream("p", ch, t, np.arange(t.size, dtype=float) if v is None else v, 1.0)


def test_align_snaps_to_common_grid_and_counts_drops():
    a = _s("temp_c", np.arange(0, 10.0))
    b = _s("humidity_pct", np.r_[np.arange(2, 5.0), np.arange(7, 12.0)] + 0.2)
    f = align([a, b])
    # The grid starts at the latest first sample and ends at the earliest last one.
    assert np.allclose(f.timestamps, [2.2, 3.2, 4.2, 7.2, 8.2])
    assert f.dropped == 2
    assert f.column("temp_c").tolist() == [2.0, 3.0, 4.0, 7.0, 8.0]


def test_align_requires_overlap_and_one_hz():
    with pytest.raises(NoOverlap):
        align([_s("temp_c", [0.0, 1.0]), _s("humidity_pct", [5.0, 6.0])])
    with pytest.raises(ValueError):
        align([SignalStream("p", "sound_db", [0.0, 2.5], [1.0, 1.0], 0.4)])


def test_frame_round_trip(tmp_path):
    f = align([_s("temp_c", np.arange(5.0)), _s("humidity_pct", np.arange(5.0))])
    write_frame(f, tmp_path / "f.csv")
    g = read_frame(tmp_path / "f.csv", "p")
    assert np.array_equal(g.timestamps, f.timestamps)
    assert np.array_equal(g.column("humidity_pct"), f.column("humidity_pct"))
