import numpy as np
import pytest

from urbanfusion.core import (
    COMPILED_HEADER,
    CompiledDataset,
    SignalStream,
    TimeWindow,
    parse_timestamp,
    read_compiled,
    read_stream,
    summarize,
    write_compiled,
    write_stream,
)
from urbanfusion.errors import EmptyDataset, EmptyFile, IoFailure, MalformedRow


def test_stream_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    s = SignalStream("p1", "eda_us", 1.46e9 + np.arange(50) / 4, rng.normal(size=50), 4.0)
    write_stream(s, tmp_path / "s.csv")
    back = read_stream(tmp_path / "s.csv", "eda_us", "p1")
    assert np.array_equal(back.timestamps, s.timestamps)
    assert np.array_equal(back.values, s.values)
    assert back.nominal_hz == 4.0


def test_read_stream_header_loss_and_duplicates(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("time,value\n1,1.0\n2,\n3,nan\n4,4.0\n4,5.0\n")
    s = read_stream(f, "temp_c")
    assert s.timestamps.tolist() == [1.0, 4.0]
    assert s.values.tolist() == [1.0, 5.0]


def test_read_stream_iso_timestamps(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("2016-04-07T10:00:00Z,1\n2016-04-07T10:00:01Z,2\n")
    s = read_stream(f, "temp_c")
    assert s.timestamps[1] - s.timestamps[0] == 1.0
    assert parse_timestamp("2016-04-07T10:00:00+00:00") == s.timestamps[0]


def test_read_stream_errors(tmp_path):
    with pytest.raises(IoFailure):
        read_stream(tmp_path / "missing.csv", "temp_c")
    (tmp_path / "e.csv").write_text("a,b\n")
    with pytest.raises(EmptyFile):
        read_stream(tmp_path / "e.csv", "temp_c")
    (tmp_path / "m.csv").write_text("1,2\n2,3,4\n")
    with pytest.raises(MalformedRow) as info:
        read_stream(tmp_path / "m.csv", "temp_c")
    assert info.value.line == 2


def test_stream_rejects_unsorted_or_nan():
    with pytest.raises(ValueError):
        SignalStream("p", "temp_c", [2.0, 1.0], [0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        SignalStream("p", "temp_c", [1.0, 2.0], [0.0, np.nan], 1.0)


def test_time_window_is_half_open():
    w = TimeWindow(0, 10.0, 15.0, 5.0)
    assert w.contains(10.0) and not w.contains(15.0)


def test_compiled_round_trip_and_labels(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(12, 9))
    nscr = np.array([0, 1, 5, 6, 7, 0, 2, 0, 6, 0, 1, 3])
    d = CompiledDataset.from_arrays(X, nscr, ["a"] * 6 + ["b"] * 6, rng.normal(size=(12, 2)))
    assert d.participants == 2
    assert d.labels("multiclass").tolist()[:5] == ["N", "LA", "LA", "HA", "HA"]
    write_compiled(d, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == ",".join(COMPILED_HEADER)
    back = read_compiled(tmp_path / "c.csv")
    assert np.array_equal(back.X, d.X)
    assert back.nscr.tolist() == nscr.tolist()
    assert np.array_equal(back.gps, d.gps)


def test_gt6_boundary_moves_six_to_la():
    d = CompiledDataset.from_arrays(np.zeros((2, 9)), [6, 7], ha_boundary="gt6")
    assert d.labels("multiclass").tolist() == ["LA", "HA"]


def test_write_compiled_refuses_empty(tmp_path):
    with pytest.raises(EmptyDataset):
        write_compiled(CompiledDataset(0, ()), tmp_path / "c.csv")


def test_summarize_counts_labels():
    d = CompiledDataset.from_arrays(np.zeros((5, 9)), [0, 0, 1, 6, 2])
    s = summarize(d)
    assert s.total == 5
    assert s.binary == {"N": 2, "A": 3}
    assert s.multiclass == {"N": 2, "LA": 2, "HA": 1}
