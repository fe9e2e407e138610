import numpy as np
import pytest

from urbanfusion.core import Channel, IsovistDescriptor, ResponseLabel, TimeWindow
from urbanfusion.errors import EmptyWindow, IndexMismatch, InvalidSpan, LengthMismatch
from urbanfusion.fusion import full_windows, mark_windows, pair, quantify_event, stack, window_means
from urbanfusion.ingest import AlignedFrame

ISO = IsovistDescriptor(1.0, 2.0, 0.5, 0.0)


def frame(n=30, gap=()):
    t = np.array([float(i) for i in range(n) if i not in gap])
    cols = {ch: t * (k + 1) for k, ch in enumerate(Channel) if ch != Channel.EDA_US}
    return AlignedFrame("p", t, cols)


def test_mark_windows_with_partial_tail():
    w = mark_windows(0.0, 23.0, 5.0)
    assert [x.start for x in w] == [0, 5, 10, 15, 20]
    assert w[-1].partial and w[-1].end == 23.0
    assert len(full_windows(w)) == 4
    assert not mark_windows(0.0, 20.0, 5.0)[-1].partial
    with pytest.raises(InvalidSpan):
        mark_windows(5.0, 5.0)


def test_quantify_event_means_and_first_fix():
    f = frame()
    ev = quantify_event(f, TimeWindow(1, 5.0, 10.0, 5.0), ISO)
    assert ev.sound_db == pytest.approx(np.mean(np.arange(5, 10)) * 3)
    assert ev.gps_lat == 5.0
    with pytest.raises(EmptyWindow):
        quantify_event(frame(gap=range(5, 10)), TimeWindow(1, 5.0, 10.0, 5.0), ISO)


def test_window_means_agrees_with_quantify_event_and_drops_empty():
    f = frame(gap=range(10, 15))
    ws = mark_windows(0.0, 30.0, 5.0)
    q = window_means(f, ws)
    assert q.dropped == (2,)
    for w, row, m in zip(q.windows, q.first_rows, q.means):
        ev = quantify_event(f, w, ISO)
        np.testing.assert_allclose(m, ev.features()[:5])
        assert f.column(Channel.GPS_LAT)[row] == ev.gps_lat


def test_pair_and_stack():
    f = frame()
    ws = mark_windows(0.0, 15.0, 5.0)
    evs = [quantify_event(f, w, ISO) for w in ws]
    resp = [ResponseLabel(w, n, "A" if n else "N", "LA" if n else "N") for w, n in zip(ws, (0, 2, 0))]
    pd = pair(evs[::-1], resp, "p")
    assert [e.window.index for e, _ in pd.rows] == [0, 1, 2]
    data = stack([pd, pair(evs, resp, "q")])
    assert len(data) == 6 and data.participants == 2
    assert data.nscr.tolist() == [0, 2, 0, 0, 2, 0]
    with pytest.raises(LengthMismatch):
        pair(evs[:2], resp)
    other = [ResponseLabel(TimeWindow(9, 0, 5, 5), 0, "N", "N")] + resp[1:]
    with pytest.raises(IndexMismatch):
        pair(evs, other)
