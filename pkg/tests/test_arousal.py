import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urbanfusion.arousal import (
    CdaParams,
    Decomposition,
    ScrEvent,
    bateman,
    bateman_peak,
    convolve_irf,
    count_nscr,
    count_per_window,
    decompose,
    deconvolve_irf,
    detect_scr,
    label,
    read_events,
    split_fragments,
    write_events,
)
from urbanfusion.core import Channel, SignalStream, TimeWindow
from urbanfusion.errors import TooShort
from urbanfusion.synth import WalkSpec, generate_walk


def test_bateman_peak_is_the_maximum():
    tp, peak = bateman_peak(2.0, 0.75)
    assert tp == pytest.approx(2.0 * 0.75 * math.log(2.0 / 0.75) / 1.25)
    t = np.linspace(0, 20, 200001)
    assert np.max(bateman(t, 2.0, 0.75)) == pytest.approx(peak, abs=1e-9)
    assert bateman(-1.0, 2.0, 0.75) == 0.0


def test_impulse_response_is_area_normalised_bateman():
    fs, n = 4.0, 400
    d = np.zeros(n)
    d[0] = 1.0
    h = convolve_irf(d, 2.0, 0.75, fs)
    a, b = math.exp(-1 / (fs * 2.0)), math.exp(-1 / (fs * 0.75))
    area = (a - b) / ((1 - a) * (1 - b))
    np.testing.assert_allclose(h, bateman(np.arange(n) / fs, 2.0, 0.75) / area, atol=1e-12)


def test_deconvolution_inverts_convolution():
    rng = np.random.default_rng(0)
    drv = np.abs(rng.normal(size=500))
    back = deconvolve_irf(convolve_irf(drv, 2.0, 0.75, 4.0), 2.0, 0.75, 4.0)
    # The filter delays by one sample, so the last value rests on edge replication.
    np.testing.assert_allclose(back[2:-1], drv[2:-1], atol=1e-9)


def _dec(phasic, fs=4.0):
    t = np.arange(len(phasic)) / fs
    z = np.zeros(len(phasic))
    return Decomposition(t, z, z, np.asarray(phasic, float), 2.0, 0.75, 0.0, fs)


@pytest.mark.parametrize("rise_s,amp,expected", [(2.0, 0.05, 1), (0.5, 0.05, 0), (5.0, 0.05, 0), (2.0, 0.008, 0)])
def test_rise_time_and_amplitude_gates(rise_s, amp, expected):
    fs = 4.0
    k = int(rise_s * fs)
    p = np.r_[np.zeros(40), np.linspace(0, amp, k + 1)[1:], np.linspace(amp, 0, 40)]
    events = detect_scr(_dec(p), 0.01, (1.0, 3.7))
    assert len(events) == expected
    if expected:
        assert events[0].onset == pytest.approx(39 / fs)
        assert events[0].amplitude == pytest.approx(amp)


def test_decompose_and_detect_recover_planted_pulses():
    w = generate_walk(WalkSpec(duration=300, seed=3))
    eda = w.streams[Channel.EDA_US]
    keep = (eda.timestamps >= w.walk_start) & (eda.timestamps <= w.walk_end)
    dec = decompose(eda.with_samples(eda.timestamps[keep], eda.values[keep]))
    assert dec.residual_rmse < 0.01
    assert np.all(dec.driver >= 0)
    onsets = np.array([e.onset for e in detect_scr(dec)])
    planted = w.pulses[:, 0]
    assert len(onsets) == len(planted)
    assert np.max(np.abs(onsets - planted)) <= 0.5


def test_decompose_rejects_short_signals():
    with pytest.raises(TooShort):
        decompose(SignalStream("p", "eda_us", np.arange(100) / 4, np.ones(100), 4.0), CdaParams())


def test_label_boundaries():
    assert [label(n) for n in (0, 1, 5, 6, 7)] == [("N", "N"), ("A", "LA"), ("A", "LA"), ("A", "HA"), ("A", "HA")]
    assert label(6, "gt6") == ("A", "LA")
    with pytest.raises(ValueError):
        label(-1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), max_size=40), st.floats(0.5, 20))
def test_batched_counts_match_per_window_counts(onsets, t):
    events = [ScrEvent(o, o + 1, 0.1) for o in onsets]
    windows = [TimeWindow(k, k * t, (k + 1) * t, t) for k in range(int(100 // t) + 1)]
    assert count_per_window(events, windows).tolist() == [count_nscr(events, w) for w in windows]


def test_split_fragments_at_gaps():
    t = np.r_[np.arange(0, 10, 0.25), np.arange(20, 30, 0.25)]
    frags = split_fragments(SignalStream("p", "eda_us", t, np.ones(t.size), 4.0))
    assert [len(f) for f in frags] == [40, 40]


def test_events_round_trip(tmp_path):
    ev = [ScrEvent(1.25, 2.5, 0.0312), ScrEvent(7.0, 8.25, 0.5)]
    write_events(ev, tmp_path / "e.csv")
    assert read_events(tmp_path / "e.csv") == ev
