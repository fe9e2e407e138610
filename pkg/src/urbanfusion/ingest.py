"""Frequency unification and timestamp alignment of the environment streams."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Channel, SignalStream
from .errors import DownsampleRequested, IoFailure, NoOverlap, TooFewSamples

SNAP_TOLERANCE_S = 0.5


def upsample_linear(stream: SignalStream, target_hz: float) -> SignalStream:
    """Resample onto a ``1/target_hz`` grid anchored at the first sample.

    Values are linearly interpolated between the bracketing input samples; the
    grid stops at the last input timestamp (no extrapolation).
    """
    if len(stream) < 2:
        raise TooFewSamples(f"{stream.channel.value}: need >= 2 samples to interpolate")
    if target_hz < stream.nominal_hz:
        raise DownsampleRequested(
            f"{stream.channel.value}: {stream.nominal_hz} Hz -> {target_hz} Hz is a downsample"
        )
    t = stream.timestamps
    step = 1.0 / target_hz
    n = int(np.floor((t[-1] - t[0]) / step + 1e-9)) + 1
    grid = t[0] + step * np.arange(n)
    return stream.with_samples(grid, np.interp(grid, t, stream.values), nominal_hz=target_hz)


def apply_clock_offset(stream: SignalStream, offset_s: float) -> SignalStream:
    """Shift a device clock by a constant offset (seconds added to every timestamp)."""
    if offset_s == 0:
        return stream
    return stream.with_samples(stream.timestamps + offset_s, stream.values)


@dataclass(frozen=True, eq=False)
class AlignedFrame:
    participant_id: str
    timestamps: np.ndarray
    columns: dict
    dropped: int = 0

    def __post_init__(self):
        for name, col in self.columns.items():
            if len(col) != len(self.timestamps):
                raise ValueError(f"column {name} length differs from the grid")

    def __len__(self):
        return len(self.timestamps)

    def column(self, channel) -> np.ndarray:
        return self.columns[Channel(channel)]


def _snap(stream: SignalStream, grid: np.ndarray) -> np.ndarray:
    t = stream.timestamps
    idx = np.clip(np.searchsorted(t, grid), 1, len(t) - 1) if len(t) > 1 else np.zeros(len(grid), int)
    if len(t) > 1:
        left = idx - 1
        nearer_left = np.abs(grid - t[left]) <= np.abs(t[idx] - grid)
        idx = np.where(nearer_left, left, idx)
    out = stream.values[idx].astype(float)
    out[np.abs(t[idx] - grid) > SNAP_TOLERANCE_S] = np.nan
    return out


def align(streams: Sequence[SignalStream]) -> AlignedFrame:
    """Place 1 Hz streams on a shared 1 s grid over their common interval.

    Each grid point takes the nearest sample within 0.5 s; grid rows where any
    channel has no such sample are dropped and counted.
    """
    if not streams:
        raise ValueError("align needs at least one stream")
    pids = {s.participant_id for s in streams}
    if len(pids) != 1:
        raise ValueError(f"streams belong to several participants: {sorted(pids)}")
    for s in streams:
        if len(s) == 0:
            raise TooFewSamples(f"{s.channel.value} is empty")
        if abs(s.nominal_hz - 1.0) > 1e-9:
            raise ValueError(f"{s.channel.value} is at {s.nominal_hz} Hz; upsample to 1 Hz first")
    start = max(s.timestamps[0] for s in streams)
    end = min(s.timestamps[-1] for s in streams)
    if end < start:
        raise NoOverlap("streams share no common time interval")
    grid = start + np.arange(int(np.floor(end - start + 1e-9)) + 1, dtype=float)
    cols = {s.channel: _snap(s, grid) for s in streams}
    keep = np.ones(len(grid), dtype=bool)
    for col in cols.values():
        keep &= ~np.isnan(col)
    cols = {ch: col[keep] for ch, col in cols.items()}
    return AlignedFrame(pids.pop(), grid[keep], cols, int((~keep).sum()))


def write_frame(frame: AlignedFrame, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [ch.value for ch in frame.columns]
    data = [frame.timestamps.tolist()] + [c.tolist() for c in frame.columns.values()]
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(["timestamp"] + names) + "\n")
            for row in zip(*data):
                fh.write(",".join(repr(x) for x in row) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_frame(path, participant_id: str) -> AlignedFrame:
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"no such aligned frame: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    cols = {Channel(name): data[:, i + 1].copy() for i, name in enumerate(header[1:])}
    return AlignedFrame(participant_id, data[:, 0].copy(), cols)


def write_alignment_report(frames: Sequence[AlignedFrame], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "rows_kept", "rows_dropped"])
        for f in frames:
            w.writerow([f.participant_id, len(f), f.dropped])
