"""Time-window marking, event quantification, pairing and stacking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Channel,
    CompiledDataset,
    CompiledRow,
    EventVector,
    IsovistDescriptor,
    ParticipantDataset,
    ResponseLabel,
    TimeWindow,
)
from .errors import EmptyWindow, IndexMismatch, InvalidSpan, LengthMismatch
from .ingest import AlignedFrame

_ENV_COLUMNS = (
    Channel.SOUND_DB,
    Channel.DUST_MG_M3,
    Channel.TEMP_C,
    Channel.HUMIDITY_PCT,
    Channel.ILLUMINANCE_LUX,
)


def mark_windows(walk_start: float, walk_end: float, t: float = 5.0) -> list[TimeWindow]:
    """Tile ``[walk_start, walk_end)`` with windows of width ``t``.

    The trailing remainder, if any, is returned as a window flagged partial.
    """
    if not walk_end > walk_start:
        raise InvalidSpan(f"walk end {walk_end} does not follow start {walk_start}")
    if not t > 0:
        raise InvalidSpan(f"window width must be positive, got {t}")
    span = walk_end - walk_start
    n_full = int(math.floor(span / t + 1e-9))
    windows = [TimeWindow(k, walk_start + k * t, walk_start + (k + 1) * t, t) for k in range(n_full)]
    if walk_start + n_full * t < walk_end - 1e-9:
        windows.append(TimeWindow(n_full, walk_start + n_full * t, walk_end, t, partial=True))
    return windows


def full_windows(windows: Sequence[TimeWindow]) -> list[TimeWindow]:
    return [w for w in windows if not w.partial]


def quantify_event(frame: AlignedFrame, window: TimeWindow, iso: IsovistDescriptor) -> EventVector:
    """Window means of the environment channels plus the start-of-window fix."""
    t = frame.timestamps
    lo, hi = np.searchsorted(t, [window.start, window.end], side="left")
    if hi <= lo:
        raise EmptyWindow(f"{frame.participant_id}: window {window.index} holds no samples")
    means = [float(np.mean(frame.column(ch)[lo:hi])) for ch in _ENV_COLUMNS]
    return EventVector(
        window,
        *means,
        iso,
        float(frame.column(Channel.GPS_LAT)[lo]),
        float(frame.column(Channel.GPS_LON)[lo]),
    )


@dataclass(frozen=True)
class QuantifiedWindows:
    windows: tuple
    # Row index of the first frame sample inside each window.
    first_rows: np.ndarray
    means: np.ndarray
    dropped: tuple


def window_means(frame: AlignedFrame, windows: Sequence[TimeWindow]) -> QuantifiedWindows:
    """Batched :func:`quantify_event` without the isovist: empty windows are dropped.

    Returns the kept windows, the frame row of each window start (for the GPS
    fix) and a ``(len(kept), 5)`` matrix of environment means.
    """
    t = frame.timestamps
    starts = np.array([w.start for w in windows], dtype=float)
    ends = np.array([w.end for w in windows], dtype=float)
    lo = np.searchsorted(t, starts, side="left")
    hi = np.searchsorted(t, ends, side="left")
    keep = hi > lo
    cols = np.column_stack([frame.column(ch) for ch in _ENV_COLUMNS])
    means = np.array([cols[a:b].mean(axis=0) for a, b in zip(lo[keep], hi[keep])]).reshape(-1, cols.shape[1])
    kept = tuple(w for w, k in zip(windows, keep) if k)
    dropped = tuple(w.index for w, k in zip(windows, keep) if not k)
    return QuantifiedWindows(kept, lo[keep], means, dropped)


def pair(events: Sequence[EventVector], responses: Sequence[ResponseLabel], participant_id: str = "") -> ParticipantDataset:
    """Match events and responses by window index."""
    if len(events) != len(responses):
        raise LengthMismatch(f"{len(events)} events vs {len(responses)} responses")
    by_index = {r.window.index: r for r in responses}
    if len(by_index) != len(responses):
        raise IndexMismatch("duplicate window index among responses")
    rows = []
    for ev in sorted(events, key=lambda e: e.window.index):
        resp = by_index.get(ev.window.index)
        if resp is None:
            raise IndexMismatch(f"no response for window {ev.window.index}")
        rows.append((ev, resp))
    return ParticipantDataset(participant_id, tuple(rows))


def stack(participants: Sequence[ParticipantDataset]) -> CompiledDataset:
    if not participants:
        raise ValueError("stack needs at least one participant")
    rows = tuple(CompiledRow(p.participant_id, ev, resp) for p in participants for ev, resp in p.rows)
    return CompiledDataset(len(participants), rows)
