"""Shared data model and delimited-text I/O.

Streams are stored as parallel numpy arrays (timestamps in float seconds since
the epoch, UTC). Window-level records are small frozen dataclasses; the compiled
dataset keeps them in a tuple and exposes numpy views for the learners.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EmptyDataset, EmptyFile, IoFailure, MalformedRow


class Channel(str, Enum):
    GPS_LAT = "gps_lat"
    GPS_LON = "gps_lon"
    SOUND_DB = "sound_db"
    DUST_MG_M3 = "dust_mg_m3"
    TEMP_C = "temp_c"
    HUMIDITY_PCT = "humidity_pct"
    ILLUMINANCE_LUX = "illuminance_lux"
    EDA_US = "eda_us"


# Recording frequencies of the sensor kit and the wrist device.
NOMINAL_HZ = {
    Channel.GPS_LAT: 1.0,
    Channel.GPS_LON: 1.0,
    Channel.SOUND_DB: 0.4,
    Channel.DUST_MG_M3: 0.4,
    Channel.TEMP_C: 1.0,
    Channel.HUMIDITY_PCT: 1.0,
    Channel.ILLUMINANCE_LUX: 1.0,
    Channel.EDA_US: 4.0,
}

ENV_CHANNELS = (
    Channel.GPS_LAT,
    Channel.GPS_LON,
    Channel.SOUND_DB,
    Channel.DUST_MG_M3,
    Channel.TEMP_C,
    Channel.HUMIDITY_PCT,
    Channel.ILLUMINANCE_LUX,
)

ENV_FEATURES = ("sound_db", "dust_mg_m3", "temp_c", "humidity_pct", "illuminance_lux")
ISOVIST_FEATURES = ("iso_area", "iso_perimeter", "iso_compactness", "iso_occlusivity")
# Column order of every model input matrix and of the compiled file.
FEATURE_NAMES = ENV_FEATURES + ISOVIST_FEATURES

BINARY_CLASSES = ("N", "A")
MULTI_CLASSES = ("N", "LA", "HA")


def parse_timestamp(text: str) -> float:
    """Parse float seconds or an ISO-8601 string into epoch seconds (UTC)."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


@dataclass(frozen=True, eq=False)
class SignalStream:
    """Timestamped scalar series for one channel of one participant."""

    participant_id: str
    channel: Channel
    timestamps: np.ndarray
    values: np.ndarray
    nominal_hz: float

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("timestamps and values must be 1-D and equally long")
        if self.nominal_hz <= 0:
            raise ValueError("nominal_hz must be positive")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.isnan(v).any() or np.isnan(t).any():
            raise ValueError("stream contains NaN")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "channel", Channel(self.channel))
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.timestamps.size

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0]) if len(self) else 0.0

    def with_samples(self, timestamps, values, nominal_hz=None) -> "SignalStream":
        return SignalStream(
            self.participant_id,
            self.channel,
            timestamps,
            values,
            self.nominal_hz if nominal_hz is None else nominal_hz,
        )


def read_stream(path, channel, participant_id: str = "", nominal_hz: float | None = None) -> SignalStream:
    """Read a two-column ``timestamp,value`` file.

    A first line without any numeric field is taken as a header. Rows with an
    empty or NaN value are sensor-loss records and are skipped. Duplicate
    timestamps collapse to the last row.
    """
    channel = Channel(channel)
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"no such stream file: {path}")
    stamps: dict[float, float] = {}
    seen_data = False
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and not any(_is_number(cell) for cell in row):
                continue
            if len(row) != 2:
                raise MalformedRow(path, lineno, f"expected 2 fields, got {len(row)}")
            try:
                ts = parse_timestamp(row[0])
            except ValueError:
                raise MalformedRow(path, lineno, f"bad timestamp {row[0]!r}") from None
            seen_data = True
            raw = row[1].strip()
            if raw == "":
                continue
            try:
                value = float(raw)
            except ValueError:
                raise MalformedRow(path, lineno, f"bad value {raw!r}") from None
            if math.isnan(value):
                continue
            if not math.isfinite(ts):
                raise MalformedRow(path, lineno, "non-finite timestamp")
            stamps.pop(ts, None)
            stamps[ts] = value
    if not seen_data:
        raise EmptyFile(f"{path} holds no samples")
    t = np.fromiter(stamps.keys(), dtype=float, count=len(stamps))
    v = np.fromiter(stamps.values(), dtype=float, count=len(stamps))
    order = np.argsort(t, kind="stable")
    hz = NOMINAL_HZ[channel] if nominal_hz is None else nominal_hz
    return SignalStream(participant_id, channel, t[order], v[order], hz)


def write_stream(stream: SignalStream, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write("timestamp,value\n")
            for t, v in zip(stream.timestamps.tolist(), stream.values.tolist()):
                fh.write(f"{t!r},{v!r}\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


@dataclass(frozen=True)
class TimeWindow:
    index: int
    start: float
    end: float
    width_t: float
    partial: bool = False

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("window index must be >= 0")
        if self.end <= self.start:
            raise ValueError("window end must follow start")

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class IsovistDescriptor:
    area: float
    perimeter: float
    compactness: float
    occlusivity: float

    def as_tuple(self):
        return (self.area, self.perimeter, self.compactness, self.occlusivity)


@dataclass(frozen=True)
class EventVector:
    """Window-averaged environment features plus the isovist at window start."""

    window: TimeWindow
    sound_db: float
    dust_mg_m3: float
    temp_c: float
    humidity_pct: float
    illuminance_lux: float
    isovist: IsovistDescriptor
    gps_lat: float
    gps_lon: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in self.features()):
            raise ValueError(f"non-finite feature in window {self.window.index}")

    def features(self) -> tuple:
        return (
            self.sound_db,
            self.dust_mg_m3,
            self.temp_c,
            self.humidity_pct,
            self.illuminance_lux,
        ) + self.isovist.as_tuple()


@dataclass(frozen=True)
class ResponseLabel:
    window: TimeWindow
    nscr: int
    binary: str
    multiclass: str

    def __post_init__(self):
        if self.nscr < 0:
            raise ValueError("nscr must be >= 0")
        if (self.binary == "N") != (self.nscr == 0) or (self.multiclass == "N") != (self.nscr == 0):
            raise ValueError(f"label {self.binary}/{self.multiclass} inconsistent with nscr={self.nscr}")


@dataclass(frozen=True)
class ParticipantDataset:
    participant_id: str
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        idx = [ev.window.index for ev, _ in self.rows]
        if idx != sorted(idx):
            raise ValueError("rows must be ordered by window index")

    @property
    def m(self) -> int:
        return len(self.rows)


class CompiledRow(NamedTuple):
    participant_id: str
    event: EventVector
    response: ResponseLabel


@dataclass(frozen=True)
class CompiledDataset:
    """Stacked (participant, event, response) rows with a fixed column order."""

    participants: int
    rows: tuple
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(CompiledRow(*r) for r in self.rows))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self):
        return len(self.rows)

    @cached_property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, len(self.feature_names)))
        return np.array([r.event.features() for r in self.rows], dtype=float)

    def labels(self, target: str = "binary") -> np.ndarray:
        if target not in ("binary", "multiclass"):
            raise ValueError(f"unknown target {target!r}")
        return np.array([getattr(r.response, target) for r in self.rows], dtype=object)

    @cached_property
    def nscr(self) -> np.ndarray:
        return np.array([r.response.nscr for r in self.rows], dtype=int)

    @cached_property
    def participant_ids(self) -> np.ndarray:
        return np.array([r.participant_id for r in self.rows], dtype=object)

    @cached_property
    def gps(self) -> np.ndarray:
        return np.array([(r.event.gps_lat, r.event.gps_lon) for r in self.rows], dtype=float).reshape(-1, 2)

    def subset(self, indices) -> "CompiledDataset":
        rows = tuple(self.rows[i] for i in indices)
        return CompiledDataset(len({r.participant_id for r in rows}), rows, self.feature_names)

    @classmethod
    def from_arrays(
        cls,
        X,
        nscr,
        participant_ids: Sequence[str] | None = None,
        gps=None,
        window_seconds: float = 5.0,
        ha_boundary: str = "ge6",
    ) -> "CompiledDataset":
        """Build a dataset straight from a feature matrix, mainly for tests and sweeps."""
        from .arousal import label

        X = np.asarray(X, dtype=float)
        nscr = np.asarray(nscr, dtype=int)
        if X.ndim != 2 or X.shape[1] != len(FEATURE_NAMES):
            raise ValueError(f"X must have {len(FEATURE_NAMES)} columns")
        n = X.shape[0]
        pids = list(participant_ids) if participant_ids is not None else ["p0"] * n
        gps = np.zeros((n, 2)) if gps is None else np.asarray(gps, dtype=float)
        counters: Counter = Counter()
        rows = []
        for i in range(n):
            k = counters[pids[i]]
            counters[pids[i]] += 1
            w = TimeWindow(k, k * window_seconds, (k + 1) * window_seconds, window_seconds)
            iso = IsovistDescriptor(*map(float, X[i, 5:9]))
            ev = EventVector(w, *map(float, X[i, :5]), iso, float(gps[i, 0]), float(gps[i, 1]))
            b, m = label(int(nscr[i]), ha_boundary)
            rows.append(CompiledRow(pids[i], ev, ResponseLabel(w, int(nscr[i]), b, m)))
        return cls(len(counters), tuple(rows))


COMPILED_HEADER = (
    ("participant_id", "window_index")
    + FEATURE_NAMES
    + ("nscr", "binary", "multiclass", "window_start", "window_end", "width_t", "gps_lat", "gps_lon")
)


def write_compiled(dataset: CompiledDataset, path) -> None:
    if not dataset.rows:
        raise EmptyDataset("refusing to write an empty compiled dataset")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(COMPILED_HEADER) + "\n")
            for pid, ev, resp in dataset.rows:
                w = ev.window
                cells = [pid, str(w.index)]
                cells += [repr(float(x)) for x in ev.features()]
                cells += [str(resp.nscr), resp.binary, resp.multiclass]
                cells += [repr(float(x)) for x in (w.start, w.end, w.width_t, ev.gps_lat, ev.gps_lon)]
                fh.write(",".join(cells) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_compiled(path) -> CompiledDataset:
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"no such compiled dataset: {path}")
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        if tuple(header) != COMPILED_HEADER:
            raise MalformedRow(path, 1, "unexpected header")
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(COMPILED_HEADER):
                raise MalformedRow(path, lineno, f"expected {len(COMPILED_HEADER)} fields")
            try:
                rec = dict(zip(COMPILED_HEADER, cells))
                w = TimeWindow(
                    int(rec["window_index"]),
                    float(rec["window_start"]),
                    float(rec["window_end"]),
                    float(rec["width_t"]),
                )
                iso = IsovistDescriptor(*(float(rec[k]) for k in ISOVIST_FEATURES))
                ev = EventVector(
                    w,
                    *(float(rec[k]) for k in ENV_FEATURES),
                    iso,
                    float(rec["gps_lat"]),
                    float(rec["gps_lon"]),
                )
                resp = ResponseLabel(w, int(rec["nscr"]), rec["binary"], rec["multiclass"])
            except ValueError as exc:
                raise MalformedRow(path, lineno, str(exc)) from None
            rows.append(CompiledRow(rec["participant_id"], ev, resp))
    if not rows:
        raise EmptyFile(f"{path} holds no rows")
    return CompiledDataset(len({r.participant_id for r in rows}), tuple(rows))


@dataclass(frozen=True)
class LabelSummary:
    total: int
    binary: dict = field(default_factory=dict)
    multiclass: dict = field(default_factory=dict)


def summarize(dataset: CompiledDataset | Iterable[ResponseLabel]) -> LabelSummary:
    """Count rows per binary and per multiclass label."""
    if isinstance(dataset, CompiledDataset):
        responses = [r.response for r in dataset.rows]
    else:
        responses = list(dataset)
    binary = {c: 0 for c in BINARY_CLASSES}
    multi = {c: 0 for c in MULTI_CLASSES}
    for resp in responses:
        binary[resp.binary] += 1
        multi[resp.multiclass] += 1
    return LabelSummary(len(responses), binary, multi)
