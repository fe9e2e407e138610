"""Synthetic urban walks with a planted environment-to-arousal rule.

A walk follows a looped street path through a block of rectangular buildings.
The environment is piecewise constant over segments of 25-75 s; whenever the
planted rule holds on a segment, every 5 s slot in it receives one or two
Bateman-shaped skin-conductance pulses on top of a slow tonic drift. Streams
are written at the sensor kit's native rates together with the ground truth.
"""

from __future__ import annotations

import csv
import math
import operator
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .arousal import bateman, bateman_peak, label
from .core import NOMINAL_HZ, Channel, SignalStream, write_stream
from .edaprep import TruncationMarks, write_marks
from .errors import SpecInvalid
from .isovist import ObstacleMap, unproject, write_obstacles

_OPS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le}
_COND = re.compile(r"^\s*(\w+)\s*(>=|<=|>|<)\s*(-?[\d.]+(?:e-?\d+)?)\s*$")

# Per-channel value bands of the environment programs. Channels the planted
# rule may test have a "high" and a "low" band kept clear of the thresholds.
BANDS = {
    "sound_db": ((50.0, 63.0), (69.0, 80.0)),
    "dust_mg_m3": ((0.005, 0.08),),
    "temp_c": ((14.0, 30.0),),
    "humidity_pct": ((30.0, 80.0),),
    "illuminance_lux": ((150.0, 520.0), (650.0, 5000.0)),
}
NOISE_SD = {"sound_db": 1.0, "dust_mg_m3": 0.003, "temp_c": 0.2, "humidity_pct": 1.0, "illuminance_lux": 15.0}


def parse_rule(text: str | None):
    """Parse ``feat op value [and|or ...]`` (``and`` binds tighter) into a predicate."""
    if text is None or not text.strip():
        return lambda env: False
    clauses = []
    for part in re.split(r"\s+or\s+", text.strip()):
        conds = []
        for cond in re.split(r"\s+and\s+", part):
            m = _COND.match(cond)
            if not m:
                raise SpecInvalid(f"cannot parse rule condition {cond!r}")
            if m[1] not in BANDS:
                raise SpecInvalid(f"rule tests unknown feature {m[1]!r}")
            conds.append((m[1], _OPS[m[2]], float(m[3])))
        clauses.append(conds)
    return lambda env: any(all(op(env[f], v) for f, op, v in conds) for conds in clauses)


def default_path() -> np.ndarray:
    return np.array([(0.0, 0.0), (300.0, 0.0), (300.0, 200.0), (0.0, 200.0)])


def default_obstacles() -> ObstacleMap:
    """Buildings inside and around the default street loop, clear of the path."""
    rects = []
    for y0, y1 in ((15.0, 85.0), (115.0, 185.0)):
        for x0 in np.arange(15.0, 285.0, 55.0):
            rects.append((x0, y0, min(x0 + 40.0, 285.0), y1))
    for x0 in np.arange(-60.0, 360.0, 70.0):
        rects.append((x0, -70.0, x0 + 50.0, -15.0))
        rects.append((x0, 215.0, x0 + 50.0, 270.0))
    for y0 in np.arange(0.0, 200.0, 60.0):
        rects.append((-70.0, y0, -15.0, y0 + 45.0))
        rects.append((315.0, y0, 370.0, y0 + 45.0))
    return ObstacleMap(tuple(np.array([(a, b), (c, b), (c, d), (a, d)]) for a, b, c, d in rects))


@dataclass(frozen=True)
class WalkSpec:
    participant_id: str = "p01"
    seed: int = 0
    duration: float = 1740.0
    lead_in: float = 60.0
    lead_out: float = 10.0
    start_epoch: float = 1_460_000_000.0
    origin: tuple = (47.3769, 8.5417)
    path: tuple | None = None
    speed: float = 1.2
    segment_choices: tuple = (25.0, 50.0, 75.0)
    # Probability that a rule-tested channel sits in its upper band.
    high_prob: dict = field(default_factory=lambda: {"sound_db": 0.3, "illuminance_lux": 0.7})
    rule: str | None = "sound_db > 66 or illuminance_lux < 580"
    label_noise: float = 0.0
    sensor_noise: float = 0.0
    eda_noise: float = 0.0
    pulse_amplitude: tuple = (0.05, 0.4)
    # Smallest trough-to-peak rise each pulse must show; None disables the check.
    min_observable: float | None = 0.02
    double_pulse_prob: float = 0.3
    corruption: str | None = None
    tau: tuple = (2.0, 0.75)
    tonic_level: float = 2.0
    slot_seconds: float = 5.0
    amp_threshold: float = 0.01

    def validate(self):
        if self.duration <= 0 or self.lead_in < 0 or self.lead_out < 0:
            raise SpecInvalid("durations must be positive")
        if self.corruption not in (None, "type1", "type2"):
            raise SpecInvalid(f"unknown corruption {self.corruption!r}")
        if not 0 <= self.label_noise <= 1:
            raise SpecInvalid("label_noise must lie in [0, 1]")
        if self.tau[0] <= self.tau[1] or self.tau[1] <= 0:
            raise SpecInvalid("tau must satisfy tau1 > tau2 > 0")
        lo, hi = self.pulse_amplitude
        if not 0 < lo <= hi:
            raise SpecInvalid("pulse amplitudes must be positive")
        parse_rule(self.rule)


@dataclass(frozen=True, eq=False)
class Walk:
    spec: WalkSpec
    streams: dict
    walk_start: float
    walk_end: float
    pulses: np.ndarray  # (onset, amplitude)
    slot_aroused: np.ndarray
    segments: list

    def expected_nscr(self, t: float = 5.0) -> np.ndarray:
        n = int(math.floor((self.walk_end - self.walk_start) / t + 1e-9))
        edges = self.walk_start + t * np.arange(n + 1)
        counted = self.pulses[self.pulses[:, 1] >= self.spec.amp_threshold, 0] if len(self.pulses) else np.empty(0)
        return np.histogram(counted, bins=edges)[0] if n else np.empty(0, dtype=int)


def _walk_positions(path, speed, times, offset_m):
    loop = np.vstack([path, path[:1]])
    seg = np.diff(loop, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.r_[0.0, np.cumsum(lens)]
    s = (offset_m + speed * times) % cum[-1]
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1)
    frac = (s - cum[k]) / lens[k]
    return loop[k] + frac[:, None] * seg[k]


def _plant_pulses(onsets, amps, t, tau, min_obs):
    """Sum of pulses; amplitudes are raised until each rise is observable."""
    dt = t[1] - t[0]
    tp, peak = bateman_peak(*tau)
    span = int(60.0 / dt)
    phasic = np.zeros(len(t))
    look = int(round(5.0 / dt))
    min_rise = int(math.ceil(1.0 / dt - 1e-9))
    final = []
    for on, amp in zip(onsets, amps):
        i0 = int(round((on - t[0]) / dt))
        shape = bateman(t[i0 : i0 + span] - t[i0], *tau) / peak
        if min_obs is not None:
            for _ in range(60):
                sig = phasic[i0 : i0 + look] + amp * shape[:look]
                rising = np.diff(sig) > 0
                pk = int(np.argmin(rising)) if not rising.all() else len(rising)
                if pk >= min_rise and sig[pk] - sig[0] >= min_obs:
                    break
                amp *= 1.25
        phasic[i0 : i0 + len(shape)] += amp * shape
        final.append(amp)
    return phasic, np.array(final)


def generate_walk(spec: WalkSpec) -> Walk:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    rule = parse_rule(spec.rule)
    walk_start = spec.start_epoch + spec.lead_in
    walk_end = walk_start + spec.duration
    rec_end = walk_end + spec.lead_out
    # Environment program: segments tiling the whole recording.
    # Segment edges sit on the walk-start grid of the shortest segment length,
    # so windows of that width never straddle two programs.
    unit = min(spec.segment_choices)
    segments = []
    t = walk_start - unit * math.ceil(spec.lead_in / unit)
    while t < rec_end:
        length = float(rng.choice(spec.segment_choices))
        env = {}
        for ch, bands in BANDS.items():
            if len(bands) == 2:
                band = bands[1] if rng.random() < spec.high_prob.get(ch, 0.5) else bands[0]
            else:
                band = bands[0]
            env[ch] = float(rng.uniform(*band))
        segments.append((t, t + length, env))
        t += length
    seg_starts = np.array([s[0] for s in segments])

    def env_at(times):
        k = np.searchsorted(seg_starts, times, side="right") - 1
        return {ch: np.array([segments[i][2][ch] for i in k]) for ch in BANDS}

    # Slots and pulses.
    n_slots = int(math.floor(spec.duration / spec.slot_seconds + 1e-9))
    slot_t = walk_start + spec.slot_seconds * np.arange(n_slots)
    slot_env = env_at(slot_t)
    aroused = np.array([rule({ch: slot_env[ch][i] for ch in BANDS}) for i in range(n_slots)], dtype=bool)
    flips = rng.random(n_slots) < spec.label_noise
    aroused ^= flips
    onsets, amps = [], []
    for i in np.flatnonzero(aroused):
        if rng.random() < spec.double_pulse_prob:
            offs = [1.0, 3.5]
        else:
            offs = [float(rng.choice(np.arange(1.0, 3.5 + 1e-9, 0.25)))]
        for off in offs:
            onsets.append(slot_t[i] + off)
            amps.append(float(rng.uniform(*spec.pulse_amplitude)))
    hz = NOMINAL_HZ[Channel.EDA_US]
    t_eda = spec.start_epoch + np.arange(int(round((rec_end - spec.start_epoch) * hz)) + 1) / hz
    phasic, amps = _plant_pulses(onsets, amps, t_eda, spec.tau, spec.min_observable)
    phase = rng.uniform(0, 2 * math.pi)
    tonic = spec.tonic_level + 0.15 * np.sin(2 * math.pi * (t_eda - spec.start_epoch) / 900.0 + phase)
    eda = tonic + phasic
    if spec.eda_noise > 0:
        eda = eda + rng.normal(0, spec.eda_noise, len(eda))
    keep = np.ones(len(eda), dtype=bool)
    if spec.corruption == "type1":
        runs = np.repeat(rng.integers(0, 2, len(eda) // 40 + 1), 40)[: len(eda)]
        eda = np.where(runs == 1, 0.8, 0.2)
        keep = rng.random(len(eda)) >= 0.35
    elif spec.corruption == "type2":
        blocks = np.repeat(rng.random(len(eda) // 100 + 1) < 0.7, 100)[: len(eda)]
        eda = np.where(blocks, 0.0, eda)
    pid = spec.participant_id
    streams = {Channel.EDA_US: SignalStream(pid, Channel.EDA_US, t_eda[keep], eda[keep], hz)}
    # Environment streams at their native rates.
    path = default_path() if spec.path is None else np.asarray(spec.path, dtype=float)
    offset_m = float(rng.uniform(0, 1000.0))
    for ch in (Channel.SOUND_DB, Channel.DUST_MG_M3, Channel.TEMP_C, Channel.HUMIDITY_PCT, Channel.ILLUMINANCE_LUX):
        hz = NOMINAL_HZ[ch]
        ts = spec.start_epoch + np.arange(int(math.floor((rec_end - spec.start_epoch) * hz)) + 1) / hz
        v = env_at(ts)[ch.value]
        if spec.sensor_noise > 0:
            v = v + rng.normal(0, NOISE_SD[ch.value] * spec.sensor_noise, len(v))
        streams[ch] = SignalStream(pid, ch, ts, v, hz)
    ts = spec.start_epoch + np.arange(int(math.floor(rec_end - spec.start_epoch)) + 1, dtype=float)
    xy = _walk_positions(path, spec.speed, ts - spec.start_epoch, offset_m)
    lat, lon = unproject(xy[:, 0], xy[:, 1], *spec.origin)
    streams[Channel.GPS_LAT] = SignalStream(pid, Channel.GPS_LAT, ts, lat, 1.0)
    streams[Channel.GPS_LON] = SignalStream(pid, Channel.GPS_LON, ts, lon, 1.0)
    pulses = np.column_stack([onsets, amps]) if onsets else np.empty((0, 2))
    return Walk(spec, streams, walk_start, walk_end, pulses, aroused, segments)


def write_walk(walk: Walk, directory) -> dict:
    """Write streams, marks and ground truth; return the manifest entry."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entry = {"id": walk.spec.participant_id, "streams": {}, "walk_start": walk.walk_start,
             "walk_end": walk.walk_end, "marks": f"{d.name}/marks.csv"}
    for ch, s in walk.streams.items():
        write_stream(s, d / f"{ch.value}.csv")
        entry["streams"][ch.value] = f"{d.name}/{ch.value}.csv"
    write_marks(TruncationMarks(((walk.walk_start, walk.walk_end),)), d / "marks.csv")
    with (d / "truth.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_index", "nscr", "binary", "multiclass"])
        for i, n in enumerate(walk.expected_nscr(walk.spec.slot_seconds)):
            w.writerow([i, int(n), *label(int(n))])
    with (d / "pulses.csv").open("w", newline="", encoding="utf-8") as fh:
        fh.write("onset,amplitude\n")
        for on, amp in walk.pulses:
            fh.write(f"{on!r},{amp!r}\n")
    return entry


def generate_suite(out_dir, n_participants: int = 3, seed: int = 0, **spec_kwargs) -> Path:
    """Write ``n_participants`` walks, the obstacle map and a run config; return the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = WalkSpec(**spec_kwargs)
    entries = []
    for k in range(n_participants):
        pid = f"p{k + 1:02d}"
        walk = generate_walk(replace(base, participant_id=pid, seed=seed * 1000 + k,
                                     start_epoch=base.start_epoch + 86400.0 * k))
        entries.append(write_walk(walk, out / pid))
    write_obstacles(default_obstacles(), out / "obstacles.geojson", *base.origin)
    config = {
        "out": "run",
        "seed": seed,
        "origin": list(base.origin),
        "obstacles": "obstacles.geojson",
        "participants": entries,
    }
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path
