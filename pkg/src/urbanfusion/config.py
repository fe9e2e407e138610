"""Run configuration: a YAML document with one nested section per stage.

Relative paths resolve against the directory holding the config file. Every
section is a dataclass whose defaults are the shipped settings; unknown keys
are rejected so typos surface as :class:`ConfigInvalid`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core import Channel
from .errors import ConfigInvalid
from .predictors import DEFAULTS


@dataclass
class EdaPrepSection:
    theta: float = 0.001
    threshold_mode: str = "clamp"
    two_level_fraction: float = 0.95
    zero_fraction: float = 0.50
    loss_fraction: float = 0.30


@dataclass
class ArousalSection:
    tau1: float = 2.0
    tau2: float = 0.75
    optimize: bool = True
    restarts: int = 2
    residual_cap: float = 0.5
    amp_threshold: float = 0.01
    rise_time_min: float = 1.0
    rise_time_max: float = 3.7
    ha_boundary: str = "ge6"


@dataclass
class IsovistSection:
    fov_deg: float = 180.0
    radius: float = 100.0
    angular_step_deg: float = 1.0


@dataclass
class TrainSection:
    target: str = "binary"
    folds: int = 10
    kinds: list = field(default_factory=lambda: ["reptree"])
    # Rows drawn (seeded) before cross-validation; 0 keeps everything.
    max_rows: int = 0
    reptree: dict = field(default_factory=dict)
    mlp: dict = field(default_factory=dict)
    svm: dict = field(default_factory=dict)


@dataclass
class FuzzySection:
    target: str = "binary"
    folds: int = 10
    grow_fraction: float = 2.0 / 3.0
    min_precision: float = 0.5
    max_rules: int = 50


@dataclass
class FeatselSection:
    target: str = "binary"
    kinds: list = field(default_factory=lambda: ["reptree", "mlp", "svm"])
    max_rows: int = 1000
    resplit_per_level: bool = False
    top_k: int = 1


@dataclass
class SomSection:
    width: int = 20
    height: int = 20
    epochs: int = 25
    finetune: int = 20


@dataclass
class GeomapSection:
    grid_meters: float = 10.0
    divide_by_total: bool = False


@dataclass
class Participant:
    id: str
    streams: dict
    walk_start: float
    walk_end: float
    marks: Path | None = None
    clock_offset_s: float = 0.0


SECTIONS = {
    "eda_prep": EdaPrepSection,
    "arousal": ArousalSection,
    "isovist": IsovistSection,
    "train": TrainSection,
    "fuzzy": FuzzySection,
    "featsel": FeatselSection,
    "som": SomSection,
    "geomap": GeomapSection,
}
ANALYSES = ("train", "fuzzy", "featsel", "som", "geomap")


@dataclass
class RunConfig:
    participants: list
    out: Path
    seed: int = 0
    window_seconds: float = 5.0
    origin: tuple | None = None
    obstacles: Path | None = None
    analyses: list = field(default_factory=lambda: list(ANALYSES))
    eda_prep: EdaPrepSection = field(default_factory=EdaPrepSection)
    arousal: ArousalSection = field(default_factory=ArousalSection)
    isovist: IsovistSection = field(default_factory=IsovistSection)
    train: TrainSection = field(default_factory=TrainSection)
    fuzzy: FuzzySection = field(default_factory=FuzzySection)
    featsel: FeatselSection = field(default_factory=FeatselSection)
    som: SomSection = field(default_factory=SomSection)
    geomap: GeomapSection = field(default_factory=GeomapSection)

    def validate(self) -> "RunConfig":
        if not self.participants:
            raise ConfigInvalid("no participants listed")
        if self.window_seconds <= 0:
            raise ConfigInvalid("window_seconds must be positive")
        seen = set()
        for p in self.participants:
            if p.id in seen:
                raise ConfigInvalid(f"duplicate participant id {p.id!r}")
            seen.add(p.id)
            missing = [ch.value for ch in Channel if ch not in p.streams]
            if missing:
                raise ConfigInvalid(f"participant {p.id}: no stream for {', '.join(missing)}")
            for path in list(p.streams.values()) + ([p.marks] if p.marks else []):
                if not path.is_file():
                    raise ConfigInvalid(f"missing file: {path}")
            if p.walk_end <= p.walk_start:
                raise ConfigInvalid(f"participant {p.id}: walk_end must follow walk_start")
        if self.obstacles is not None and not self.obstacles.is_file():
            raise ConfigInvalid(f"missing file: {self.obstacles}")
        bad = [a for a in self.analyses if a not in ANALYSES]
        if bad:
            raise ConfigInvalid(f"unknown analyses {bad}")
        if self.arousal.ha_boundary not in ("ge6", "gt6"):
            raise ConfigInvalid("arousal.ha_boundary must be ge6 or gt6")
        if self.eda_prep.threshold_mode not in ("clamp", "zero_above"):
            raise ConfigInvalid("eda_prep.threshold_mode must be clamp or zero_above")
        for sec in (self.train, self.fuzzy, self.featsel):
            if sec.target not in ("binary", "multiclass"):
                raise ConfigInvalid(f"unknown target {sec.target!r}")
        for kind in list(self.train.kinds) + list(self.featsel.kinds):
            if kind not in DEFAULTS:
                raise ConfigInvalid(f"unknown predictor {kind!r}")
        return self


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"section {name!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigInvalid(f"unknown keys in {name!r}: {unknown}")
    return cls(**raw)


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def parse_override(text: str):
    """``section.key=value`` -> (path list, YAML-parsed value)."""
    if "=" not in text:
        raise ConfigInvalid(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(value)


def apply_overrides(raw: dict, overrides) -> dict:
    for text in overrides or ():
        keys, value = parse_override(text)
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigInvalid(f"override {text!r} descends into a scalar")
        node[keys[-1]] = value
    return raw


def from_dict(raw: dict, base_dir=".") -> RunConfig:
    base = Path(base_dir)
    top = {"participants", "out", "seed", "window_seconds", "origin", "obstacles", "analyses", *SECTIONS}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigInvalid(f"unknown top-level keys: {unknown}")
    parts = []
    for entry in raw.get("participants") or []:
        try:
            streams = {Channel(k): _resolve(base, v) for k, v in entry["streams"].items()}
            parts.append(Participant(
                str(entry["id"]), streams, float(entry["walk_start"]), float(entry["walk_end"]),
                _resolve(base, entry["marks"]) if entry.get("marks") else None,
                float(entry.get("clock_offset_s", 0.0)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad participant entry: {exc}") from None
    origin = raw.get("origin")
    cfg = RunConfig(
        participants=parts,
        out=_resolve(base, raw.get("out", "run")),
        seed=int(raw.get("seed", 0)),
        window_seconds=float(raw.get("window_seconds", 5.0)),
        origin=tuple(float(v) for v in origin) if origin else None,
        obstacles=_resolve(base, raw["obstacles"]) if raw.get("obstacles") else None,
        analyses=list(raw.get("analyses", ANALYSES)),
        **{name: _section(cls, raw.get(name), name) for name, cls in SECTIONS.items()},
    )
    return cfg.validate()


def load_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"missing file: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"{path}: top level must be a mapping")
    return from_dict(apply_overrides(raw, overrides), path.parent)
