"""Grid aggregation of responses by GPS position, normalisation and GeoJSON export."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CompiledDataset
from .errors import EmptyBins, IoFailure, NoGps
from .isovist import project_gps, unproject


@dataclass(frozen=True)
class GeoBin:
    cell: tuple
    centroid_lat: float
    centroid_lon: float
    contributions: dict
    r_mean: float
    r_norm: float = float("nan")

    @property
    def n_participants(self) -> int:
        return len(self.contributions)


def bin_responses(lat, lon, participants, values, g: float = 10.0, origin: tuple | None = None,
                  divide_by_total: bool = False) -> list[GeoBin]:
    """Average per participant within each ``g``-meter cell, then across participants.

    ``origin`` (lat, lon) anchors the grid; by default the south-west corner
    of the data. With ``divide_by_total`` the participant sum is divided by the
    number of participants in the whole data set instead of per cell.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    vals = np.asarray(values, dtype=float)
    pids = np.asarray(participants, dtype=object)
    ok = np.isfinite(lat) & np.isfinite(lon)
    if not ok.any():
        raise NoGps("no row carries a GPS fix")
    if g <= 0:
        raise ValueError("grid size must be positive")
    lat, lon, vals, pids = lat[ok], lon[ok], vals[ok], pids[ok]
    o_lat, o_lon = origin if origin is not None else (float(lat.min()), float(lon.min()))
    x, y = project_gps(lat, lon, o_lat, o_lon)
    gx = np.floor(x / g).astype(int)
    gy = np.floor(y / g).astype(int)
    total = len(set(pids.tolist()))
    cells: dict = {}
    for i in range(len(vals)):
        cells.setdefault((int(gx[i]), int(gy[i])), {}).setdefault(pids[i], []).append(vals[i])
    bins = []
    for cell in sorted(cells):
        contrib = {p: float(np.mean(v)) for p, v in sorted(cells[cell].items())}
        denom = total if divide_by_total else len(contrib)
        r_mean = float(sum(contrib.values()) / denom)
        c_lat, c_lon = unproject((cell[0] + 0.5) * g, (cell[1] + 0.5) * g, o_lat, o_lon)
        bins.append(GeoBin(cell, float(c_lat), float(c_lon), contrib, r_mean))
    return bins


def bin_dataset(data: CompiledDataset, g: float = 10.0, origin=None, divide_by_total: bool = False):
    gps = data.gps
    return bin_responses(gps[:, 0], gps[:, 1], data.participant_ids, data.nscr, g, origin, divide_by_total)


def normalize(bins: Sequence[GeoBin]) -> list[GeoBin]:
    """Min-max scale r_mean to [0, 1]; a constant set maps to 0.5."""
    if not bins:
        raise EmptyBins("nothing to normalise")
    r = np.array([b.r_mean for b in bins])
    lo, hi = r.min(), r.max()
    norm = np.full(len(r), 0.5) if hi == lo else (r - lo) / (hi - lo)
    return [GeoBin(b.cell, b.centroid_lat, b.centroid_lon, b.contributions, b.r_mean, float(v))
            for b, v in zip(bins, norm)]


def export_geojson(bins: Sequence[GeoBin], path) -> None:
    if not bins:
        raise EmptyBins("no bins to export")
    feats = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [b.centroid_lon, b.centroid_lat]},
            "properties": {"r_mean": b.r_mean, "r_norm": b.r_norm, "n_participants": b.n_participants},
        }
        for b in bins
    ]
    try:
        Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": feats}, indent=1),
                              encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
