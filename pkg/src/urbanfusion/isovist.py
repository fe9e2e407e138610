"""Field-of-view visibility polygons (isovists) against a 2-D obstacle map.

Coordinates are local planar meters obtained by an equirectangular projection
around an origin fix. Rays are cast on a uniform angular fan plus extra rays
aimed at obstacle vertices and at the points where obstacle edges cross the
range circle, so polygon corners are located exactly rather than sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import IsovistDescriptor
from .errors import DegeneratePolygon, DegenerateStep, IoFailure, OriginInsideObstacle

EARTH_RADIUS_M = 6371000.0
# Angular offset of the rays flanking every vertex-aimed ray.
VERTEX_EPS = 1e-6
ON_EDGE_TOL = 1e-6


def project_gps(lat, lon, origin_lat: float, origin_lon: float):
    """Equirectangular projection of degrees to local meters (x east, y north)."""
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    lat0, lon0 = math.radians(origin_lat), math.radians(origin_lon)
    x = EARTH_RADIUS_M * math.cos(lat0) * (lon - lon0)
    y = EARTH_RADIUS_M * (lat - lat0)
    return x, y


def unproject(x, y, origin_lat: float, origin_lon: float):
    lat0, lon0 = math.radians(origin_lat), math.radians(origin_lon)
    lat = np.asarray(y, dtype=float) / EARTH_RADIUS_M + lat0
    lon = np.asarray(x, dtype=float) / (EARTH_RADIUS_M * math.cos(lat0)) + lon0
    return np.degrees(lat), np.degrees(lon)


def heading(prev, curr, last: float | None = None) -> float:
    """Walk direction from ``prev`` to ``curr``; a zero step reuses ``last``."""
    dx, dy = curr[0] - prev[0], curr[1] - prev[1]
    if dx == 0 and dy == 0:
        if last is None:
            raise DegenerateStep(f"no movement at {tuple(curr)} and no earlier heading")
        return last
    return math.atan2(dy, dx)


def track_headings(points) -> np.ndarray:
    """Heading at each position of a track.

    Position i uses the step from i-1 to i. Stationary steps reuse the last
    heading; positions before the first movement take the first heading.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    out = np.full(n, np.nan)
    last = None
    for i in range(1, n):
        if np.any(pts[i] != pts[i - 1]):
            last = heading(pts[i - 1], pts[i])
        out[i] = np.nan if last is None else last
    valid = np.flatnonzero(~np.isnan(out))
    if valid.size == 0:
        raise DegenerateStep("track never moves; heading undefined")
    out[: valid[0]] = out[valid[0]]
    return out


def _signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class ObstacleMap:
    """Simple polygons (building footprints) in local meters, stored counterclockwise."""

    polygons: tuple

    def __post_init__(self):
        rings = []
        for poly in self.polygons:
            ring = np.asarray(poly, dtype=float)
            if len(ring) > 1 and np.allclose(ring[0], ring[-1]):
                ring = ring[:-1]
            if ring.ndim != 2 or ring.shape[1] != 2 or len(ring) < 3:
                raise ValueError("obstacle polygons need >= 3 distinct 2-D vertices")
            if _signed_area(ring) < 0:
                ring = ring[::-1]
            ring = ring.copy()
            ring.flags.writeable = False
            rings.append(ring)
        object.__setattr__(self, "polygons", tuple(rings))
        if rings:
            a = np.concatenate(rings)
            b = np.concatenate([np.roll(r, -1, axis=0) for r in rings])
            owner = np.repeat(np.arange(len(rings)), [len(r) for r in rings])
        else:
            a = b = np.empty((0, 2))
            owner = np.empty(0, dtype=int)
        object.__setattr__(self, "_seg_a", a)
        object.__setattr__(self, "_seg_b", b)
        object.__setattr__(self, "_owner", owner)

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        return self._seg_a, self._seg_b

    def segments_near(self, origin, radius: float):
        """Segments whose bounding box comes within ``radius`` of ``origin``."""
        a, b = self._seg_a, self._seg_b
        if a.size == 0:
            return a, b
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        o = np.asarray(origin, dtype=float)
        gap = np.maximum(lo - o, 0) + np.maximum(o - hi, 0)
        keep = np.hypot(gap[:, 0], gap[:, 1]) <= radius
        return a[keep], b[keep]

    def contains_strictly(self, point) -> bool:
        """Even-odd test per polygon; points on a boundary are not inside."""
        a, b = self._seg_a, self._seg_b
        if a.size == 0:
            return False
        p = np.asarray(point, dtype=float)
        if _point_segment_distance(p[None], a, b).min() <= 1e-9:
            return False
        (x, y), (xn, yn) = a.T, b.T
        straddle = (y > p[1]) != (yn > p[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x + (xn - x) * (p[1] - y) / (yn - y)
        crosses = straddle & (p[0] < xcross)
        counts = np.bincount(self._owner, weights=crosses, minlength=len(self.polygons))
        return bool(np.any(counts.astype(int) % 2 == 1))


def _point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance matrix (len(pts), len(a)) from points to segments a-b."""
    e = b - a
    ee = np.einsum("ij,ij->i", e, e)
    rel = pts[:, None, :] - a[None, :, :]
    u = np.clip(np.einsum("kij,ij->ki", rel, e) / np.where(ee > 0, ee, 1.0), 0.0, 1.0)
    closest = a[None] + u[..., None] * e[None]
    d = pts[:, None, :] - closest
    return np.hypot(d[..., 0], d[..., 1])


def load_obstacles(path, origin_lat: float, origin_lon: float) -> ObstacleMap:
    """Read a GeoJSON FeatureCollection of (Multi)Polygons in WGS-84.

    Only exterior rings are used; holes are ignored.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    rings = []
    feats = doc.get("features", []) if doc.get("type") == "FeatureCollection" else [doc]
    for feat in feats:
        geom = feat.get("geometry", feat)
        if geom is None:
            continue
        if geom["type"] == "Polygon":
            polys = [geom["coordinates"]]
        elif geom["type"] == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            continue
        for poly in polys:
            lonlat = np.asarray(poly[0], dtype=float)
            x, y = project_gps(lonlat[:, 1], lonlat[:, 0], origin_lat, origin_lon)
            rings.append(np.column_stack([x, y]))
    return ObstacleMap(tuple(rings))


def write_obstacles(obstacles: ObstacleMap, path, origin_lat: float, origin_lon: float) -> None:
    feats = []
    for ring in obstacles.polygons:
        lat, lon = unproject(ring[:, 0], ring[:, 1], origin_lat, origin_lon)
        coords = [[float(a), float(b)] for a, b in zip(lon, lat)]
        coords.append(coords[0])
        feats.append({"type": "Feature", "properties": {}, "geometry": {"type": "Polygon", "coordinates": [coords]}})
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": feats}), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class VisibilityPolygon:
    """Boundary vertices in order; for a fan, vertex 0 is the viewpoint."""

    vertices: np.ndarray
    origin: np.ndarray
    radius: float
    includes_origin: bool
    # Index into (seg_a, seg_b) of the segment each vertex lies on, -1 for none.
    hit: np.ndarray = None
    seg_a: np.ndarray = None
    seg_b: np.ndarray = None


def _cast(origin: np.ndarray, angles: np.ndarray, a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    d = np.column_stack([np.cos(angles), np.sin(angles)])
    dist = np.full(len(angles), radius)
    hit = np.full(len(angles), -1)
    if len(a):
        e = b - a
        w = a - origin
        denom = d[:, 0:1] * e[None, :, 1] - d[:, 1:2] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]) / denom
            u = (w[None, :, 0] * d[:, 1:2] - w[None, :, 1] * d[:, 0:1]) / denom
        ok = (np.abs(denom) > 1e-15) & (t > 1e-12) & (u >= -1e-9) & (u <= 1 + 1e-9)
        t = np.where(ok, t, np.inf)
        best = t.argmin(axis=1)
        tmin = t[np.arange(len(angles)), best]
        blocked = tmin <= radius
        dist = np.where(blocked, tmin, radius)
        hit = np.where(blocked, best, -1)
    return origin + d * dist[:, None], hit


def _circle_crossings(origin, a, b, radius):
    """Angles at which segments cross the range circle."""
    if not len(a):
        return np.empty(0)
    e = b - a
    w = a - origin
    qa = np.einsum("ij,ij->i", e, e)
    qb = 2 * np.einsum("ij,ij->i", w, e)
    qc = np.einsum("ij,ij->i", w, w) - radius**2
    disc = qb * qb - 4 * qa * qc
    ok = (disc >= 0) & (qa > 0)
    root = np.sqrt(np.where(ok, disc, 0))
    out = []
    for sgn in (-1.0, 1.0):
        u = (-qb + sgn * root) / np.where(qa > 0, 2 * qa, 1)
        sel = ok & (u >= 0) & (u <= 1)
        p = w[sel] + u[sel, None] * e[sel]
        out.append(np.arctan2(p[:, 1], p[:, 0]))
    return np.concatenate(out)


def visibility_polygon(
    origin,
    heading_rad: float,
    obstacles: ObstacleMap,
    fov_deg: float = 180.0,
    radius: float = 100.0,
    angular_step_deg: float = 1.0,
) -> VisibilityPolygon:
    """Visible region within ``fov_deg`` centred on ``heading_rad``, capped at ``radius``.

    A 360 degree field gives the closed visibility region without the viewpoint
    as a vertex.
    """
    o = np.asarray(origin, dtype=float)
    if obstacles.contains_strictly(o):
        raise OriginInsideObstacle(f"viewpoint {tuple(o)} lies inside an obstacle")
    full = fov_deg >= 360.0
    half = math.radians(fov_deg) / 2
    a, b = obstacles.segments_near(o, radius)
    nfan = int(round(fov_deg / angular_step_deg))
    if full:
        rel = np.linspace(-math.pi, math.pi, nfan, endpoint=False)
    else:
        rel = np.linspace(-half, half, nfan + 1)
    extra = []
    if len(a):
        corners = a[np.hypot(*(a - o).T) <= radius]
        phi = np.arctan2(corners[:, 1] - o[1], corners[:, 0] - o[0])
        phi = np.concatenate([phi, _circle_crossings(o, a, b, radius)])
        dphi = (phi - heading_rad + math.pi) % (2 * math.pi) - math.pi
        extra = np.concatenate([dphi - VERTEX_EPS, dphi, dphi + VERTEX_EPS])
        if full:
            extra = (extra + math.pi) % (2 * math.pi) - math.pi
        else:
            extra = extra[(extra > -half) & (extra < half)]
    rel = np.unique(np.concatenate([rel, extra]))
    pts, hit = _cast(o, heading_rad + rel, a, b, radius)
    if not full:
        pts = np.vstack([o[None], pts])
        hit = np.concatenate([[-1], hit])
    return VisibilityPolygon(pts, o, radius, not full, hit, a, b)


def polygon_area(vertices: np.ndarray) -> float:
    return abs(_signed_area(np.asarray(vertices, dtype=float)))


def polygon_perimeter(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, dtype=float)
    return float(np.hypot(*(np.roll(v, -1, axis=0) - v).T).sum())


def _on_segment(pts, hit, a, b) -> np.ndarray:
    ok = hit >= 0
    out = np.zeros(len(pts), dtype=bool)
    if ok.any():
        sa, sb = a[hit[ok]], b[hit[ok]]
        e = sb - sa
        ee = np.einsum("ij,ij->i", e, e)
        u = np.clip(np.einsum("ij,ij->i", pts[ok] - sa, e) / np.where(ee > 0, ee, 1.0), 0, 1)
        gap = pts[ok] - (sa + u[:, None] * e)
        out[ok] = np.hypot(gap[:, 0], gap[:, 1]) <= ON_EDGE_TOL
    return out


def edge_kinds(poly: VisibilityPolygon, obstacles: ObstacleMap | None = None) -> np.ndarray:
    """Label each boundary edge i -> i+1: 'radius', 'obstacle', 'arc' or 'occlusion'.

    An edge lies on an obstacle when either endpoint lies on the segment the
    other endpoint was cast onto; this also catches edges ending at a corner
    that was attributed to the neighbouring segment.
    """
    v = poly.vertices
    n = len(v)
    nxt = np.roll(v, -1, axis=0)
    hit = poly.hit
    hit_next = np.roll(hit, -1)
    shared = (hit >= 0) & (hit == hit_next)
    if poly.seg_a is not None and len(poly.seg_a):
        shared |= _on_segment(v, hit_next, poly.seg_a, poly.seg_b)
        shared |= _on_segment(nxt, hit, poly.seg_a, poly.seg_b)
    kinds = np.full(n, "occlusion", dtype=object)
    r = np.hypot(*(v - poly.origin).T)
    at_cap = np.abs(r - poly.radius) <= ON_EDGE_TOL * max(1.0, poly.radius)
    kinds[at_cap & np.roll(at_cap, -1)] = "arc"
    kinds[shared] = "obstacle"
    if poly.includes_origin:
        kinds[0] = "radius"
        kinds[n - 1] = "radius"
    return kinds


def descriptors(poly: VisibilityPolygon, obstacles: ObstacleMap) -> IsovistDescriptor:
    v = poly.vertices
    area = polygon_area(v)
    if area < 1e-9:
        raise DegeneratePolygon(f"isovist at {tuple(poly.origin)} has no area")
    lengths = np.hypot(*(np.roll(v, -1, axis=0) - v).T)
    perimeter = float(lengths.sum())
    occl = float(lengths[edge_kinds(poly, obstacles) == "occlusion"].sum())
    return IsovistDescriptor(area, perimeter, 4 * math.pi * area / perimeter**2, occl)


@dataclass(frozen=True)
class IsovistParams:
    fov_deg: float = 180.0
    radius: float = 100.0
    angular_step_deg: float = 1.0


def isovist_at(origin, heading_rad, obstacles: ObstacleMap, params: IsovistParams = IsovistParams()):
    poly = visibility_polygon(origin, heading_rad, obstacles, params.fov_deg, params.radius, params.angular_step_deg)
    return descriptors(poly, obstacles)


def track_isovists(points: Sequence, obstacles: ObstacleMap, params: IsovistParams = IsovistParams()):
    """Descriptors at each track position, facing the walk direction."""
    pts = np.asarray(points, dtype=float)
    heads = track_headings(pts)
    return [isovist_at(p, h, obstacles, params) for p, h in zip(pts, heads)]
