import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urbanfusion.errors import DegenerateStep, OriginInsideObstacle
from urbanfusion.isovist import (
    ObstacleMap,
    edge_kinds,
    heading,
    isovist_at,
    load_obstacles,
    polygon_area,
    project_gps,
    track_headings,
    unproject,
    visibility_polygon,
    write_obstacles,
)

EMPTY = ObstacleMap(())


def box(x0, y0, x1, y1):
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def test_half_disc_descriptors_match_closed_form():
    d = isovist_at((0, 0), 0.0, EMPTY)
    area, per = math.pi * 100**2 / 2, math.pi * 100 + 200
    assert d.area == pytest.approx(area, rel=1e-3)
    assert d.perimeter == pytest.approx(per, rel=1e-3)
    assert d.compactness == pytest.approx(4 * math.pi * area / per**2, rel=2e-3)
    assert d.occlusivity == 0.0


def test_full_circle_variant():
    poly = visibility_polygon((5, 5), 1.0, EMPTY, fov_deg=360)
    assert polygon_area(poly.vertices) == pytest.approx(math.pi * 100**2, rel=1e-3)


def test_box_ahead_occlusivity_closed_form():
    # The two occluding edges run from the box's far corners to the range cap.
    d = isovist_at((0, 0), 0.0, ObstacleMap((box(20, -5, 30, 5),)))
    assert d.occlusivity == pytest.approx(2 * (100 - math.sqrt(425)), rel=1e-6)


def test_empty_map_edges_are_radius_and_arc_only():
    kinds = set(edge_kinds(visibility_polygon((0, 0), 0.0, EMPTY)))
    assert kinds <= {"radius", "arc"}


def test_origin_inside_obstacle_raises():
    with pytest.raises(OriginInsideObstacle):
        visibility_polygon((1, 1), 0.0, ObstacleMap((box(0, 0, 2, 2),)))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-80, 80), st.floats(-80, 80), st.floats(2, 25), st.floats(2, 25)),
                min_size=1, max_size=6), st.floats(0, 2 * math.pi))
def test_obstacles_never_enlarge_the_isovist(rects, h):
    polys = tuple(box(x, y, x + w, y + hh) for x, y, w, hh in rects
                  if not (x - 0.5 < 0 < x + w + 0.5 and y - 0.5 < 0 < y + hh + 0.5))
    if not polys:
        return
    d = isovist_at((0, 0), h, ObstacleMap(polys))
    assert 0 < d.area <= math.pi * 100**2 / 2 * (1 + 1e-9)
    assert 0 < d.compactness <= 1
    assert d.occlusivity <= d.perimeter


def test_heading_and_track():
    assert heading((0, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert heading((0, 0), (0, 0), last=0.3) == 0.3
    with pytest.raises(DegenerateStep):
        heading((0, 0), (0, 0))
    h = track_headings([(0, 0), (0, 0), (1, 0), (1, 0), (1, 1)])
    np.testing.assert_allclose(h, [0, 0, 0, 0, math.pi / 2])
    with pytest.raises(DegenerateStep):
        track_headings([(1, 1), (1, 1)])


def test_projection_round_trip_and_scale():
    lat0, lon0 = 47.3769, 8.5417
    x, y = project_gps(47.3779, 8.5427, lat0, lon0)
    lat, lon = unproject(x, y, lat0, lon0)
    assert lat == pytest.approx(47.3779, abs=1e-12) and lon == pytest.approx(8.5427, abs=1e-12)
    # Haversine distance as the oracle at street scale.
    p1, p2 = math.radians(lat0), math.radians(47.3779)
    a = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(0.001) / 2) ** 2
    hav = 2 * 6371000.0 * math.asin(math.sqrt(a))
    assert math.hypot(x, y) == pytest.approx(hav, rel=1e-4)


def test_obstacle_geojson_round_trip(tmp_path):
    m = ObstacleMap((box(0, 0, 10, 5), box(20, 20, 30, 40)))
    write_obstacles(m, tmp_path / "o.geojson", 47.0, 8.0)
    back = load_obstacles(tmp_path / "o.geojson", 47.0, 8.0)
    assert len(back.polygons) == 2
    for a, b in zip(m.polygons, back.polygons):
        np.testing.assert_allclose(a, b, atol=1e-6)
