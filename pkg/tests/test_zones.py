"""Zone containment, geometric adjacency, and the mutable neighbor schedule."""

import json

import pytest

from amodsim.geo import GeoPoint, METERS_PER_DEG_LAT
from amodsim.zones import (
    AdjacencySchedule,
    Zone,
    ZoneLoadError,
    ZoneMap,
    initial_adjacency,
    load_zones,
)
from scenario_tools import box_feature, box_polygon, golden_city

DEG_PER_M = 1.0 / METERS_PER_DEG_LAT


def zone(zid, lat_lo, lat_hi, lon_lo, lon_hi, name=None):
    return Zone(zid, name or f"z{zid}", box_polygon(lat_lo, lat_hi, lon_lo, lon_hi))


def test_locate_prefers_lowest_id_on_overlap():
    zm = ZoneMap([zone(3, 0.0, 2.0, 0.0, 2.0), zone(1, 1.0, 3.0, 1.0, 3.0)])
    assert zm.locate(GeoPoint(0.5, 0.5)) == 3
    assert zm.locate(GeoPoint(2.5, 2.5)) == 1
    assert zm.locate(GeoPoint(1.5, 1.5)) == 1     # overlap resolves low
    assert zm.locate(GeoPoint(2.0, 2.0)) == 1     # shared boundary too
    assert zm.locate(GeoPoint(5.0, 5.0)) is None


def test_locate_or_nearest_counts_fallbacks():
    zm = ZoneMap([zone(0, 0.0, 1.0, 0.0, 1.0), zone(1, 0.0, 1.0, 2.0, 3.0)])
    assert zm.locate_or_nearest(GeoPoint(0.5, 0.5)) == 0
    assert zm.fallback_count == 0
    assert zm.locate_or_nearest(GeoPoint(0.5, 1.4)) == 0   # nearer left centroid
    assert zm.locate_or_nearest(GeoPoint(0.5, 1.8)) == 1
    assert zm.fallback_count == 2


def test_zone_map_rejects_duplicate_ids():
    with pytest.raises(ZoneLoadError):
        ZoneMap([zone(0, 0, 1, 0, 1), zone(0, 2, 3, 2, 3)])


def test_adjacency_from_shared_edges():
    # 2x2 tiling: rook moves touch along an edge, diagonals at one corner
    zm = ZoneMap([zone(0, 0, 1, 0, 1), zone(1, 0, 1, 1, 2),
                  zone(2, 1, 2, 0, 1), zone(3, 1, 2, 1, 2)])
    sched = initial_adjacency(zm)
    assert sched.pairs() == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert sched.revision == 0


def test_adjacency_tolerance_is_one_meter():
    gap_small = 0.5 * DEG_PER_M   # half a meter apart: still neighbors
    gap_big = 3.0 * DEG_PER_M
    zm = ZoneMap([zone(0, 0, 1e-3, 0, 1e-3),
                  zone(1, 0, 1e-3, 1e-3 + gap_small, 2e-3),
                  zone(2, 0, 1e-3, 2e-3 + gap_big, 3e-3)])
    sched = initial_adjacency(zm)
    assert sched.pairs() == [(0, 1)]
    assert sched.neighbors(2) == []


def test_adjacency_from_overlap_and_containment():
    zm = ZoneMap([zone(0, 0, 10, 0, 10), zone(1, 2, 3, 2, 3),
                  zone(2, 9, 11, 9, 11)])
    sched = initial_adjacency(zm)
    # 1 sits fully inside 0; 2 overlaps 0's corner; 1 and 2 are far apart
    assert sched.pairs() == [(0, 1), (0, 2)]


def test_schedule_mutation_and_revision():
    sched = AdjacencySchedule([0, 1, 2])
    assert sched.zone_ids() == [0, 1, 2]
    assert sched.revision == 0
    sched.add_neighbor(2, 0)
    assert sched.neighbors(0) == [2]
    assert sched.neighbors(2) == [0]
    assert sched.revision == 1
    sched.add_neighbor(0, 2)     # repeat counts as another touch
    assert sched.revision == 2
    assert sched.pairs() == [(0, 2)]
    with pytest.raises(ValueError):
        sched.add_neighbor(1, 1)
    with pytest.raises(KeyError):
        sched.add_neighbor(0, 9)
    with pytest.raises(KeyError):
        sched.neighbors(9)


def test_expand_frontier_adds_one_ring():
    sched = AdjacencySchedule([0, 1, 2, 3])
    sched.add_neighbor(0, 1)
    sched.add_neighbor(1, 2)
    sched.add_neighbor(2, 3)
    assert sched.expand_frontier({0}) == {0, 1}
    assert sched.expand_frontier({0, 1}) == {0, 1, 2}
    assert sched.expand_frontier({0, 1, 2, 3}) == {0, 1, 2, 3}
    assert sched.expand_frontier(set()) == set()


def test_schedule_copy_is_independent():
    sched = AdjacencySchedule([0, 1])
    sched.add_neighbor(0, 1)
    dup = sched.copy()
    assert dup.pairs() == [(0, 1)] and dup.revision == 1
    dup.add_neighbor(1, 0)
    assert dup.revision == 2 and sched.revision == 1


def test_export_text_format():
    sched = AdjacencySchedule([0, 1, 2])
    assert sched.export_text() == ""
    sched.add_neighbor(2, 1)
    sched.add_neighbor(0, 2)
    assert sched.export_text() == "0 2\n1 2\n"


def test_golden_city_adjacency():
    _, zone_map, sched = golden_city()
    assert len(zone_map) == 4
    assert sched.pairs() == [(0, 1), (1, 2), (1, 3), (2, 3)]


def test_load_zones_geojson(tmp_path):
    doc = {"type": "FeatureCollection", "features": [
        box_feature("east", 0.0, 1.0, 1.0, 2.0),
        box_feature("west", 0.0, 1.0, 0.0, 1.0),
    ]}
    path = tmp_path / "z.geojson"
    path.write_text(json.dumps(doc))
    zmap, sched = load_zones(str(path))
    assert len(zmap) == 2
    assert zmap.zone(0).name == "east"
    assert zmap.zone(1).name == "west"
    assert zmap.locate(GeoPoint(0.5, 1.5)) == 0
    assert sched.pairs() == [(0, 1)]


def test_load_zones_closed_ring_and_default_name(tmp_path):
    ring = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]
    doc = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {},
         "geometry": {"type": "Polygon", "coordinates": [ring]}},
    ]}
    path = tmp_path / "z.geojson"
    path.write_text(json.dumps(doc))
    zmap, _ = load_zones(str(path))
    assert zmap.zone(0).name == "zone-0"
    assert len(zmap.zone(0).boundary) == 4    # repeated closing vertex dropped


@pytest.mark.parametrize("doc", [
    {"type": "FeatureCollection", "features": []},
    {"type": "Feature"},
    {"type": "FeatureCollection", "features": [
        {"geometry": {"type": "Point", "coordinates": [0, 0]}}]},
    {"type": "FeatureCollection", "features": [
        {"geometry": {"type": "Polygon", "coordinates": []}}]},
    {"type": "FeatureCollection", "features": [
        {"geometry": {"type": "Polygon",
                      "coordinates": [[[0, 0], [1, 0]]]}}]},
])
def test_load_zones_rejects_bad_documents(tmp_path, doc):
    path = tmp_path / "bad.geojson"
    path.write_text(json.dumps(doc))
    with pytest.raises(ZoneLoadError):
        load_zones(str(path))


def test_load_zones_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.geojson"
    path.write_text("{nope")
    with pytest.raises(ZoneLoadError):
        load_zones(str(path))
    with pytest.raises(ZoneLoadError):
        load_zones(str(tmp_path / "missing.geojson"))
