import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pyproj import Transformer

from mia.geodesy import (DomainError, GeoPoint, TileId, UtmFrame, UtmPoint, bearing_diff_deg,
                         central_meridian, haversine_m, normalize_heading, tile_bounds,
                         utm_to_wgs84, wgs84_to_tile, wgs84_to_utm)

lats = st.floats(-84, 84, allow_nan=False)
lons = st.floats(-180, 180, allow_nan=False, exclude_max=True)
headings = st.floats(0, 360, allow_nan=False, exclude_max=True)


def reference_tile(lat, lon, zoom):
    n = 2 ** zoom
    x = int(math.floor((lon + 180.0) / 360.0 * n))
    lat_r = math.radians(lat)
    y = int(math.floor((1.0 - math.log(math.tan(lat_r) + 1 / math.cos(lat_r)) / math.pi) / 2 * n))
    return x, y


def pyproj_utm(lat, lon, zone, south=False):
    epsg = (32700 if south else 32600) + zone
    return Transformer.from_crs("EPSG:4326", f"EPSG:{epsg}", always_xy=True).transform(lon, lat)


# ---- types


def test_geopoint_normalises_longitude():
    assert GeoPoint(10, 180).lon == -180.0
    assert GeoPoint(10, 540.5).lon == pytest.approx(-179.5)
    with pytest.raises(DomainError):
        GeoPoint(91, 0)
    with pytest.raises(DomainError):
        GeoPoint(float("nan"), 0)


def test_utm_point_validates_zone_and_hemisphere():
    with pytest.raises(DomainError):
        UtmPoint(500000, 0, 61)
    with pytest.raises(DomainError):
        UtmPoint(500000, 0, 17, "X")


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_heading_normalised_to_half_open_range(h):
    v = normalize_heading(h)
    assert 0.0 <= v < 360.0


# ---- tiles


def test_equator_prime_meridian_tile():
    assert wgs84_to_tile(GeoPoint(0, 0), 14) == TileId(14, 8192, 8192)


def test_west_edge_maps_to_column_zero():
    assert wgs84_to_tile(GeoPoint(0, -180), 14) == TileId(14, 0, 8192)


def test_pittsburgh_tile_matches_reference_formula():
    assert wgs84_to_tile(GeoPoint(40.4406, -79.9959), 14) == TileId(
        14, *reference_tile(40.4406, -79.9959, 14))


def test_mercator_domain():
    with pytest.raises(DomainError):
        wgs84_to_tile(GeoPoint(86, 0), 5)


def test_tile_bounds_of_origin_tile():
    # floor semantics put (0, 0) in the tile whose NW corner is the origin
    nw, se = tile_bounds(TileId(14, 8192, 8192))
    assert (nw.lat, nw.lon) == (0.0, 0.0)
    assert se.lon == pytest.approx(360 / 2 ** 14)
    assert se.lat == pytest.approx(-0.0219726557, abs=1e-9)


def test_world_tile_bounds():
    nw, se = tile_bounds(TileId(0, 0, 0))
    assert nw.lat == pytest.approx(85.0511287798)
    assert nw.lon == -180.0
    assert se.lat == pytest.approx(-85.0511287798)
    assert se.lon == 180.0


@given(st.floats(-85, 85, allow_nan=False), lons, st.integers(0, 20))
def test_tile_round_trip_contains_point(lat, lon, zoom):
    p = GeoPoint(lat, lon)
    t = wgs84_to_tile(p, zoom)
    assert 0 <= t.x < 2 ** zoom and 0 <= t.y < 2 ** zoom
    nw, se = tile_bounds(t)
    assert se.lat <= lat <= nw.lat
    assert nw.lon <= p.lon <= se.lon


@given(st.integers(1, 18), st.data())
def test_tile_centre_round_trip(zoom, data):
    x = data.draw(st.integers(0, 2 ** zoom - 1))
    y = data.draw(st.integers(0, 2 ** zoom - 1))
    nw, se = tile_bounds(TileId(zoom, x, y))
    centre = GeoPoint((nw.lat + se.lat) / 2, (nw.lon + se.lon) / 2)
    assert wgs84_to_tile(centre, zoom) == TileId(zoom, x, y)


# ---- UTM


def test_central_meridian_on_equator():
    for zone in (1, 17, 31, 60):
        u = wgs84_to_utm(GeoPoint(0.0, central_meridian(zone)))
        assert u.zone == zone
        assert u.easting == pytest.approx(500000.0, abs=1e-9)
        assert u.northing == pytest.approx(0.0, abs=1e-9)
        g = utm_to_wgs84(UtmPoint(500000.0, 0.0, zone, "N"))
        assert g.lat == pytest.approx(0.0, abs=1e-12)
        assert g.lon == pytest.approx(central_meridian(zone), abs=1e-12)


def test_pittsburgh_against_pyproj():
    u = wgs84_to_utm(GeoPoint(40.4406, -79.9959))
    assert (u.zone, u.hemisphere) == (17, "N")
    e, n = pyproj_utm(40.4406, -79.9959, 17)
    assert abs(u.easting - e) < 0.01 and abs(u.northing - n) < 0.01
    back = utm_to_wgs84(u)
    assert haversine_m(back, GeoPoint(40.4406, -79.9959)) < 1e-3


def test_polar_latitude_is_rejected():
    with pytest.raises(DomainError):
        wgs84_to_utm(GeoPoint(85, 0))


def test_random_points_match_pyproj():
    rng = np.random.default_rng(3)
    for _ in range(200):
        zone = int(rng.integers(1, 61))
        lat = float(rng.uniform(-80, 84))
        lon = central_meridian(zone) + float(rng.uniform(-3, 3))
        u = wgs84_to_utm(GeoPoint(lat, lon), zone)
        e, n = pyproj_utm(lat, lon, zone, u.hemisphere == "S")
        assert abs(u.easting - e) < 1e-3 and abs(u.northing - n) < 1e-3


@given(lats, st.integers(1, 60), st.floats(-3, 3, allow_nan=False))
def test_utm_round_trip_sub_millimetre(lat, zone, dlon):
    p = GeoPoint(lat, central_meridian(zone) + dlon)
    u = wgs84_to_utm(p, zone)
    assert 100000 < u.easting < 900000
    back = utm_to_wgs84(u)
    assert abs(back.lat - p.lat) < 1e-9
    assert abs(((back.lon - p.lon + 180) % 360) - 180) < 1e-9
    again = wgs84_to_utm(back, zone, u.hemisphere)
    assert math.hypot(again.easting - u.easting, again.northing - u.northing) < 1e-3


def test_zone_override_projects_out_of_zone():
    p = GeoPoint(40.0, -77.5)  # zone 18
    u = wgs84_to_utm(p, zone=17)
    assert u.zone == 17 and u.easting > 700000
    assert utm_to_wgs84(u).lon == pytest.approx(-77.5, abs=1e-9)


def test_region_frame_uses_circular_mean():
    f = UtmFrame.for_points([10, 10], [179.5, -179.5])
    assert f.zone in (1, 60)
    assert UtmFrame.for_points([-33.9], [151.2]) == UtmFrame(56, "S")


# ---- distances and bearings


def test_haversine_examples():
    p = GeoPoint(12.3, 45.6)
    assert haversine_m(p, p) == 0.0
    expected = 6371008.8 * math.radians(0.001)
    assert haversine_m(GeoPoint(0, 0), GeoPoint(0, 0.001)) == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(111.2, abs=0.05)


@given(lats, lons, lats, lons, lats, lons)
def test_haversine_symmetry_and_triangle(a1, o1, a2, o2, a3, o3):
    a, b, c = GeoPoint(a1, o1), GeoPoint(a2, o2), GeoPoint(a3, o3)
    assert haversine_m(a, b) == pytest.approx(haversine_m(b, a), rel=1e-12, abs=1e-9)
    ab, bc, ac = haversine_m(a, b), haversine_m(b, c), haversine_m(a, c)
    assert ac <= (ab + bc) * (1 + 1e-6) + 1e-6


def test_bearing_examples():
    assert bearing_diff_deg(350, 10) == pytest.approx(20)
    assert bearing_diff_deg(90, 90) == 0
    assert bearing_diff_deg(0, 180) == 180


@given(headings, headings, st.floats(-720, 720, allow_nan=False))
def test_bearing_rotation_invariance(a, b, c):
    d = bearing_diff_deg(a, b)
    assert 0 <= d <= 180
    assert bearing_diff_deg((a + c) % 360, (b + c) % 360) == pytest.approx(d, abs=1e-9)
