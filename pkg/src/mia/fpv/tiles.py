from __future__ import annotations

import shapely
from shapely.geometry import Polygon, box

from mia.geodesy import GeoPoint, TileId, tile_bounds, wgs84_to_tile

TILE_ZOOM = 14


class BoundaryError(ValueError):
    pass


def boundary_polygon(boundary) -> Polygon:
    """Validate a (lat, lon) vertex list and return it as a lon/lat polygon."""
    pts = [(p.lon, p.lat) if isinstance(p, GeoPoint) else (float(p[1]), float(p[0]))
           for p in boundary]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    if len(set(pts)) < 3:
        raise BoundaryError("boundary needs at least three distinct vertices")
    poly = Polygon(pts)
    if not poly.is_valid or not poly.exterior.is_simple:
        raise BoundaryError("boundary polygon self-intersects")
    if poly.area <= 0:
        raise BoundaryError("boundary polygon has zero area")
    return poly


def tile_box(t: TileId):
    nw, se = tile_bounds(t)
    return box(nw.lon, se.lat, se.lon, nw.lat)


def enumerate_tiles(boundary, zoom: int = TILE_ZOOM) -> list[TileId]:
    """Tiles whose closed bounds touch the closed boundary polygon, sorted (x, y)."""
    poly = boundary_polygon(boundary)
    lon0, lat0, lon1, lat1 = poly.bounds
    nw = wgs84_to_tile(GeoPoint(lat1, lon0), zoom)
    se = wgs84_to_tile(GeoPoint(lat0, lon1), zoom)
    n = 1 << zoom
    # one tile of slack on each side catches polygons lying exactly on an edge
    xs = range(max(nw.x - 1, 0), min(se.x + 1, n - 1) + 1)
    ys = range(max(nw.y - 1, 0), min(se.y + 1, n - 1) + 1)
    shapely.prepare(poly)
    out = []
    for x in xs:
        for y in ys:
            t = TileId(zoom, x, y)
            if poly.intersects(tile_box(t)):
                out.append(t)
    return out
