"""Centerline buffering and polyline offsets in UTM metres."""
from __future__ import annotations

import numpy as np
import shapely
from shapely.geometry import LineString, MultiLineString


class GeometryError(ValueError):
    pass


def _dedupe(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return pts
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    return pts[keep]


def expand_centerline(points, width: float):
    """Flat-capped, mitre-joined buffer of ``width`` total around a polyline."""
    if not width > 0:
        raise GeometryError(f"width must be positive, got {width}")
    pts = _dedupe(points)
    if len(pts) < 2:
        raise GeometryError("centerline needs at least two distinct points")
    poly = LineString(pts).buffer(width / 2.0, cap_style="flat", join_style="mitre")
    if not poly.is_valid:
        poly = shapely.make_valid(poly)
    if poly.is_empty or poly.area <= 0:
        raise GeometryError("centerline buffer is empty")
    return poly


def offset_polyline(points, distance: float) -> list[np.ndarray]:
    """Parallel polyline(s) at ``distance``; positive is left of travel."""
    pts = _dedupe(points)
    if len(pts) < 2:
        raise GeometryError("centerline needs at least two distinct points")
    off = LineString(pts).offset_curve(distance, join_style="mitre")
    parts = off.geoms if isinstance(off, MultiLineString) else [off]
    return [np.asarray(p.coords) for p in parts if not p.is_empty and p.length > 0]


def side_region(points, distance: float):
    """Strip between a polyline and its offset at ``distance`` (signed, left +)."""
    pts = _dedupe(points)
    return LineString(pts).buffer(distance, single_sided=True, cap_style="flat",
                                  join_style="mitre")


def oriented_square(center, direction, side: float):
    c = np.asarray(center, dtype=float)
    d = np.asarray(direction, dtype=float)
    norm = np.hypot(*d)
    d = np.array([1.0, 0.0]) if norm == 0 else d / norm
    n = np.array([-d[1], d[0]])
    h = side / 2.0
    corners = [c + h * d + h * n, c - h * d + h * n, c - h * d - h * n, c + h * d - h * n]
    return shapely.Polygon(corners)
