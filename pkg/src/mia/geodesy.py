"""Coordinate frames and distance primitives.

WGS-84 <-> UTM uses the 6th-order Krueger series (Karney 2011 coefficients),
which stays at nanometre level within a zone and well under a millimetre a
few degrees outside it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1 / 298.257223563
UTM_K0 = 0.9996
UTM_FALSE_EASTING = 500000.0
UTM_FALSE_NORTHING_SOUTH = 10000000.0
EARTH_MEAN_RADIUS_M = 6371008.8
MERCATOR_MAX_LAT = 85.0511287798066
UTM_MAX_LAT = 84.0
# absorbs round-trip float error at the limit (about 0.1 mm)
_LAT_SLACK = 1e-9


class DomainError(ValueError):
    """Coordinate outside the domain of a projection."""


def normalize_lon(lon: float) -> float:
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0:
        lon += 360.0
    return lon - 180.0


def normalize_heading(deg: float) -> float:
    h = math.fmod(deg, 360.0)
    if h < 0:
        h += 360.0
    # fmod of a tiny negative number can round back up to 360
    return 0.0 if h >= 360.0 else h


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise DomainError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise DomainError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", normalize_lon(lon))


class TileId(NamedTuple):
    zoom: int
    x: int
    y: int


@dataclass(frozen=True)
class UtmPoint:
    easting: float
    northing: float
    zone: int
    hemisphere: str = "N"

    def __post_init__(self):
        if not 1 <= int(self.zone) <= 60:
            raise DomainError(f"UTM zone {self.zone} outside [1, 60]")
        if self.hemisphere not in ("N", "S"):
            raise DomainError(f"hemisphere must be 'N' or 'S', got {self.hemisphere!r}")


# ---------------------------------------------------------------- slippy tiles


def wgs84_to_tile(p: GeoPoint, zoom: int) -> TileId:
    if abs(p.lat) >= MERCATOR_MAX_LAT:
        raise DomainError(f"latitude {p.lat} outside Web-Mercator range")
    n = 1 << zoom
    fx = (p.lon + 180.0) / 360.0 * n
    lat = math.radians(p.lat)
    fy = (1.0 - math.asinh(math.tan(lat)) / math.pi) / 2.0 * n
    x = min(max(int(math.floor(fx)), 0), n - 1)
    y = min(max(int(math.floor(fy)), 0), n - 1)
    # the projection can round across an edge; settle it against the edges
    # that tile_bounds reports so both functions agree exactly
    if y > 0 and p.lat > tile_edge_lat(y, zoom):
        y -= 1
    elif y < n - 1 and p.lat <= tile_edge_lat(y + 1, zoom):
        y += 1
    if x > 0 and p.lon < tile_edge_lon(x, zoom):
        x -= 1
    elif x < n - 1 and p.lon >= tile_edge_lon(x + 1, zoom):
        x += 1
    return TileId(zoom, x, y)


def tile_edge_lon(x: int, zoom: int) -> float:
    return x / (1 << zoom) * 360.0 - 180.0


def tile_edge_lat(y: int, zoom: int) -> float:
    return math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * y / (1 << zoom)))))


def tile_bounds(t: TileId) -> tuple[GeoPoint, GeoPoint]:
    """Return the (north-west, south-east) corners of a tile."""
    n = 1 << t.zoom
    if not (0 <= t.x < n and 0 <= t.y < n):
        raise DomainError(f"tile {t} outside zoom range")
    # the east edge of the last column is +180, which GeoPoint would wrap
    east = tile_edge_lon(t.x + 1, t.zoom)
    nw = GeoPoint(tile_edge_lat(t.y, t.zoom), tile_edge_lon(t.x, t.zoom))
    se = GeoPoint.__new__(GeoPoint)
    object.__setattr__(se, "lat", tile_edge_lat(t.y + 1, t.zoom))
    object.__setattr__(se, "lon", east)
    return nw, se


# ------------------------------------------------------------------------ UTM

_N = WGS84_F / (2 - WGS84_F)
_E2 = WGS84_F * (2 - WGS84_F)
_E = math.sqrt(_E2)


def _series(coeffs):
    return sum(c * _N ** (i + 1) for i, c in enumerate(coeffs))


_A = WGS84_A / (1 + _N) * (1 + _N**2 / 4 + _N**4 / 64 + _N**6 / 256)

_ALPHA = np.array([
    _series([1 / 2, -2 / 3, 5 / 16, 41 / 180, -127 / 288, 7891 / 37800]),
    _series([0, 13 / 48, -3 / 5, 557 / 1440, 281 / 630, -1983433 / 1935360]),
    _series([0, 0, 61 / 240, -103 / 140, 15061 / 26880, 167603 / 181440]),
    _series([0, 0, 0, 49561 / 161280, -179 / 168, 6601661 / 7257600]),
    _series([0, 0, 0, 0, 34729 / 80640, -3418889 / 1995840]),
    _series([0, 0, 0, 0, 0, 212378941 / 319334400]),
])

_BETA = np.array([
    _series([1 / 2, -2 / 3, 37 / 96, -1 / 360, -81 / 512, 96199 / 604800]),
    _series([0, 1 / 48, 1 / 15, -437 / 1440, 46 / 105, -1118711 / 3870720]),
    _series([0, 0, 17 / 480, -37 / 840, -209 / 4480, 5569 / 90720]),
    _series([0, 0, 0, 4397 / 161280, -11 / 504, -830251 / 7257600]),
    _series([0, 0, 0, 0, 4583 / 161280, -108847 / 3991680]),
    _series([0, 0, 0, 0, 0, 20648693 / 638668800]),
])

_J2 = 2.0 * np.arange(1, 7)


def zone_for_lon(lon: float) -> int:
    return int(math.floor((normalize_lon(lon) + 180.0) / 6.0)) % 60 + 1


def central_meridian(zone: int) -> float:
    return (zone - 1) * 6.0 - 180.0 + 3.0


def _conformal_tau(tau):
    sigma = np.sinh(_E * np.arctanh(_E * tau / np.hypot(1.0, tau)))
    return tau * np.hypot(1.0, sigma) - sigma * np.hypot(1.0, tau)


def _tau_from_conformal(taup):
    tau = taup / (1.0 - _E2)
    for _ in range(8):
        tp = _conformal_tau(tau)
        dtau = ((taup - tp) / np.hypot(1.0, tp)
                * (1.0 + (1.0 - _E2) * tau**2) / ((1.0 - _E2) * np.hypot(1.0, tau)))
        tau = tau + dtau
        if np.all(np.abs(dtau) <= 1e-15 * np.maximum(1.0, np.abs(tau))):
            break
    return tau


def utm_forward(lat, lon, zone: int, south: bool = False):
    """Vectorised projection of degree arrays into ``zone``. Returns (E, N)."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    dlon = np.radians(lon - central_meridian(zone))
    dlon = (dlon + np.pi) % (2 * np.pi) - np.pi
    taup = _conformal_tau(np.tan(np.radians(lat)))
    xip = np.arctan2(taup, np.cos(dlon))
    etap = np.arcsinh(np.sin(dlon) / np.hypot(taup, np.cos(dlon)))
    xi = xip.copy()
    eta = etap.copy()
    for a, j2 in zip(_ALPHA, _J2):
        xi = xi + a * np.sin(j2 * xip) * np.cosh(j2 * etap)
        eta = eta + a * np.cos(j2 * xip) * np.sinh(j2 * etap)
    easting = UTM_K0 * _A * eta + UTM_FALSE_EASTING
    northing = UTM_K0 * _A * xi
    if south:
        northing = northing + UTM_FALSE_NORTHING_SOUTH
    return easting, northing


def utm_inverse(easting, northing, zone: int, south: bool = False):
    """Vectorised inverse of :func:`utm_forward`. Returns (lat, lon) degrees."""
    x = np.asarray(easting, dtype=float) - UTM_FALSE_EASTING
    y = np.asarray(northing, dtype=float)
    if south:
        y = y - UTM_FALSE_NORTHING_SOUTH
    xi = y / (UTM_K0 * _A)
    eta = x / (UTM_K0 * _A)
    xip = xi.copy()
    etap = eta.copy()
    for b, j2 in zip(_BETA, _J2):
        xip = xip - b * np.sin(j2 * xi) * np.cosh(j2 * eta)
        etap = etap - b * np.cos(j2 * xi) * np.sinh(j2 * eta)
    taup = np.sin(xip) / np.hypot(np.sinh(etap), np.cos(xip))
    dlon = np.arctan2(np.sinh(etap), np.cos(xip))
    lat = np.degrees(np.arctan(_tau_from_conformal(taup)))
    lon = np.degrees(dlon) + central_meridian(zone)
    lon = (lon + 180.0) % 360.0 - 180.0
    return lat, lon


def wgs84_to_utm(p: GeoPoint, zone: int | None = None,
                 hemisphere: str | None = None) -> UtmPoint:
    """Project ``p`` to UTM.

    ``zone``/``hemisphere`` override the point's own zone so a whole region can
    share one frame; out-of-zone points are projected without clamping.
    """
    if abs(p.lat) > UTM_MAX_LAT + _LAT_SLACK:
        raise DomainError(f"latitude {p.lat} outside UTM range")
    zone = zone_for_lon(p.lon) if zone is None else zone
    hemisphere = hemisphere or ("N" if p.lat >= 0 else "S")
    e, n = utm_forward(p.lat, p.lon, zone, hemisphere == "S")
    return UtmPoint(float(e), float(n), zone, hemisphere)


def utm_to_wgs84(u: UtmPoint) -> GeoPoint:
    lat, lon = utm_inverse(u.easting, u.northing, u.zone, u.hemisphere == "S")
    lat = float(lat)
    if abs(lat) > UTM_MAX_LAT + 1.0:
        raise DomainError(f"UTM point maps to polar latitude {lat}")
    return GeoPoint(lat, float(lon))


# ------------------------------------------------------- distances / bearings


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_MEAN_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def bearing_diff_deg(a: float, b: float) -> float:
    d = abs(normalize_heading(a) - normalize_heading(b))
    return 360.0 - d if d > 180.0 else d


@dataclass(frozen=True)
class UtmFrame:
    """One UTM zone shared by every point of a curation region."""

    zone: int
    hemisphere: str = "N"

    @classmethod
    def for_points(cls, lats, lons) -> "UtmFrame":
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if lats.size == 0:
            raise DomainError("cannot choose a UTM zone for an empty region")
        # circular mean keeps regions straddling the antimeridian sane
        lon_c = math.degrees(math.atan2(np.sin(np.radians(lons)).mean(),
                                        np.cos(np.radians(lons)).mean()))
        lat_c = float(lats.mean())
        return cls(zone_for_lon(lon_c), "N" if lat_c >= 0 else "S")

    def forward(self, lat, lon):
        lat = np.asarray(lat, dtype=float)
        if np.any(np.abs(lat) > UTM_MAX_LAT + _LAT_SLACK):
            raise DomainError("latitude outside UTM range")
        return utm_forward(lat, lon, self.zone, self.hemisphere == "S")

    def inverse(self, easting, northing):
        return utm_inverse(easting, northing, self.zone, self.hemisphere == "S")

    def project(self, p: GeoPoint) -> UtmPoint:
        return wgs84_to_utm(p, self.zone, self.hemisphere)
