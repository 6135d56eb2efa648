"""Ego-centric BEV windows, multi-label rasterisation and heading-up cropping.

Pixel geometry
--------------
The ego sits at the geometric centre of the final ``alpha x alpha`` crop. For
even ``alpha`` that is a pixel corner, so the padded window places the pose on
a pixel corner as well (half a pixel off the window centre when the padded
side is odd). This keeps every quarter-turn an exact permutation of pixels.
The *ego pixel* used by masks and evaluation is ``(alpha // 2, alpha // 2)``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import shapely
from PIL import Image

from mia.classes import NUM_CLASSES, SemanticClass
from mia.geodesy import GeoPoint, UtmFrame, UtmPoint, normalize_heading
from mia.kernels import fill_polygon

DEFAULT_ALPHA = 224
DEFAULT_DELTA = 50
DEFAULT_RHO = 0.5


class PaddingError(ValueError):
    pass


def padded_side(alpha: int, delta: int) -> int:
    # rotation padding beta = ceil(alpha*sqrt(2)) - alpha keeps the crop's
    # diagonal inside the window at every heading
    return int(math.ceil(alpha * math.sqrt(2.0) - 1e-12)) + int(delta)


def _ego_coord(side: int, alpha: int) -> float:
    return (side - alpha) // 2 + (alpha - 1) / 2.0


@dataclass(frozen=True)
class BevWindow:
    center: UtmPoint
    side_px: int
    rho: float
    heading: float
    alpha: int

    @property
    def side_m(self) -> float:
        return self.side_px * self.rho

    @property
    def ego(self) -> float:
        """Continuous pixel-centre coordinate of the pose along both axes."""
        return _ego_coord(self.side_px, self.alpha)

    def to_pixels(self, coords: np.ndarray) -> np.ndarray:
        """UTM (E, N) rows -> pixel-centre (x=col, y=row) coordinates."""
        c = np.asarray(coords, dtype=float).reshape(-1, 2)
        x = (c[:, 0] - self.center.easting) / self.rho + self.ego
        y = (self.center.northing - c[:, 1]) / self.rho + self.ego
        return np.column_stack([x, y])

    def to_utm(self, px: np.ndarray) -> np.ndarray:
        p = np.asarray(px, dtype=float).reshape(-1, 2)
        e = (p[:, 0] - self.ego) * self.rho + self.center.easting
        n = self.center.northing - (p[:, 1] - self.ego) * self.rho
        return np.column_stack([e, n])

    def bounds_utm(self) -> tuple[float, float, float, float]:
        """(min_e, min_n, max_e, max_n) of the window's outer pixel edges."""
        lo = -0.5
        hi = self.side_px - 0.5
        (e0, n0), (e1, n1) = self.to_utm([[lo, hi], [hi, lo]])
        return e0, n0, e1, n1

    def bounds_wgs84(self, frame: UtmFrame) -> tuple[float, float, float, float]:
        """(south, west, north, east) covering the window, for OSM queries."""
        e0, n0, e1, n1 = self.bounds_utm()
        lat, lon = frame.inverse([e0, e0, e1, e1], [n0, n1, n0, n1])
        return float(lat.min()), float(lon.min()), float(lat.max()), float(lon.max())

    def crop_corners(self, heading: float | None = None) -> np.ndarray:
        """Pixel coordinates of the rotated alpha x alpha crop's outer corners."""
        h = math.radians(self.heading if heading is None else heading)
        half = self.alpha / 2.0
        corners = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
        cos, sin = math.cos(h), math.sin(h)
        x = self.ego + corners[:, 0] * cos - corners[:, 1] * sin
        y = self.ego + corners[:, 0] * sin + corners[:, 1] * cos
        return np.column_stack([x, y])

    def contains_rotated_crop(self, heading: float | None = None) -> bool:
        c = self.crop_corners(heading)
        return bool(np.all(c >= -0.5) and np.all(c <= self.side_px - 0.5))


def compute_bev_window(pose: UtmPoint, heading: float, alpha: int = DEFAULT_ALPHA,
                       delta: float = DEFAULT_DELTA, rho: float = DEFAULT_RHO,
                       delta_unit: str = "px") -> BevWindow:
    if alpha <= 0 or delta < 0 or rho <= 0:
        raise ValueError("alpha and rho must be positive and delta non-negative")
    if delta_unit == "m":
        delta = math.ceil(delta / rho)
    elif delta_unit != "px":
        raise ValueError(f"delta_unit must be 'px' or 'm', got {delta_unit!r}")
    return BevWindow(pose, padded_side(int(alpha), int(delta)), float(rho),
                     normalize_heading(heading), int(alpha))


# ----------------------------------------------------------------- rasterise


def polygon_edges(poly_px) -> np.ndarray:
    """Edge array for :func:`mia.kernels.fill_polygon` from a pixel-space polygon."""
    rings = []
    for p in getattr(poly_px, "geoms", [poly_px]):
        rings.append(np.asarray(p.exterior.coords))
        rings.extend(np.asarray(r.coords) for r in p.interiors)
    if not rings:
        return np.zeros((0, 4))
    return np.concatenate([np.hstack([r[:-1], r[1:]]) for r in rings if len(r) > 1])


def rasterize_pixel_polygons(polys, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for p in polys:
        fill_polygon(out, polygon_edges(p))
    return out


def rasterize(geoms, window: BevWindow) -> np.ndarray:
    """North-up padded raster of shape (K, side, side); centre-in-polygon rule."""
    side = window.side_px
    planes = np.zeros((NUM_CLASSES, side, side), dtype=bool)
    margin = 2 * window.rho
    e0, n0, e1, n1 = window.bounds_utm()
    clip_box = (e0 - margin, n0 - margin, e1 + margin, n1 + margin)
    for g in geoms:
        shape = g.shape
        if shape.is_empty:
            continue
        bx0, by0, bx1, by1 = shape.bounds
        if bx1 < clip_box[0] or bx0 > clip_box[2] or by1 < clip_box[1] or by0 > clip_box[3]:
            continue
        if bx0 < clip_box[0] or bx1 > clip_box[2] or by0 < clip_box[1] or by1 > clip_box[3]:
            shape = shapely.clip_by_rect(shape, *clip_box)
            if shape.is_empty:
                continue
        px = shapely.transform(shape, window.to_pixels)
        for part in getattr(px, "geoms", [px]):
            if isinstance(part, shapely.Polygon):
                fill_polygon(planes[int(g.cls)], polygon_edges(part))
    return planes


# ---------------------------------------------------------- rotate and crop


@dataclass
class SemanticBev:
    planes: np.ndarray
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        self.planes = np.asarray(self.planes).astype(bool, copy=False)
        if self.planes.ndim != 3 or self.planes.shape[1] != self.planes.shape[2]:
            raise ValueError(f"expected (K, a, a) planes, got {self.planes.shape}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def alpha(self) -> int:
        return self.planes.shape[1]

    @property
    def ego(self) -> tuple[int, int]:
        return self.alpha // 2, self.alpha // 2

    def plane(self, cls: SemanticClass) -> np.ndarray:
        return self.planes[int(cls)]

    def to_bits(self) -> np.ndarray:
        bits = np.zeros(self.planes.shape[1:], dtype=np.uint8)
        for k in range(self.planes.shape[0]):
            bits |= self.planes[k].astype(np.uint8) << k
        return bits

    @classmethod
    def from_bits(cls, bits: np.ndarray, rho: float = DEFAULT_RHO,
                  num_classes: int = NUM_CLASSES) -> "SemanticBev":
        bits = np.asarray(bits, dtype=np.uint8)
        planes = np.stack([(bits >> k) & 1 for k in range(num_classes)]).astype(bool)
        return cls(planes, rho)

    def to_png(self) -> bytes:
        return encode_png(self.to_bits())

    @classmethod
    def from_png(cls, data: bytes, rho: float = DEFAULT_RHO) -> "SemanticBev":
        return cls.from_bits(decode_png(data), rho)


def encode_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8), mode="L").save(
        buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        if im.mode != "L":
            raise ValueError(f"expected 8-bit single-channel PNG, got mode {im.mode}")
        return np.array(im)


def _sample_rotated(raster: np.ndarray, heading: float, alpha: int) -> np.ndarray:
    side = raster.shape[-1]
    ego = _ego_coord(side, alpha)
    offs = np.arange(alpha) - (alpha - 1) / 2.0
    dy, dx = np.meshgrid(offs, offs, indexing="ij")
    h = math.radians(heading)
    cos, sin = math.cos(h), math.sin(h)
    # output "up" is the camera's forward direction in the north-up raster
    sx = np.floor(ego + dx * cos - dy * sin + 0.5).astype(np.intp)
    sy = np.floor(ego + dx * sin + dy * cos + 0.5).astype(np.intp)
    if sx.min() < 0 or sy.min() < 0 or sx.max() >= side or sy.max() >= side:
        raise PaddingError(f"raster side {side} too small to rotate an {alpha}px crop "
                           f"by {heading:.3f} deg")
    return raster[..., sy, sx]


def rotate_crop(raster: np.ndarray, heading: float, alpha: int,
                rho: float = DEFAULT_RHO) -> SemanticBev:
    """Rotate a north-up padded raster so the heading points up, then crop.

    Nearest-neighbour inverse sampling keeps labels binary. Headings are split
    into quarter turns plus a remainder in [0, 90) so that ``h`` and ``h + 90``
    give outputs related by an exact ``np.rot90``.
    """
    raster = np.asarray(raster)
    if raster.ndim == 2:
        raster = raster[None]
    side = raster.shape[-1]
    if raster.shape[-2] != side:
        raise ValueError("padded raster must be square")
    if side < math.ceil(alpha * math.sqrt(2.0) - 1e-12):
        raise PaddingError(f"raster side {side} < ceil(alpha*sqrt(2)) for alpha={alpha}")
    h = normalize_heading(heading)
    quarter = int(h // 90.0)
    rest = round(h - 90.0 * quarter, 9)
    if rest >= 90.0:
        quarter, rest = quarter + 1, 0.0
    if rest == 0.0:
        k = (side - alpha) // 2
        out = raster[..., k:k + alpha, k:k + alpha]
    else:
        out = _sample_rotated(raster, rest, alpha)
    out = np.rot90(out, k=quarter % 4, axes=(-2, -1))
    return SemanticBev(np.ascontiguousarray(out), rho)


def render_bev(geoms, pose: UtmPoint, heading: float, alpha: int = DEFAULT_ALPHA,
               delta: float = DEFAULT_DELTA, rho: float = DEFAULT_RHO) -> SemanticBev:
    window = compute_bev_window(pose, heading, alpha, delta, rho)
    return rotate_crop(rasterize(geoms, window), window.heading, alpha, rho)


def render_bev_for_image(meta, graph, frame: UtmFrame, alpha: int = DEFAULT_ALPHA,
                         delta: float = DEFAULT_DELTA, rho: float = DEFAULT_RHO,
                         rules=None) -> SemanticBev:
    """classify -> infer sidewalks -> window -> rasterise -> rotate/crop."""
    from mia.osm import classify, infer_sidewalks

    point = meta.sfm_point or meta.recorded_point
    heading = meta.sfm_heading if meta.sfm_heading is not None else meta.recorded_heading
    if not graph.nodes:
        return SemanticBev(np.zeros((NUM_CLASSES, alpha, alpha), dtype=bool), rho)
    classification = classify(graph, rules, frame)
    geoms = classification.geometries + infer_sidewalks(graph, classification, rules, frame)
    pose = frame.project(GeoPoint(point.lat, point.lon))
    return render_bev(geoms, pose, heading, alpha, delta, rho)
