"""Image metadata records parsed from Mapillary Graph API payloads."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from mia.geodesy import GeoPoint, normalize_heading


class MetadataError(ValueError):
    def __init__(self, message, field=None, image_id=None):
        super().__init__(message)
        self.field = field
        self.image_id = image_id


class CameraType(str, Enum):
    PERSPECTIVE = "perspective"
    FISHEYE = "fisheye"
    SPHERICAL = "spherical"
    OTHER = "other"

    @classmethod
    def parse(cls, value: str) -> "CameraType":
        v = (value or "").strip().lower()
        if v in ("spherical", "equirectangular"):
            return cls.SPHERICAL
        try:
            return cls(v)
        except ValueError:
            return cls.OTHER


def normalize_camera_model(model: str | None) -> str:
    """'iPhone 11 Pro' -> 'iphone11pro', matching the allowlist spelling."""
    return "".join((model or "").lower().split())


@dataclass(frozen=True)
class ImageMetadata:
    id: str
    sequence_id: str
    recorded_point: GeoPoint
    recorded_heading: float
    captured_at: int
    camera_model: str
    camera_type: CameraType
    sfm_point: GeoPoint | None = None
    sfm_heading: float | None = None
    focal: float | None = None
    k1: float = 0.0
    k2: float = 0.0
    width: int | None = None
    height: int | None = None
    thumb_url: str | None = None

    def __post_init__(self):
        if not self.id:
            raise MetadataError("image id must be non-empty", "id")
        if self.captured_at <= 0:
            raise MetadataError("captured_at must be positive", "captured_at", self.id)


# ``focal`` in camera_parameters is normalised by the larger image side
FIELDS = ("id,sequence,geometry,computed_geometry,compass_angle,computed_compass_angle,"
          "captured_at,make,model,camera_type,camera_parameters,width,height,"
          "thumb_2048_url")


def _point(geom, field, image_id):
    try:
        lon, lat = geom["coordinates"][:2]
        return GeoPoint(float(lat), float(lon))
    except (KeyError, TypeError, ValueError) as exc:
        raise MetadataError(f"image {image_id}: bad {field}: {exc}", field, image_id) from None


def _require(payload, field, image_id):
    if payload.get(field) is None:
        raise MetadataError(f"image {image_id}: missing mandatory field {field!r}",
                            field, image_id)
    return payload[field]


def _finite(value, field, image_id):
    try:
        v = float(value)
    except (TypeError, ValueError):
        v = math.nan
    if not math.isfinite(v):
        raise MetadataError(f"image {image_id}: {field} is not a number", field, image_id)
    return v


def parse_image_payload(payload: dict) -> ImageMetadata:
    if not isinstance(payload, dict):
        raise MetadataError("metadata payload is not an object")
    image_id = str(_require(payload, "id", None))
    seq = _require(payload, "sequence", image_id)
    if isinstance(seq, dict):
        seq = seq.get("id")
    recorded = _point(_require(payload, "geometry", image_id), "geometry", image_id)
    heading = normalize_heading(_finite(_require(payload, "compass_angle", image_id),
                                        "compass_angle", image_id))
    captured = int(_finite(_require(payload, "captured_at", image_id), "captured_at", image_id))
    cam_type = CameraType.parse(_require(payload, "camera_type", image_id))

    sfm = payload.get("computed_geometry")
    sfm_point = _point(sfm, "computed_geometry", image_id) if sfm else None
    sfm_heading = payload.get("computed_compass_angle")
    if sfm_heading is not None:
        sfm_heading = normalize_heading(_finite(sfm_heading, "computed_compass_angle", image_id))

    params = payload.get("camera_parameters") or []
    focal = float(params[0]) if len(params) > 0 and params[0] is not None else None
    k1 = float(params[1]) if len(params) > 1 and params[1] is not None else 0.0
    k2 = float(params[2]) if len(params) > 2 and params[2] is not None else 0.0
    width = int(payload["width"]) if payload.get("width") else None
    height = int(payload["height"]) if payload.get("height") else None
    thumb = (payload.get("thumb_2048_url") or payload.get("thumb_1024_url")
             or payload.get("thumb_original_url"))
    return ImageMetadata(image_id, str(seq), recorded, heading, captured,
                         normalize_camera_model(payload.get("model")), cam_type,
                         sfm_point, sfm_heading, focal, k1, k2, width, height, thumb)
