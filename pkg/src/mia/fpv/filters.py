"""The six-stage metadata filter cascade and its yield report."""
from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np
import shapely

from mia.fpv.metadata import CameraType, ImageMetadata
from mia.fpv.tiles import boundary_polygon
from mia.geodesy import bearing_diff_deg, haversine_m

DEFAULT_CAMERA_MODELS = frozenset({
    "hdr-as200v", "iphone11pro", "iphone11", "iphone12", "gopromax", "iphone12pro",
    "lm-v405", "iphone11promax", "hdr-as300", "iphone13", "fdr-x1000v", "sm-g970u",
    "sm-g930v", "iphone13promax", "iphone13pro", "iphone12promax", "fdr-x3000",
})
DEFAULT_RECENCY_CUTOFF_MS = int(datetime(2017, 1, 1, tzinfo=timezone.utc).timestamp() * 1000)
STAGES = ("Boundaries", "Recency", "Camera Model", "Angle Discrip", "Loc Discrip", "Spatial")


@dataclass(frozen=True)
class FilterConfig:
    boundary: tuple
    recency_cutoff_ms: int = DEFAULT_RECENCY_CUTOFF_MS
    camera_allowlist: frozenset | None = DEFAULT_CAMERA_MODELS
    max_angle_discrepancy_deg: float = 20.0
    max_loc_discrepancy_m: float = 3.0
    sparsity_radius_m: float = 4.0
    allowed_camera_types: frozenset = frozenset({CameraType.PERSPECTIVE, CameraType.FISHEYE})

    def __post_init__(self):
        object.__setattr__(self, "boundary", tuple(tuple(p) for p in self.boundary))
        boundary_polygon(self.boundary)
        for name in ("max_angle_discrepancy_deg", "max_loc_discrepancy_m", "sparsity_radius_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.recency_cutoff_ms < 0:
            raise ValueError("recency cutoff must be non-negative")
        if self.camera_allowlist is not None and not self.camera_allowlist:
            raise ValueError("camera allowlist is empty; pass None to disable the filter")
        if not self.allowed_camera_types:
            raise ValueError("no camera types allowed")
        types = frozenset(CameraType(t) for t in self.allowed_camera_types)
        object.__setattr__(self, "allowed_camera_types", types)
        if self.camera_allowlist is not None:
            object.__setattr__(self, "camera_allowlist", frozenset(self.camera_allowlist))

    def without_camera_model_filter(self) -> "FilterConfig":
        return replace(self, camera_allowlist=None)


@dataclass
class StageCount:
    name: str
    images_in: int
    images_out: int
    percent: float


@dataclass
class FilterReport:
    stages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"stages": [s.__dict__ for s in self.stages]}

    @classmethod
    def from_dict(cls, doc) -> "FilterReport":
        return cls([StageCount(**s) for s in doc["stages"]])

    def format_table(self) -> str:
        names = ["Curation Stage"] + [s.name for s in self.stages]
        counts = ["# Images"] + [format_count(s.images_out) for s in self.stages]
        pct = ["% Images"] + [f"{s.percent:.2f}%" for s in self.stages]
        widths = [max(map(len, col)) for col in zip(names, counts, pct)]
        rows = [" | ".join(v.rjust(w) for v, w in zip(r, widths)) for r in (names, counts, pct)]
        return "\n".join(rows) + "\n"


def format_count(n: int) -> str:
    if n >= 1_000_000:
        return f"{n / 1e6:.4g}M"
    if n >= 1_000:
        return f"{n / 1e3:.4g}K"
    return str(n)


def _sparsify(metas, radius_m):
    """Keep-first in capture order; distances between SfM positions."""
    kept = []
    for m in sorted(metas, key=lambda m: (m.captured_at, m.id)):
        p = m.sfm_point or m.recorded_point
        if all(haversine_m(p, k.sfm_point or k.recorded_point) >= radius_m for k in kept):
            kept.append(m)
    return kept


def stage_predicates(cfg: FilterConfig):
    """Per-image predicates for stages 1-5, in cascade order."""
    poly = boundary_polygon(cfg.boundary)

    def inside(m):
        return bool(shapely.intersects_xy(poly, m.recorded_point.lon, m.recorded_point.lat))

    def recent(m):
        return m.captured_at > cfg.recency_cutoff_ms

    def camera(m):
        if m.camera_type not in cfg.allowed_camera_types:
            return False
        return cfg.camera_allowlist is None or m.camera_model in cfg.camera_allowlist

    def angle(m):
        return (m.sfm_heading is not None and
                bearing_diff_deg(m.recorded_heading, m.sfm_heading)
                < cfg.max_angle_discrepancy_deg)

    def location(m):
        return (m.sfm_point is not None and
                haversine_m(m.recorded_point, m.sfm_point) < cfg.max_loc_discrepancy_m)

    return [inside, recent, camera, angle, location]


def run_filter_pipeline(metas, cfg: FilterConfig, workers: int = 1):
    """Apply the cascade; returns (retained in input order, FilterReport)."""
    current = list(metas)
    counts = []
    poly = boundary_polygon(cfg.boundary)
    preds = stage_predicates(cfg)
    for i, (name, pred) in enumerate(zip(STAGES, preds)):
        if i == 0 and current:
            lon = np.array([m.recorded_point.lon for m in current])
            lat = np.array([m.recorded_point.lat for m in current])
            keep = shapely.intersects_xy(poly, lon, lat)
            nxt = [m for m, k in zip(current, keep) if k]
        else:
            nxt = [m for m in current if pred(m)]
        counts.append((name, len(current), len(nxt)))
        current = nxt

    by_seq = defaultdict(list)
    for m in current:
        by_seq[m.sequence_id].append(m)
    groups = [by_seq[s] for s in sorted(by_seq)]
    radius = cfg.sparsity_radius_m
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            kept_groups = list(pool.map(lambda g: _sparsify(g, radius), groups))
    else:
        kept_groups = [_sparsify(g, radius) for g in groups]
    kept_ids = {m.id for g in kept_groups for m in g}
    retained = [m for m in current if m.id in kept_ids]
    counts.append((STAGES[-1], len(current), len(retained)))

    base = counts[0][2]
    report = FilterReport([StageCount(n, a, b, 100.0 * b / base if base else 0.0)
                           for n, a, b in counts])
    return retained, report
