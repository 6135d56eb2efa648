"""Region -> (FPV, BEV, visibility mask, pose) tuples on disk.

Layout under ``<output_root>/<city>/``::

    manifest.jsonl  filter_report.json  filter_report.txt  curate_report.json
    fpv/<id>.json   fpv/<id>.png   bev/<id>_bev.png   mask/<id>_vis.png

Rendered outputs are skipped when they already exist, so an interrupted run
resumes where it stopped and a finished run redoes nothing.
"""
from __future__ import annotations

import io
import json
import logging
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from mia.bev import compute_bev_window, render_bev
from mia.config import ConfigError, CurationConfig
from mia.dataset import ManifestRecord, split_geographic, write_manifest
from mia.fpv.client import (ClientError, FixtureClient, MapillaryClient, PayloadError,
                            fetch_all, fetch_tile_image_ids)
from mia.fpv.filters import run_filter_pipeline
from mia.fpv.metadata import MetadataError, parse_image_payload
from mia.fpv.tiles import BoundaryError, boundary_polygon, enumerate_tiles
from mia.fpv.undistort import CameraIntrinsics, undistort_fisheye, undistorted_intrinsics
from mia.geodesy import GeoPoint, UtmFrame
from mia.io import atomic_write_bytes, atomic_write_text
from mia.osm import classify, default_rules, infer_sidewalks
from mia.osm.source import FixtureOsmSource, OsmApiSource
from mia.visibility import combined_mask, frustum_mask, raycast_mask

log = logging.getLogger(__name__)

REGIONS_SCHEMA = "mia-regions"


class DataError(RuntimeError):
    """Unrecoverable input/output problem (bad credentials, unreadable data)."""


# ------------------------------------------------------------------ regions


def fixture_dir(name_or_path) -> Path:
    """A fixture set given by path, or by name among the packaged fixtures."""
    p = Path(name_or_path)
    if p.is_dir():
        return p
    packaged = Path(str(resources.files("mia") / "fixtures" / str(name_or_path)))
    if packaged.is_dir():
        return packaged
    raise ConfigError(f"fixture set {name_or_path!r} not found")


def _load_regions(path: Path) -> dict:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("schema") != REGIONS_SCHEMA:
        raise ConfigError(f"{path} is not a region file")
    return doc["regions"]


def region_table(fixtures: Path | None = None) -> dict:
    table = _load_regions(Path(str(resources.files("mia") / "regions.json")))
    if fixtures is not None and (fixtures / "regions.json").exists():
        table.update(_load_regions(fixtures / "regions.json"))
    return table


def load_polygon_file(path) -> list:
    """``[[lat, lon], ...]`` or a GeoJSON Polygon/Feature (lon, lat order)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read polygon file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise BoundaryError(f"polygon file {path} is not valid JSON: {exc}") from None
    if isinstance(doc, dict):
        geom = doc.get("geometry", doc)
        if geom.get("type") != "Polygon":
            raise BoundaryError(f"polygon file {path}: expected a GeoJSON Polygon")
        try:
            pts = [[float(lat), float(lon)] for lon, lat, *_ in geom["coordinates"][0]]
        except (KeyError, IndexError, TypeError, ValueError):
            raise BoundaryError(f"polygon file {path}: malformed coordinates") from None
    elif isinstance(doc, list):
        try:
            pts = [[float(a), float(b)] for a, b in doc]
        except (TypeError, ValueError):
            raise BoundaryError(f"polygon file {path}: expected [lat, lon] pairs") from None
    else:
        raise BoundaryError(f"polygon file {path}: unsupported content")
    boundary_polygon(pts)
    return pts


def resolve_boundary(cfg: CurationConfig) -> list:
    fixtures = fixture_dir(cfg.fixtures) if cfg.fixtures else None
    if cfg.polygon_file:
        return load_polygon_file(cfg.polygon_file)
    name = cfg.region or (fixtures.name if fixtures else None)
    if not name:
        raise ConfigError("give a region name, a polygon file or a fixture set")
    table = region_table(fixtures)
    if name not in table:
        raise ConfigError(f"unknown region {name!r}; known: {', '.join(sorted(table))}")
    boundary_polygon(table[name])
    return table[name]


# ------------------------------------------------------------------ curation


@dataclass
class CurateReport:
    city: str
    tiles: int = 0
    candidates: int = 0
    metadata_errors: list = field(default_factory=list)
    retained: int = 0
    rendered: int = 0
    skipped_existing: int = 0
    render_failures: list = field(default_factory=list)
    manifest_records: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class _GeometryCache:
    """Classified OSM geometry per extract, computed once and shared by workers."""

    def __init__(self, source, frame: UtmFrame, rules):
        self.source = source
        self.frame = frame
        self.rules = rules
        self._cache = {}
        self._lock = threading.Lock()

    def geometries(self, bbox):
        with self._lock:
            key, graph = self.source.fetch(bbox)
            if key not in self._cache:
                c = classify(graph, self.rules, self.frame)
                self._cache[key] = c.geometries + infer_sidewalks(graph, c, self.rules,
                                                                  self.frame)
            return self._cache[key]


def _pose(meta):
    point = meta.sfm_point or meta.recorded_point
    heading = meta.sfm_heading if meta.sfm_heading is not None else meta.recorded_heading
    return point, heading


def _pinhole_intrinsics(meta, radial_model):
    intr = CameraIntrinsics.from_metadata(meta)
    if intr.model == "fisheye":
        return intr, undistorted_intrinsics(intr, radial_model)
    return intr, intr


def _png_rgb(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.array(im.convert("RGB"))


def _encode_rgb(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


class Curator:
    def __init__(self, cfg: CurationConfig, client=None, osm_source=None):
        self.cfg = cfg
        self.boundary = resolve_boundary(cfg)
        self.filter_cfg = cfg.filter_config(self.boundary)
        self.city = cfg.city
        self.root = Path(cfg.output_root)
        self.city_dir = self.root / self.city
        lats = [p[0] for p in self.boundary]
        lons = [p[1] for p in self.boundary]
        self.frame = UtmFrame.for_points(lats, lons)
        fixtures = fixture_dir(cfg.fixtures) if cfg.fixtures else None
        if client is None:
            if fixtures is not None:
                client = FixtureClient(fixtures / "mapillary", fixtures / "images")
            else:
                client = MapillaryClient(base_url=cfg.api_base)
        if osm_source is None:
            if fixtures is not None:
                osm_source = FixtureOsmSource(fixtures / "osm")
            else:
                osm_source = OsmApiSource(cfg.osm_base, cache_dir=self.city_dir / "osm")
        self.client = client
        self.geoms = _GeometryCache(osm_source, self.frame, default_rules())
        self.report = CurateReport(self.city)

    # paths relative to the dataset root
    def rel(self, kind: str, image_id: str) -> str:
        name = {"meta": f"{image_id}.json", "fpv": f"{image_id}.png",
                "bev": f"{image_id}_bev.png", "mask": f"{image_id}_vis.png"}[kind]
        folder = {"meta": "fpv", "fpv": "fpv", "bev": "bev", "mask": "mask"}[kind]
        return f"{self.city}/{folder}/{name}"

    def path(self, kind: str, image_id: str) -> Path:
        return self.root / self.rel(kind, image_id)

    # -- stages

    def candidate_ids(self) -> list:
        tiles = enumerate_tiles(self.boundary)
        self.report.tiles = len(tiles)
        per_tile = fetch_all(lambda t: fetch_tile_image_ids(t, self.client), tiles,
                             self.cfg.workers)
        seen, ids = set(), []
        for chunk in per_tile:
            for i in chunk:
                if i not in seen:
                    seen.add(i)
                    ids.append(i)
        self.report.candidates = len(ids)
        return ids

    def _metadata(self, image_id: str):
        cached = self.path("meta", image_id)
        if cached.exists():
            payload = json.loads(cached.read_text(encoding="utf-8"))
        else:
            payload = self.client.image_payload(image_id)
            atomic_write_text(cached, json.dumps(payload, sort_keys=True, indent=1) + "\n")
        try:
            return parse_image_payload(payload)
        except MetadataError as exc:
            raise PayloadError(str(exc), image_id=image_id) from exc

    def fetch_metadata(self, ids) -> list:
        def one(i):
            try:
                return self._metadata(i)
            except PayloadError as exc:
                log.warning("skipping image %s: %s", i, exc)
                return exc
        results = fetch_all(one, ids, self.cfg.workers)
        metas = []
        for i, r in zip(ids, results):
            if isinstance(r, Exception):
                self.report.metadata_errors.append({"id": i, "error": str(r)})
            else:
                metas.append(r)
        return metas

    def _complete(self, meta) -> bool:
        needed = ["bev", "mask"] + (["fpv"] if self._wants_image(meta) else [])
        return all(self.path(k, meta.id).exists() for k in needed)

    def _wants_image(self, meta) -> bool:
        return self.cfg.download_images

    def _image_bytes(self, meta):
        if isinstance(self.client, FixtureClient):
            return self.client.image_bytes(meta.id)
        if meta.thumb_url:
            return self.client.download(meta.thumb_url)
        return None

    def render_one(self, meta) -> str:
        """Returns 'skipped' or 'rendered'; raises on failure."""
        if self._complete(meta):
            return "skipped"
        cfg = self.cfg
        point, heading = _pose(meta)
        pose = self.frame.project(GeoPoint(point.lat, point.lon))
        window = compute_bev_window(pose, heading, cfg.alpha, cfg.delta, cfg.rho)
        s, w, n, e = window.bounds_wgs84(self.frame)
        geoms = self.geoms.geometries((w, s, e, n))
        bev = render_bev(geoms, pose, heading, cfg.alpha, cfg.delta, cfg.rho)

        raw_intr, pinhole = _pinhole_intrinsics(meta, cfg.radial_model)
        vis = combined_mask(frustum_mask(pinhole, cfg.alpha),
                            raycast_mask(bev, cfg.penetration_px))

        if self._wants_image(meta):
            data = self._image_bytes(meta)
            if data is None:
                raise ClientError(f"no image available for {meta.id}")
            img = _png_rgb(data)
            if raw_intr.model == "fisheye":
                img, _ = undistort_fisheye(img, raw_intr, cfg.radial_model)
            atomic_write_bytes(self.path("fpv", meta.id), _encode_rgb(img))
        atomic_write_bytes(self.path("bev", meta.id), bev.to_png())
        # the mask goes last: its presence marks a finished image
        atomic_write_bytes(self.path("mask", meta.id), vis.to_png())
        return "rendered"

    def render_all(self, metas) -> list:
        def one(m):
            try:
                return self.render_one(m)
            except (ClientError, ValueError, OSError) as exc:
                log.warning("render failed for %s: %s", m.id, exc)
                return exc
        results = fetch_all(one, metas, self.cfg.workers)
        done = []
        for m, r in zip(metas, results):
            if isinstance(r, Exception):
                self.report.render_failures.append({"id": m.id, "error": str(r)})
            else:
                done.append(m)
                if r == "skipped":
                    self.report.skipped_existing += 1
                else:
                    self.report.rendered += 1
        return done

    def records(self, metas) -> list:
        poses = {}
        for m in metas:
            point, _ = _pose(m)
            poses[m.id] = self.frame.project(GeoPoint(point.lat, point.lon))
        pts = [(p.easting, p.northing, p.zone) for p in poses.values()]
        assignment = split_geographic(pts, self.cfg.split_ratios, self.cfg.cell_m,
                                      self.cfg.split_seed)
        out = []
        for m in metas:
            point, heading = _pose(m)
            p = poses[m.id]
            out.append(ManifestRecord(
                id=m.id, sequence_id=m.sequence_id, lat=point.lat, lon=point.lon,
                utm_easting=round(p.easting, 3), utm_northing=round(p.northing, 3),
                utm_zone=p.zone, utm_hemisphere=p.hemisphere, heading=heading,
                captured_at=m.captured_at, camera_model=m.camera_model,
                camera_type=m.camera_type.value, focal=m.focal, image_width=m.width,
                image_height=m.height,
                split=assignment.split_of(p.easting, p.northing, p.zone),
                fpv_path=self.rel("fpv" if self._wants_image(m) else "meta", m.id),
                bev_path=self.rel("bev", m.id), mask_path=self.rel("mask", m.id)))
        return out

    def run(self) -> CurateReport:
        ids = self.candidate_ids()
        metas = self.fetch_metadata(ids)
        retained, filter_report = run_filter_pipeline(metas, self.filter_cfg,
                                                      self.cfg.workers)
        self.report.retained = len(retained)
        atomic_write_text(self.city_dir / "filter_report.json",
                          json.dumps(filter_report.to_dict(), indent=2) + "\n")
        atomic_write_text(self.city_dir / "filter_report.txt", filter_report.format_table())

        retained = sorted(retained, key=lambda m: m.id)
        done = self.render_all(retained)
        records = self.records(done) if done else []
        write_manifest(self.city_dir / "manifest.jsonl", records)
        self.report.manifest_records = len(records)
        atomic_write_text(self.city_dir / "curate_report.json",
                          json.dumps(self.report.to_dict(), indent=2) + "\n")
        return self.report


def curate(cfg: CurationConfig, client=None, osm_source=None) -> CurateReport:
    return Curator(cfg, client, osm_source).run()
