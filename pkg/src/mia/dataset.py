"""Dataset manifest, geographically disjoint splits and coverage statistics."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from mia.io import atomic_write_text
from mia.kernels import disk_union_cells

MANIFEST_FORMAT = "mia-manifest"
MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")
COVERAGE_RADIUS_M = 112.0


class ManifestError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass
class ManifestRecord:
    id: str
    sequence_id: str
    lat: float
    lon: float
    utm_easting: float
    utm_northing: float
    utm_zone: int
    utm_hemisphere: str
    heading: float
    captured_at: int
    camera_model: str
    camera_type: str
    focal: float | None
    image_width: int | None
    image_height: int | None
    split: str
    fpv_path: str
    bev_path: str
    mask_path: str


FIELD_NAMES = tuple(f.name for f in fields(ManifestRecord))


def _header() -> str:
    return json.dumps({"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION,
                       "fields": list(FIELD_NAMES)})


def dumps_manifest(records) -> str:
    records = sorted(records, key=lambda r: r.id)
    seen = set()
    lines = [_header()]
    for r in records:
        if r.id in seen:
            raise ManifestError(f"duplicate image id {r.id!r}")
        if r.split not in SPLITS:
            raise ManifestError(f"record {r.id!r} has no valid split ({r.split!r})")
        seen.add(r.id)
        lines.append(json.dumps(asdict(r), ensure_ascii=False))
    return "\n".join(lines) + "\n"


def write_manifest(path, records) -> None:
    atomic_write_text(path, dumps_manifest(records))


def loads_manifest(text: str) -> list[ManifestRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ManifestError("empty manifest (missing header line)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"unreadable manifest header: {exc}") from None
    if header.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"not a manifest (format={header.get('format')!r})")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"manifest schema version {header.get('version')!r} "
                            f"!= supported {MANIFEST_VERSION}")
    out, seen = [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            doc = json.loads(line)
            rec = ManifestRecord(**doc)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ManifestError(f"line {lineno}: bad record ({exc})") from None
        if rec.id in seen:
            raise ManifestError(f"line {lineno}: duplicate image id {rec.id!r}")
        seen.add(rec.id)
        out.append(rec)
    return out


def read_manifest(path) -> list[ManifestRecord]:
    return loads_manifest(Path(path).read_text(encoding="utf-8"))


# -------------------------------------------------------------------- split


@dataclass
class SplitAssignment:
    cell_m: float
    cells: dict

    def cell_of(self, easting: float, northing: float, zone: int = 0) -> tuple:
        return (int(zone), int(math.floor(easting / self.cell_m)),
                int(math.floor(northing / self.cell_m)))

    def split_of(self, easting: float, northing: float, zone: int = 0) -> str:
        return self.cells[self.cell_of(easting, northing, zone)]


def split_geographic(points, ratios=(0.8, 0.1, 0.1), cell_m: float = 500.0,
                     seed: int = 0) -> SplitAssignment:
    """Bucket (easting, northing, zone) points into square cells and hand whole
    cells to splits, largest cell first, each to the split furthest below its
    target image count."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != len(SPLITS) or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise SplitError(f"ratios must be three non-negative numbers summing to 1: {ratios}")
    if not cell_m > 0:
        raise SplitError("cell size must be positive")
    assignment = SplitAssignment(float(cell_m), {})
    counts = Counter()
    for p in points:
        e, n = p[0], p[1]
        zone = p[2] if len(p) > 2 else 0
        counts[assignment.cell_of(e, n, zone)] += 1
    if len(counts) < len(SPLITS):
        raise SplitError(f"{len(counts)} occupied cells cannot fill {len(SPLITS)} splits")
    cells = sorted(counts)
    tiebreak = np.random.default_rng(seed).permutation(len(cells))
    order = sorted(range(len(cells)), key=lambda i: (-counts[cells[i]], tiebreak[i]))
    total = sum(counts.values())
    targets = [r * total for r in ratios]
    filled = [0] * len(SPLITS)
    for i in order:
        cell = cells[i]
        k = max(range(len(SPLITS)), key=lambda s: (targets[s] - filled[s], -s))
        assignment.cells[cell] = SPLITS[k]
        filled[k] += counts[cell]
    return assignment


# ----------------------------------------------------------------- coverage


def coverage_km2(poses, radius_m: float = COVERAGE_RADIUS_M, pitch_m: float = 1.0) -> float:
    """Area of the union of ``radius_m`` disks around poses, on a ``pitch_m`` grid.

    ``poses`` holds objects with ``easting``/``northing`` or (E, N) pairs, all in
    one UTM frame.
    """
    if not radius_m > 0:
        raise ValueError("radius must be positive")
    poses = list(poses)
    if not poses:
        return 0.0
    if hasattr(poses[0], "easting"):
        xs = np.array([p.easting for p in poses], dtype=float)
        ys = np.array([p.northing for p in poses], dtype=float)
    else:
        arr = np.asarray(poses, dtype=float).reshape(-1, 2)
        xs, ys = arr[:, 0], arr[:, 1]
    x0 = xs.min() - radius_m
    y0 = ys.min() - radius_m
    n_rows = int(math.ceil((ys.max() + radius_m - y0) / pitch_m))
    cells = disk_union_cells(xs, ys, radius_m, x0, y0, pitch_m, n_rows)
    return cells * pitch_m * pitch_m / 1e6
