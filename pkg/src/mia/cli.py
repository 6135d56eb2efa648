"""``mia`` command line: curate, render, eval, split, stats.

Exit codes: 0 success, 2 usage or validation error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from mia import __version__
from mia.classes import CLASS_NAMES
from mia.config import (ConfigError, CurationConfig, env_name, field_names, load_config_file,
                        resolve_config)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

log = logging.getLogger("mia")

_CURATE_FIELDS = tuple(n for n in field_names() if n not in ("workers", "fixtures"))
_HELP = {
    "region": "named region from the region table",
    "polygon_file": "JSON [[lat, lon], ...] or GeoJSON Polygon boundary",
    "output_root": "dataset root directory",
    "camera_model_filter": "apply the camera model allowlist (true/false)",
    "camera_allowlist": "comma-separated normalised camera models",
    "camera_types": "comma-separated camera types to keep",
    "recency_cutoff": "keep images captured after this ISO date (UTC)",
    "split_ratios": "train,val,test fractions",
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_global(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="FILE", default=default,
                   help="JSON config file (overridden by env and flags)")
    p.add_argument("--workers", metavar="N", default=default, help="worker threads")
    p.add_argument("--fixtures", metavar="DIR", default=default,
                   help="offline mode: fixture directory or packaged fixture name")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress
                   else 0)


def _config_flags(p: argparse.ArgumentParser, names) -> None:
    for n in names:
        default = CurationConfig.__dataclass_fields__[n].default
        p.add_argument(_flag(n), dest=n, metavar=n.upper(), default=None,
                       help=f"{_HELP.get(n, n.replace('_', ' '))} "
                            f"(env {env_name(n)}; default {default!r})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mia", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mia {__version__}")
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("curate", help="build FPV/BEV/mask tuples for a region")
    _add_global(p, suppress=True)
    _config_flags(p, _CURATE_FIELDS)

    p = sub.add_parser("render", help="render the BEV and mask for one image payload")
    _add_global(p, suppress=True)
    p.add_argument("--meta", required=True, help="Mapillary image payload (JSON)")
    p.add_argument("--osm", required=True, help="OSM XML or Overpass JSON extract")
    p.add_argument("--out", default=".", help="output directory")
    _config_flags(p, ("alpha", "delta", "rho", "penetration_px", "radial_model"))

    p = sub.add_parser("eval", help="masked IoU of predictions against BEV ground truth")
    _add_global(p, suppress=True)
    p.add_argument("--pred", required=True,
                   help="directory of <id>.npy probabilities or <id>_bev.png rasters")
    p.add_argument("--gt", required=True, help="directory of <id>_bev.png ground truth")
    p.add_argument("--mask", choices=("raycast", "frustum", "file", "none"), default="raycast")
    p.add_argument("--mask-dir", help="directory of <id>_vis.png masks (--mask file)")
    p.add_argument("--manifest", help="manifest for ids, splits and camera intrinsics")
    p.add_argument("--split", choices=("train", "val", "test"), help="restrict to one split")
    p.add_argument("--mapping", default="identity",
                   help="identity, nuscenes, kitti360 or a mapping JSON file")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--hfov-deg", type=float, help="frustum field of view without a manifest")
    p.add_argument("--per-image-mean", action="store_true",
                   help="average per-image IoUs instead of pooling pixel counts")
    p.add_argument("--out", required=True, help="report JSON path")
    _config_flags(p, ("rho", "penetration_px"))

    p = sub.add_parser("split", help="reassign geographic splits in a manifest")
    _add_global(p, suppress=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output manifest (default: rewrite in place)")
    _config_flags(p, ("split_ratios", "cell_m", "split_seed"))

    p = sub.add_parser("stats", help="coverage, filter yields and camera histogram")
    _add_global(p, suppress=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", help="filter_report.json (default: next to the manifest)")
    p.add_argument("--out", help="write stats JSON here")
    return parser


def load_config(args, env=None) -> CurationConfig:
    env = os.environ if env is None else env
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {n: getattr(args, n, None) for n in field_names()}
    return resolve_config(flags, env, file_values)


# ------------------------------------------------------------------ commands


def cmd_curate(args, cfg: CurationConfig) -> int:
    from mia.curate import curate

    report = curate(cfg)
    print(f"{report.city}: {report.candidates} candidates, {report.retained} retained, "
          f"{report.rendered} rendered, {report.skipped_existing} already done, "
          f"{len(report.render_failures)} failed")
    print(Path(cfg.output_root, report.city, "filter_report.txt").read_text(), end="")
    return EXIT_OK


def cmd_render(args, cfg: CurationConfig) -> int:
    from mia.bev import render_bev
    from mia.curate import _pinhole_intrinsics, _pose
    from mia.fpv.metadata import parse_image_payload
    from mia.geodesy import GeoPoint, UtmFrame
    from mia.io import atomic_write_bytes
    from mia.osm import classify, infer_sidewalks, parse_osm
    from mia.osm.parse import sniff_format
    from mia.visibility import combined_mask, frustum_mask, raycast_mask

    meta = parse_image_payload(json.loads(Path(args.meta).read_text()))
    data = Path(args.osm).read_bytes()
    graph = parse_osm(data, sniff_format(data))
    point, heading = _pose(meta)
    frame = UtmFrame.for_points([point.lat], [point.lon])
    c = classify(graph, None, frame)
    geoms = c.geometries + infer_sidewalks(graph, c, None, frame)
    pose = frame.project(GeoPoint(point.lat, point.lon))
    bev = render_bev(geoms, pose, heading, cfg.alpha, cfg.delta, cfg.rho)
    _, pinhole = _pinhole_intrinsics(meta, cfg.radial_model)
    vis = combined_mask(frustum_mask(pinhole, cfg.alpha), raycast_mask(bev, cfg.penetration_px))
    out = Path(args.out)
    atomic_write_bytes(out / f"{meta.id}_bev.png", bev.to_png())
    atomic_write_bytes(out / f"{meta.id}_vis.png", vis.to_png())
    print(f"wrote {out / f'{meta.id}_bev.png'} and {out / f'{meta.id}_vis.png'}")
    return EXIT_OK


def _load_pred(pred_dir: Path, image_id: str, threshold: float, rho: float):
    from mia.bev import SemanticBev
    from mia.evaluation import binarize

    npy = pred_dir / f"{image_id}.npy"
    if npy.exists():
        return binarize(np.load(npy), threshold)
    png = pred_dir / f"{image_id}_bev.png"
    if png.exists():
        return SemanticBev.from_png(png.read_bytes(), rho).planes
    raise DataError(f"no prediction for image {image_id} in {pred_dir}")


def cmd_eval(args, cfg: CurationConfig) -> int:
    import math

    from mia.bev import SemanticBev
    from mia.dataset import read_manifest
    from mia.evaluation import (BUILTIN_MAPPINGS, ClassMapping, aggregate_split, format_table,
                                masked_iou, remap_classes, road_sidewalk_targets, write_report)
    from mia.visibility import VisibilityMask, frustum_mask, raycast_mask

    gt_dir, pred_dir = Path(args.gt), Path(args.pred)
    if not gt_dir.is_dir() or not pred_dir.is_dir():
        raise DataError("--gt and --pred must be directories")
    if args.mapping in BUILTIN_MAPPINGS:
        mapping = BUILTIN_MAPPINGS[args.mapping]
    else:
        mapping = ClassMapping.load(args.mapping)
    records = {}
    if args.manifest:
        records = {r.id: r for r in read_manifest(args.manifest)}
    if args.split and not records:
        raise UsageError("--split needs --manifest")
    ids = sorted(p.name[:-len("_bev.png")] for p in gt_dir.glob("*_bev.png"))
    if records:
        ids = [i for i in ids if i in records and
               (args.split is None or records[i].split == args.split)]
    if not ids:
        raise DataError("no ground-truth rasters to evaluate")
    if args.mask == "file" and not args.mask_dir:
        raise UsageError("--mask file needs --mask-dir")
    if args.mask == "frustum" and not records and args.hfov_deg is None:
        raise UsageError("--mask frustum needs --manifest or --hfov-deg")

    reports = []
    for i in ids:
        gt = SemanticBev.from_png((gt_dir / f"{i}_bev.png").read_bytes(), cfg.rho)
        pred = _load_pred(pred_dir, i, args.threshold, cfg.rho)
        if args.mask == "raycast":
            mask = raycast_mask(gt, cfg.penetration_px).mask
        elif args.mask == "file":
            path = Path(args.mask_dir) / f"{i}_vis.png"
            if not path.exists():
                raise DataError(f"missing mask {path}")
            mask = VisibilityMask.from_png(path.read_bytes()).mask
        elif args.mask == "frustum":
            if i in records and records[i].focal and records[i].image_width:
                r = records[i]
                fx = r.focal * max(r.image_width, r.image_height or 0)
                half = math.atan(r.image_width / 2.0 / fx)
            else:
                half = math.radians(args.hfov_deg) / 2.0
            mask = frustum_mask(alpha=gt.alpha, half_angle=half).mask
        else:
            mask = None
        p_planes, names = remap_classes(pred, CLASS_NAMES, mapping)
        g_planes, _ = remap_classes(gt.planes, CLASS_NAMES, mapping)
        reports.append(masked_iou(p_planes, g_planes, mask, names, rho=cfg.rho,
                                  road_sidewalk=road_sidewalk_targets(mapping)))
    total = aggregate_split(reports)
    write_report(total, args.out, args.per_image_mean)
    print(format_table(total, Path(pred_dir).name, args.per_image_mean), end="")
    return EXIT_OK


def cmd_split(args, cfg: CurationConfig) -> int:
    from mia.dataset import read_manifest, split_geographic, write_manifest

    records = read_manifest(args.manifest)
    if records:
        pts = [(r.utm_easting, r.utm_northing, r.utm_zone) for r in records]
        a = split_geographic(pts, cfg.split_ratios, cfg.cell_m, cfg.split_seed)
        records = [replace(r, split=a.split_of(r.utm_easting, r.utm_northing, r.utm_zone))
                   for r in records]
    write_manifest(args.out or args.manifest, records)
    counts = Counter(r.split for r in records)
    print(" ".join(f"{s}={counts.get(s, 0)}" for s in ("train", "val", "test")))
    return EXIT_OK


def compute_stats(records, filter_report=None) -> dict:
    from mia.dataset import coverage_km2

    by_frame = {}
    for r in records:
        by_frame.setdefault((r.utm_zone, r.utm_hemisphere), []).append(
            (r.utm_easting, r.utm_northing))
    coverage = sum(coverage_km2(pts) for _, pts in sorted(by_frame.items()))
    return {
        "images": len(records),
        "sequences": len({r.sequence_id for r in records}),
        "coverage_km2": round(coverage, 6),
        "splits": {s: sum(r.split == s for r in records) for s in ("train", "val", "test")},
        "camera_models": dict(sorted(Counter(r.camera_model for r in records).items())),
        "camera_types": dict(sorted(Counter(r.camera_type for r in records).items())),
        "filter_report": filter_report.to_dict() if filter_report else None,
    }


def cmd_stats(args, cfg: CurationConfig) -> int:
    from mia.dataset import read_manifest
    from mia.fpv.filters import FilterReport
    from mia.io import atomic_write_text

    records = read_manifest(args.manifest)
    report_path = Path(args.report) if args.report else (
        Path(args.manifest).parent / "filter_report.json")
    report = None
    if report_path.exists():
        report = FilterReport.from_dict(json.loads(report_path.read_text()))
    elif args.report:
        raise DataError(f"cannot read filter report {report_path}")
    stats = compute_stats(records, report)
    text = json.dumps(stats, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    print(f"images: {stats['images']}  sequences: {stats['sequences']}  "
          f"coverage: {stats['coverage_km2']:.4f} km^2")
    if report is not None:
        print(report.format_table(), end="")
    for model, n in stats["camera_models"].items():
        print(f"  {model:<20} {n}")
    return EXIT_OK


COMMANDS = {"curate": cmd_curate, "render": cmd_render, "eval": cmd_eval,
            "split": cmd_split, "stats": cmd_stats}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    from mia.dataset import ManifestError, SplitError
    from mia.evaluation import EvalError
    from mia.fpv.client import ClientError
    from mia.fpv.tiles import BoundaryError
    from mia.osm import OsmParseError
    from mia.osm.source import OsmSourceError

    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"mia: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, BoundaryError, UsageError) as exc:
        print(f"mia: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ClientError, OsmSourceError, OsmParseError, ManifestError, SplitError,
            EvalError, OSError, ValueError) as exc:
        print(f"mia: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
