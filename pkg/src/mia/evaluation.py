"""BEV benchmark: class remapping, binarisation, masked IoU and split reports."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mia.classes import CLASS_NAMES

EVAL_SIDE_M = 50.0
EVAL_RHO = 0.5
ROAD_SIDEWALK = ("Road", "Sidewalk")


class EvalError(ValueError):
    pass


# ------------------------------------------------------------------ mapping


@dataclass(frozen=True)
class ClassMapping:
    """Ordered source -> target class names; ``None`` targets are dropped."""

    name: str
    pairs: tuple

    def __post_init__(self):
        targets = [t for _, t in self.pairs if t is not None]
        if len(set(targets)) != len(targets):
            raise EvalError(f"mapping {self.name!r} maps two classes onto one target")
        sources = [s for s, _ in self.pairs]
        if len(set(sources)) != len(sources):
            raise EvalError(f"mapping {self.name!r} lists a source class twice")

    @property
    def sources(self) -> tuple:
        return tuple(s for s, _ in self.pairs)

    @property
    def targets(self) -> tuple:
        return tuple(t for _, t in self.pairs if t is not None)

    def target_of(self, source: str):
        return dict(self.pairs).get(source)

    def inverse(self) -> "ClassMapping":
        return ClassMapping(f"{self.name}^-1", tuple((t, s) for s, t in self.pairs
                                                     if t is not None))

    @classmethod
    def identity(cls, names=CLASS_NAMES) -> "ClassMapping":
        return cls("identity", tuple((n, n) for n in names))

    @classmethod
    def from_dict(cls, doc: dict) -> "ClassMapping":
        return cls(doc.get("name", "custom"), tuple((s, t) for s, t in doc["pairs"]))

    @classmethod
    def load(cls, path) -> "ClassMapping":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"name": self.name, "pairs": [list(p) for p in self.pairs]}


# source order follows the raster plane order; targets from the zero-shot table
NUSCENES = ClassMapping("nuscenes", (
    ("Road", "Drivable"), ("Parking", "Carpark"), ("Sidewalk", "Walkway"),
    ("Crossing", "Crossing"), ("Building", None), ("Terrain", None)))
KITTI360 = ClassMapping("kitti360", (
    ("Road", "Road"), ("Parking", None), ("Sidewalk", "Sidewalk"),
    ("Crossing", None), ("Building", "Building"), ("Terrain", "Terrain")))
BUILTIN_MAPPINGS = {"identity": ClassMapping.identity(), "nuscenes": NUSCENES,
                    "kitti360": KITTI360}


def road_sidewalk_targets(mapping: ClassMapping) -> tuple:
    return tuple(t for s, t in mapping.pairs if s in ROAD_SIDEWALK and t is not None)


def remap_classes(planes: np.ndarray, names, mapping: ClassMapping):
    """Return (planes, names) in the mapping's target taxonomy."""
    names = list(names)
    if len(names) != len(planes):
        raise EvalError(f"{len(planes)} planes but {len(names)} class names")
    index = {n: i for i, n in enumerate(names)}
    for n in names:
        if n not in mapping.sources:
            raise EvalError(f"class {n!r} unknown to mapping {mapping.name!r}")
    out, out_names = [], []
    for src, tgt in mapping.pairs:
        if tgt is None:
            continue
        if src not in index:
            raise EvalError(f"source class {src!r} missing from raster")
        out.append(planes[index[src]])
        out_names.append(tgt)
    if not out:
        return np.zeros((0,) + planes.shape[1:], dtype=planes.dtype), []
    return np.stack(out), out_names


# ----------------------------------------------------------------- kernels


def binarize(prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    prob = np.asarray(prob, dtype=float)
    if prob.size and (np.isnan(prob).any() or prob.min() < 0.0 or prob.max() > 1.0):
        raise EvalError("probabilities must lie in [0, 1]")
    return prob >= threshold


def eval_window_slices(alpha: int, rho: float, side_m: float = EVAL_SIDE_M):
    """Rows/cols of the forward eval window: ego at bottom-centre."""
    n = side_m / rho
    if abs(n - round(n)) > 1e-9:
        raise EvalError(f"{side_m} m is not a whole number of {rho} m pixels")
    n = int(round(n))
    if alpha == n:
        return slice(0, n), slice(0, n)
    e = alpha // 2
    r0, c0 = e - n, e - n // 2
    if r0 < 0 or c0 < 0 or c0 + n > alpha:
        raise EvalError(f"{alpha}px raster cannot hold a {n}px eval window")
    return slice(r0, e), slice(c0, c0 + n)


@dataclass
class IouReport:
    classes: tuple
    intersection: np.ndarray
    union: np.ndarray
    road_sidewalk: tuple = ROAD_SIDEWALK
    image_count: int = 1
    image_ious: list = field(default_factory=list)

    def iou(self) -> dict:
        return {c: (float(i) / float(u) if u > 0 else None)
                for c, i, u in zip(self.classes, self.intersection, self.union)}

    def _mean(self, names, per_image: bool):
        if per_image:
            vals = []
            for name in names:
                xs = [d[name] for d in self.image_ious if d.get(name) is not None]
                if xs:
                    vals.append(float(np.mean(xs)))
        else:
            ious = self.iou()
            vals = [ious[n] for n in names if ious.get(n) is not None]
        return float(np.mean(vals)) if vals else None

    def macro(self, per_image: bool = False):
        return self._mean(self.classes, per_image)

    def avg_rs(self, per_image: bool = False):
        return self._mean([c for c in self.road_sidewalk if c in self.classes], per_image)

    def to_dict(self, per_image: bool = False) -> dict:
        ious = self.iou()
        if per_image:
            ious = {c: self._mean([c], True) for c in self.classes}
        return {
            "classes": {c: {"intersection": int(i), "union": int(u), "iou": ious[c]}
                        for c, i, u in zip(self.classes, self.intersection, self.union)},
            "macro": self.macro(per_image),
            "avg_rs": self.avg_rs(per_image),
            "image_count": self.image_count,
        }


def masked_iou(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None, classes,
               rho: float = EVAL_RHO, eval_rho: float = EVAL_RHO,
               side_m: float = EVAL_SIDE_M, road_sidewalk=ROAD_SIDEWALK) -> IouReport:
    """Per-class IoU over visible pixels of the forward 50 m window."""
    if abs(rho - eval_rho) > 1e-12:
        raise EvalError(f"raster resolution {rho} m/px differs from eval resolution {eval_rho}")
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise EvalError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    alpha = gt.shape[-1]
    if mask is None:
        mask = np.ones(gt.shape[1:], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gt.shape[1:]:
        raise EvalError(f"mask shape {mask.shape} != raster {gt.shape[1:]}")
    rs, cs = eval_window_slices(alpha, rho, side_m)
    p = pred[:, rs, cs] & mask[rs, cs]
    g = gt[:, rs, cs] & mask[rs, cs]
    inter = (p & g).sum(axis=(1, 2)).astype(np.int64)
    union = (p | g).sum(axis=(1, 2)).astype(np.int64)
    rep = IouReport(tuple(classes), inter, union, tuple(road_sidewalk))
    rep.image_ious = [rep.iou()]
    return rep


def aggregate_split(reports) -> IouReport:
    reports = list(reports)
    if not reports:
        raise EvalError("nothing to aggregate")
    classes = reports[0].classes
    if any(r.classes != classes for r in reports):
        raise EvalError("reports disagree on class list")
    inter = np.sum([r.intersection for r in reports], axis=0)
    union = np.sum([r.union for r in reports], axis=0)
    out = IouReport(classes, inter, union, reports[0].road_sidewalk,
                    sum(r.image_count for r in reports))
    out.image_ious = [d for r in reports for d in r.image_ious]
    return out


# ------------------------------------------------------------------ output


def _fmt(x) -> str:
    return "  --  " if x is None else f"{100.0 * x:6.2f}"


def format_table(report: IouReport, title: str = "", per_image: bool = False) -> str:
    d = report.to_dict(per_image)
    header = ["Model"] + list(report.classes) + ["Avg{R,S}", "Macro"]
    row = [title or "prediction"] + [_fmt(d["classes"][c]["iou"]) for c in report.classes]
    row += [_fmt(d["avg_rs"]), _fmt(d["macro"])]
    widths = [max(len(h), len(r)) for h, r in zip(header, row)]
    line = " | ".join(h.rjust(w) for h, w in zip(header, widths))
    vals = " | ".join(r.rjust(w) for r, w in zip(row, widths))
    return f"{line}\n{'-' * len(line)}\n{vals}\n(IoU x100 over {report.image_count} images)\n"


def write_report(report: IouReport, path, per_image: bool = False) -> None:
    from mia.io import atomic_write_text

    d = report.to_dict(per_image)
    d = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}
    atomic_write_text(path, json.dumps(d, indent=2, sort_keys=True) + "\n")
