"""Observability masks: camera frustum wedge and building-occlusion raycast."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mia.bev import SemanticBev, decode_png, encode_png
from mia.classes import SemanticClass
from mia.kernels import ray_counts


@dataclass
class VisibilityMask:
    mask: np.ndarray
    kind: str

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.kind not in ("frustum", "raycast", "combined", "file"):
            raise ValueError(f"unknown mask kind {self.kind!r}")

    @property
    def shape(self):
        return self.mask.shape

    def to_png(self) -> bytes:
        return encode_png(np.where(self.mask, 255, 0).astype(np.uint8))

    @classmethod
    def from_png(cls, data: bytes, kind: str = "file") -> "VisibilityMask":
        return cls(decode_png(data) >= 128, kind)


def half_angle_from_intrinsics(width: float, fx: float) -> float:
    return math.atan((width / 2.0) / fx)


def frustum_mask(intr=None, alpha: int = 224, half_angle: float | None = None) -> VisibilityMask:
    """Wedge apexed at the ego pixel, opening upward (forward).

    Pass pinhole intrinsics or ``half_angle`` in radians directly.
    """
    if half_angle is None:
        if intr is None:
            raise ValueError("need intrinsics or a half angle")
        if getattr(intr, "model", "pinhole") != "pinhole":
            raise ValueError("frustum mask needs pinhole intrinsics")
        half_angle = half_angle_from_intrinsics(intr.width, intr.fx)
    er = ec = alpha // 2
    rr, cc = np.mgrid[0:alpha, 0:alpha]
    forward = (er - rr).astype(float)
    lateral = np.abs(cc - ec).astype(float)
    angle = np.arctan2(lateral, forward)
    mask = (forward >= 0) & (angle <= half_angle + 1e-12)
    mask[er, ec] = True
    return VisibilityMask(mask, "frustum")


def raycast_mask(bev: SemanticBev, penetration_px: float = 4) -> VisibilityMask:
    """A pixel is visible while at most ``penetration_px`` building pixels
    precede it on the supercover ray from the ego pixel."""
    building = bev.plane(SemanticClass.BUILDING)
    if penetration_px is None or math.isinf(penetration_px):
        return VisibilityMask(np.ones(building.shape, dtype=bool), "raycast")
    er, ec = bev.ego
    counts = ray_counts(building, er, ec)
    mask = counts <= penetration_px
    mask[er, ec] = True
    return VisibilityMask(mask, "raycast")


def combined_mask(frustum: VisibilityMask, raycast: VisibilityMask) -> VisibilityMask:
    if frustum.shape != raycast.shape:
        raise ValueError(f"mask shapes differ: {frustum.shape} vs {raycast.shape}")
    return VisibilityMask(frustum.mask & raycast.mask, "combined")
