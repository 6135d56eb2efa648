"""Fisheye -> pinhole resampling.

Two radial models are available. ``"theta"`` (the default, Mapillary's fisheye
convention) maps the ray angle to a distorted radius
``r = theta * (1 + k1 theta^2 + k2 theta^4)``; ``"radial"`` applies the same
polynomial to the pinhole radius ``tan(theta)`` and is the identity at
``k1 = k2 = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

MAX_RAY_ANGLE = math.radians(89.0)
RADIAL_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    model: str = "pinhole"
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")
        if self.model not in ("pinhole", "fisheye"):
            raise ValueError(f"unknown camera model {self.model!r}")

    @classmethod
    def from_metadata(cls, meta) -> "CameraIntrinsics":
        """Mapillary focal is normalised by the larger image side."""
        if meta.focal is None or meta.width is None or meta.height is None:
            raise ValueError(f"image {meta.id} lacks focal/size metadata")
        f = meta.focal * max(meta.width, meta.height)
        model = "fisheye" if meta.camera_type.value == "fisheye" else "pinhole"
        return cls(meta.width, meta.height, f, f, meta.width / 2.0, meta.height / 2.0,
                   model, meta.k1, meta.k2)


def distort_radius(u, k1, k2):
    """Distorted normalised radius for a ray angle (theta) or pinhole radius (radial)."""
    u = np.asarray(u, dtype=float)
    return u * (1.0 + k1 * u**2 + k2 * u**4)


def _d_distort(u, k1, k2):
    return 1.0 + 3.0 * k1 * u**2 + 5.0 * k2 * u**4


def invert_distortion(r_d, k1, k2, guess=None, max_iter=50):
    """Newton solve of ``u * (1 + k1 u^2 + k2 u^4) = r_d``.

    Returns (u, converged) where converged means a radial residual <= 1e-6.
    """
    r_d = np.asarray(r_d, dtype=float)
    u = r_d.copy() if guess is None else np.array(guess, dtype=float)
    for _ in range(max_iter):
        f = distort_radius(u, k1, k2) - r_d
        if np.all(np.abs(f) <= RADIAL_TOL * 1e-3):
            break
        d = _d_distort(u, k1, k2)
        d = np.where(np.abs(d) < 1e-12, 1e-12, d)
        u = u - f / d
    ok = np.isfinite(u) & (np.abs(distort_radius(u, k1, k2) - r_d) <= RADIAL_TOL) & (u >= 0)
    return u, ok


def _monotonic_limit(k1, k2, upper):
    """Largest u in [0, upper] before the distortion polynomial folds over."""
    us = np.linspace(0.0, upper, 20001)
    bad = np.flatnonzero(_d_distort(us, k1, k2) <= 0)
    return upper if bad.size == 0 else float(us[bad[0] - 1]) if bad[0] > 0 else 0.0


def _bilinear(image, sx, sy, valid):
    h, w = image.shape[:2]
    x0 = np.clip(np.floor(sx).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(sy).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)
    fy = (sy - y0)
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    img = image.astype(float)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    mask = valid[..., None] if image.ndim == 3 else valid
    out = np.where(mask, out, 0.0)
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(image.dtype)


def _fold_limit(k1, k2, radial_model):
    u_cap = MAX_RAY_ANGLE if radial_model == "theta" else math.tan(MAX_RAY_ANGLE)
    return _monotonic_limit(k1, k2, u_cap)


def undistorted_intrinsics(intr: CameraIntrinsics, radial_model: str = "theta") -> CameraIntrinsics:
    """Pinhole intrinsics with the same horizontal field of view."""
    if intr.model == "pinhole":
        return intr
    k1, k2 = intr.k1, intr.k2
    # u is theta or tan(theta) depending on the model
    u_fold = _fold_limit(k1, k2, radial_model)
    r_edge = (intr.width / 2.0) / intr.fx
    u_edge, ok = invert_distortion(np.array([r_edge]), k1, k2)
    u_edge = min(float(u_edge[0]) if ok[0] else u_fold, u_fold)
    half_fov = u_edge if radial_model == "theta" else math.atan(u_edge)
    half_fov = min(half_fov, MAX_RAY_ANGLE)
    fx_new = (intr.width / 2.0) / math.tan(half_fov)
    return replace(intr, fx=fx_new, fy=fx_new * intr.fy / intr.fx, model="pinhole",
                   k1=0.0, k2=0.0)


def undistort_fisheye(image: np.ndarray, intr: CameraIntrinsics, radial_model: str = "theta"):
    """Resample a fisheye image onto a pinhole grid of the same size.

    The pinhole focal keeps the horizontal field of view. Pixels whose ray
    falls outside the source, past the fold of the distortion polynomial, or
    whose inverse does not converge come out black.
    """
    if intr.model != "fisheye":
        raise ValueError("undistort_fisheye needs fisheye intrinsics")
    if not (math.isfinite(intr.k1) and math.isfinite(intr.k2)):
        raise ValueError("distortion coefficients must be finite")
    if radial_model not in ("theta", "radial"):
        raise ValueError(f"unknown radial model {radial_model!r}")
    image = np.asarray(image)
    h, w = image.shape[:2]
    if (h, w) != (intr.height, intr.width):
        raise ValueError(f"image is {w}x{h}, intrinsics say {intr.width}x{intr.height}")
    k1, k2 = intr.k1, intr.k2
    new = undistorted_intrinsics(intr, radial_model)
    fx_new, fy_new = new.fx, new.fy
    u_fold = _fold_limit(k1, k2, radial_model)

    v, uu = np.mgrid[0:h, 0:w].astype(float)
    x = (uu - intr.cx) / fx_new
    y = (v - intr.cy) / fy_new
    r_u = np.hypot(x, y)
    u = np.arctan(r_u) if radial_model == "theta" else r_u
    r_d = distort_radius(u, k1, k2)
    scale = np.where(r_u > 0, r_d / np.where(r_u > 0, r_u, 1.0), 1.0)
    sx = intr.cx + intr.fx * x * scale
    sy = intr.cy + intr.fy * y * scale
    # undo round-off so an identity mapping samples pixel centres exactly
    for s in (sx, sy):
        near = np.abs(s - np.rint(s)) < 1e-9
        s[near] = np.rint(s[near])

    u_back, conv = invert_distortion(r_d, k1, k2)
    valid = conv & (np.abs(u_back - u) <= 1e-6) & (u <= u_fold)
    valid &= (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    return _bilinear(image, sx, sy, valid), new
