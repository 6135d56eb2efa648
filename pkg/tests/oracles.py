"""Independent reference implementations used to check the package.

Each oracle takes a different route from the code under test: slow exact
arithmetic, brute force, closed-form geometry or a third-party library.
"""
from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction

import numpy as np


# ------------------------------------------------------------ geometry basics


def point_in_polygon(x, y, ring) -> bool:
    """Even-odd ray casting on a (lon, lat)-style ring; boundary not special-cased."""
    inside = False
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < xc:
                inside = not inside
    return inside


def _orient(a, b, c):
    v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return (v > 0) - (v < 0)


def _on_segment(a, b, p):
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and
            min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def segments_touch(a, b, c, d) -> bool:
    """Closed segment intersection test."""
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and _on_segment(a, b, c)) or (o2 == 0 and _on_segment(a, b, d)) or
            (o3 == 0 and _on_segment(c, d, a)) or (o4 == 0 and _on_segment(c, d, b)))


def box_touches_polygon(box, ring) -> bool:
    """Closed axis-aligned box vs closed simple polygon, pure Python."""
    x0, y0, x1, y1 = box
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    if any(x0 <= x <= x1 and y0 <= y <= y1 for x, y in ring):
        return True
    if any(point_in_polygon(x, y, ring) for x, y in corners):
        return True
    for i in range(len(ring)):
        a, b = ring[i], ring[(i + 1) % len(ring)]
        for k in range(4):
            if segments_touch(a, b, corners[k], corners[(k + 1) % 4]):
                return True
    return False


# ----------------------------------------------------------------- slippy tiles


def tile_edges(zoom):
    """Closed-form tile edge longitudes/latitudes, independent of the package."""
    n = 2 ** zoom

    def lon(x):
        return x / n * 360.0 - 180.0

    def lat(y):
        return math.degrees(math.atan(math.sinh(math.pi * (1 - 2 * y / n))))
    return lon, lat


def tiles_touching(ring_lonlat, zoom, pad=3):
    lon_of, lat_of = tile_edges(zoom)
    n = 2 ** zoom
    lons = [p[0] for p in ring_lonlat]
    lats = [p[1] for p in ring_lonlat]
    x_lo = int((min(lons) + 180) / 360 * n) - pad
    x_hi = int((max(lons) + 180) / 360 * n) + pad

    def y_of(lat):
        r = math.radians(lat)
        return int((1 - math.asinh(math.tan(r)) / math.pi) / 2 * n)
    y_lo, y_hi = y_of(max(lats)) - pad, y_of(min(lats)) + pad
    out = []
    for x in range(max(x_lo, 0), min(x_hi, n - 1) + 1):
        for y in range(max(y_lo, 0), min(y_hi, n - 1) + 1):
            box = (lon_of(x), lat_of(y + 1), lon_of(x + 1), lat_of(y))
            if box_touches_polygon(box, ring_lonlat):
                out.append((x, y))
    return sorted(out)


# --------------------------------------------------------------- distances


def haversine(lat1, lon1, lat2, lon2, radius=6_371_008.8):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(a))


def angle_gap(a, b):
    d = (a - b) % 360.0
    return min(d, 360.0 - d)


# ----------------------------------------------------------- filter cascade


def filter_oracle(records, ring_lonlat, cutoff_ms, models, types, max_angle, max_loc,
                  sparsity):
    """Straight-line restatement of the six filter stages over plain dicts.

    Returns (retained ids, [count after each stage]).
    """
    stage = [r for r in records if point_in_polygon(r["lon"], r["lat"], ring_lonlat)]
    counts = [len(stage)]
    stage = [r for r in stage if r["captured_at"] > cutoff_ms]
    counts.append(len(stage))
    stage = [r for r in stage if r["camera_type"] in types and
             (models is None or r["model"] in models)]
    counts.append(len(stage))
    stage = [r for r in stage if r["sfm_heading"] is not None and
             angle_gap(r["heading"], r["sfm_heading"]) < max_angle]
    counts.append(len(stage))
    stage = [r for r in stage if r["sfm_lat"] is not None and
             haversine(r["lat"], r["lon"], r["sfm_lat"], r["sfm_lon"]) < max_loc]
    counts.append(len(stage))
    by_seq = defaultdict(list)
    for r in stage:
        by_seq[r["sequence"]].append(r)
    kept = set()
    for seq in by_seq.values():
        chosen = []
        for r in sorted(seq, key=lambda r: (r["captured_at"], r["id"])):
            if all(haversine(r["sfm_lat"], r["sfm_lon"], c["sfm_lat"], c["sfm_lon"]) >= sparsity
                   for c in chosen):
                chosen.append(r)
        kept.update(c["id"] for c in chosen)
    retained = [r["id"] for r in stage if r["id"] in kept]
    counts.append(len(retained))
    return retained, counts


# ------------------------------------------------------------- line of sight


def los_counts(occupied: np.ndarray, ego_r: int, ego_c: int) -> np.ndarray:
    """Occupied cells whose closed square meets the closed segment from the ego
    centre to each target centre, the target excluded.

    Exact: coordinates are doubled so every cell edge is an odd integer and the
    slab test compares integer fractions by cross multiplication.
    """
    n_rows, n_cols = occupied.shape
    occ_r, occ_c = np.nonzero(occupied)
    occ_r = occ_r.astype(np.int64)
    occ_c = occ_c.astype(np.int64)
    out = np.zeros(occupied.shape, dtype=np.int64)
    ax, ay = 2 * ego_c, 2 * ego_r
    for r in range(n_rows):
        for c in range(n_cols):
            if (r, c) == (ego_r, ego_c) or occ_r.size == 0:
                continue
            dx, dy = 2 * c - ax, 2 * r - ay
            # per-axis parameter interval [lo, hi] as fractions num/den, den > 0
            lows = [(np.zeros_like(occ_r), np.ones_like(occ_r))]
            highs = [(np.ones_like(occ_r), np.ones_like(occ_r))]
            hit = np.ones(occ_r.shape, dtype=bool)
            for d, a, centre in ((dx, ax, 2 * occ_c), (dy, ay, 2 * occ_r)):
                lo_edge, hi_edge = centre - 1, centre + 1
                if d == 0:
                    hit &= (lo_edge <= a) & (a <= hi_edge)
                    continue
                n0, n1 = lo_edge - a, hi_edge - a
                if d < 0:
                    n0, n1 = -n1, -n0
                den = np.full(occ_r.shape, abs(d), dtype=np.int64)
                lows.append((n0, den))
                highs.append((n1, den))
            ok = hit.copy()
            for ln, ld in lows:
                for hn, hd in highs:
                    ok &= ln * hd <= hn * ld
            ok &= ~((occ_r == r) & (occ_c == c))
            out[r, c] = int(ok.sum())
    return out


def los_counts_fraction(occupied, ego_r, ego_c, r, c) -> int:
    """Single-target version with ``fractions.Fraction``, for spot checks."""
    ax, ay = Fraction(ego_c), Fraction(ego_r)
    dx, dy = Fraction(c) - ax, Fraction(r) - ay
    total = 0
    for rr, cc in zip(*np.nonzero(occupied)):
        if (rr, cc) == (r, c):
            continue
        lo, hi = Fraction(0), Fraction(1)
        for d, a, centre in ((dx, ax, cc), (dy, ay, rr)):
            e0, e1 = Fraction(2 * int(centre) - 1, 2), Fraction(2 * int(centre) + 1, 2)
            if d == 0:
                if not (e0 <= a <= e1):
                    lo, hi = Fraction(1), Fraction(0)
                continue
            t0, t1 = (e0 - a) / d, (e1 - a) / d
            lo, hi = max(lo, min(t0, t1)), min(hi, max(t0, t1))
        if lo <= hi:
            total += 1
    return total


# ----------------------------------------------------------------- coverage


def lens_union_area(r, d):
    """Area of the union of two radius-r disks whose centres are d apart."""
    if d >= 2 * r:
        return 2 * math.pi * r * r
    overlap = 2 * r * r * math.acos(d / (2 * r)) - (d / 2) * math.sqrt(4 * r * r - d * d)
    return 2 * math.pi * r * r - overlap


def monte_carlo_union_area(centres, r, n=400_000, seed=0):
    rng = np.random.default_rng(seed)
    c = np.asarray(centres, dtype=float)
    lo, hi = c.min(axis=0) - r, c.max(axis=0) + r
    pts = rng.uniform(lo, hi, (n, 2))
    inside = np.zeros(n, dtype=bool)
    for x, y in c:
        inside |= (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2 <= r * r
    return inside.mean() * np.prod(hi - lo)


# ---------------------------------------------------------------------- IoU


def iou_by_hand(pred, gt, mask):
    """Plain loops over pixels; returns intersection, union."""
    inter = union = 0
    for p, g, m in zip(np.ravel(pred), np.ravel(gt), np.ravel(mask)):
        if not m:
            continue
        inter += bool(p) and bool(g)
        union += bool(p) or bool(g)
    return inter, union
