"""Hot raster kernels, each with a numba and a pure-numpy implementation.

The public functions dispatch on :data:`mia._accel.USE_NUMBA`; the ``*_nb``
and ``*_np`` variants are exported for cross-checking and benchmarks.
"""
import math

import numpy as np

from mia._accel import USE_NUMBA, njit

# --------------------------------------------------------------- polygon fill
#
# ``edges`` is an (E, 4) float64 array of (x0, y0, x1, y1) in pixel-centre
# coordinates (pixel (i, j) has centre x=j, y=i). All rings of one polygon
# (shell and holes) go in together; crossing parity handles the holes. A pixel
# whose centre lies on any edge is inside.


@njit(cache=True)
def _fill_polygon_nb(out, edges):
    n_rows, n_cols = out.shape
    xmin = np.inf
    xmax = -np.inf
    ymin = np.inf
    ymax = -np.inf
    for k in range(edges.shape[0]):
        xmin = min(xmin, edges[k, 0], edges[k, 2])
        xmax = max(xmax, edges[k, 0], edges[k, 2])
        ymin = min(ymin, edges[k, 1], edges[k, 3])
        ymax = max(ymax, edges[k, 1], edges[k, 3])
    i0 = max(int(math.ceil(ymin)), 0)
    i1 = min(int(math.floor(ymax)), n_rows - 1)
    j0 = max(int(math.ceil(xmin)), 0)
    j1 = min(int(math.floor(xmax)), n_cols - 1)
    for i in range(i0, i1 + 1):
        py = float(i)
        for j in range(j0, j1 + 1):
            if out[i, j]:
                continue
            px = float(j)
            crossings = 0
            on_edge = False
            for k in range(edges.shape[0]):
                ax = edges[k, 0]
                ay = edges[k, 1]
                bx = edges[k, 2]
                by = edges[k, 3]
                side = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
                if (side == 0.0 and min(ax, bx) <= px <= max(ax, bx)
                        and min(ay, by) <= py <= max(ay, by)):
                    on_edge = True
                    break
                if ay <= py < by:
                    if side > 0.0:
                        crossings += 1
                elif by <= py < ay:
                    if side < 0.0:
                        crossings += 1
            if on_edge or crossings % 2 == 1:
                out[i, j] = True


def _fill_polygon_np(out, edges):
    if len(edges) == 0:
        return
    n_rows, n_cols = out.shape
    xs = edges[:, [0, 2]]
    ys = edges[:, [1, 3]]
    i0 = max(int(math.ceil(ys.min())), 0)
    i1 = min(int(math.floor(ys.max())), n_rows - 1)
    j0 = max(int(math.ceil(xs.min())), 0)
    j1 = min(int(math.floor(xs.max())), n_cols - 1)
    if i0 > i1 or j0 > j1:
        return
    py, px = np.mgrid[i0:i1 + 1, j0:j1 + 1].astype(float)
    parity = np.zeros(py.shape, dtype=bool)
    on_edge = np.zeros(py.shape, dtype=bool)
    for ax, ay, bx, by in edges:
        side = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
        on_edge |= ((side == 0.0) & (px >= min(ax, bx)) & (px <= max(ax, bx))
                    & (py >= min(ay, by)) & (py <= max(ay, by)))
        up = (ay <= py) & (py < by) & (side > 0.0)
        down = (by <= py) & (py < ay) & (side < 0.0)
        parity ^= up | down
    out[i0:i1 + 1, j0:j1 + 1] |= parity | on_edge


def fill_polygon(out: np.ndarray, edges: np.ndarray) -> None:
    """OR the closed polygon described by ``edges`` into boolean ``out``."""
    edges = np.ascontiguousarray(edges, dtype=np.float64).reshape(-1, 4)
    if USE_NUMBA:
        _fill_polygon_nb(out, edges)
    else:
        _fill_polygon_np(out, edges)


# ------------------------------------------------------------ supercover rays
#
# For every target cell, count the occupied cells on the supercover of the
# segment from the ego cell centre to the target centre, the target itself
# excluded. When the segment passes exactly through a lattice corner both
# side cells are touched and counted.


@njit(cache=True)
def _ray_counts_nb(occupied, ego_r, ego_c):
    n_rows, n_cols = occupied.shape
    counts = np.zeros((n_rows, n_cols), dtype=np.int32)
    for r in range(n_rows):
        for c in range(n_cols):
            dy = r - ego_r
            dx = c - ego_c
            ny = abs(dy)
            nx = abs(dx)
            sy = 1 if dy > 0 else -1
            sx = 1 if dx > 0 else -1
            y = ego_r
            x = ego_c
            ix = 0
            iy = 0
            total = 0
            if nx + ny > 0 and occupied[y, x]:
                total += 1
            while ix < nx or iy < ny:
                decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx
                if decision == 0:
                    if occupied[y, x + sx]:
                        total += 1
                    if occupied[y + sy, x]:
                        total += 1
                    x += sx
                    y += sy
                    ix += 1
                    iy += 1
                elif decision < 0:
                    x += sx
                    ix += 1
                else:
                    y += sy
                    iy += 1
                if (ix < nx or iy < ny) and occupied[y, x]:
                    total += 1
            counts[r, c] = total
    return counts


def _ray_counts_np(occupied, ego_r, ego_c):
    n_rows, n_cols = occupied.shape
    rr, cc = np.mgrid[0:n_rows, 0:n_cols]
    dy = (rr - ego_r).ravel()
    dx = (cc - ego_c).ravel()
    ny, nx = np.abs(dy), np.abs(dx)
    sy = np.where(dy > 0, 1, -1)
    sx = np.where(dx > 0, 1, -1)
    y = np.full(dy.shape, ego_r)
    x = np.full(dx.shape, ego_c)
    ix = np.zeros_like(nx)
    iy = np.zeros_like(ny)
    total = np.where((nx + ny > 0) & occupied[ego_r, ego_c], 1, 0).astype(np.int32)
    active = np.flatnonzero((ix < nx) | (iy < ny))
    while active.size:
        a = active
        decision = (1 + 2 * ix[a]) * ny[a] - (1 + 2 * iy[a]) * nx[a]
        corner = decision == 0
        if corner.any():
            ca = a[corner]
            total[ca] += occupied[y[ca], x[ca] + sx[ca]]
            total[ca] += occupied[y[ca] + sy[ca], x[ca]]
        step_x = decision <= 0
        step_y = decision >= 0
        x[a] += np.where(step_x, sx[a], 0)
        ix[a] += step_x
        y[a] += np.where(step_y, sy[a], 0)
        iy[a] += step_y
        still = (ix[a] < nx[a]) | (iy[a] < ny[a])
        sa = a[still]
        total[sa] += occupied[y[sa], x[sa]]
        active = sa
    return total.reshape(n_rows, n_cols)


def ray_counts(occupied: np.ndarray, ego_r: int, ego_c: int) -> np.ndarray:
    occupied = np.ascontiguousarray(occupied, dtype=np.bool_)
    if USE_NUMBA:
        return _ray_counts_nb(occupied, int(ego_r), int(ego_c))
    return _ray_counts_np(occupied, int(ego_r), int(ego_c))


# --------------------------------------------------------- disk-union coverage
#
# Cells of a regular grid whose centres lie within ``radius`` of any point are
# counted row by row as a union of integer column intervals.


@njit(cache=True)
def _disk_union_cells_nb(xs, ys, radius, x0, y0, pitch, n_rows):
    order = np.argsort(ys)
    xs = xs[order]
    ys = ys[order]
    n = xs.shape[0]
    starts = np.empty(n, dtype=np.int64)
    ends = np.empty(n, dtype=np.int64)
    lo = 0
    total = 0
    for i in range(n_rows):
        yc = y0 + (i + 0.5) * pitch
        while lo < n and ys[lo] < yc - radius:
            lo += 1
        m = 0
        k = lo
        while k < n and ys[k] <= yc + radius:
            h2 = radius * radius - (yc - ys[k]) ** 2
            if h2 >= 0.0:
                h = math.sqrt(h2)
                s = int(math.ceil((xs[k] - h - x0) / pitch - 0.5))
                e = int(math.floor((xs[k] + h - x0) / pitch - 0.5))
                if e >= s:
                    starts[m] = s
                    ends[m] = e
                    m += 1
            k += 1
        if m == 0:
            continue
        idx = np.argsort(starts[:m])
        cur_s = starts[idx[0]]
        cur_e = ends[idx[0]]
        for q in range(1, m):
            s = starts[idx[q]]
            e = ends[idx[q]]
            if s > cur_e + 1:
                total += cur_e - cur_s + 1
                cur_s = s
                cur_e = e
            elif e > cur_e:
                cur_e = e
        total += cur_e - cur_s + 1
    return total


def _disk_union_cells_np(xs, ys, radius, x0, y0, pitch, n_rows):
    order = np.argsort(ys, kind="stable")
    xs, ys = xs[order], ys[order]
    total = 0
    for i in range(n_rows):
        yc = y0 + (i + 0.5) * pitch
        a = np.searchsorted(ys, yc - radius, side="left")
        b = np.searchsorted(ys, yc + radius, side="right")
        if a == b:
            continue
        h2 = radius * radius - (yc - ys[a:b]) ** 2
        keep = h2 >= 0.0
        h = np.sqrt(h2[keep])
        px = xs[a:b][keep]
        s = np.ceil((px - h - x0) / pitch - 0.5).astype(np.int64)
        e = np.floor((px + h - x0) / pitch - 0.5).astype(np.int64)
        ok = e >= s
        s, e = s[ok], e[ok]
        if s.size == 0:
            continue
        idx = np.argsort(s, kind="stable")
        s, e = s[idx], e[idx]
        reach = np.maximum.accumulate(e)
        prev = np.concatenate(([s[0] - 1], reach[:-1]))
        total += int(np.maximum(0, e - np.maximum(s, prev + 1) + 1).sum())
    return total


def disk_union_cells(xs, ys, radius, x0, y0, pitch, n_rows) -> int:
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    args = (xs, ys, float(radius), float(x0), float(y0), float(pitch), int(n_rows))
    if USE_NUMBA:
        return int(_disk_union_cells_nb(*args))
    return int(_disk_union_cells_np(*args))
