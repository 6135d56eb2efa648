"""Time the numba and numpy backends of the raster kernels side by side.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import timeit

import numpy as np

from mia import kernels


def polygon_edges(n_vertices=64, radius=150.0, centre=183.0):
    ang = np.linspace(0, 2 * math.pi, n_vertices, endpoint=False)
    rad = radius * (0.7 + 0.3 * np.cos(5 * ang))
    pts = np.column_stack([centre + rad * np.cos(ang), centre + rad * np.sin(ang)])
    return np.hstack([pts, np.roll(pts, -1, axis=0)])


def cases(rng):
    edges = polygon_edges()
    grid = np.zeros((224, 224), dtype=bool)
    for _ in range(40):
        r, c = rng.integers(0, 224, 2)
        h, w = rng.integers(2, 20, 2)
        grid[r:r + h, c:c + w] = True
    grid[112, 112] = False
    pts = rng.uniform(0, 2000, (20_000, 2))
    disk_args = (pts[:, 0].copy(), pts[:, 1].copy(), 20.0, -20.0, -20.0, 0.5, 4080)

    def fill(fn):
        out = np.zeros((367, 367), dtype=bool)
        fn(out, edges)
        return out

    return {
        "fill_polygon 367x367": (lambda: fill(kernels._fill_polygon_nb),
                                 lambda: fill(kernels._fill_polygon_np)),
        "ray_counts 224x224": (lambda: kernels._ray_counts_nb(grid, 112, 112),
                               lambda: kernels._ray_counts_np(grid, 112, 112)),
        "disk_union_cells 20k pts": (lambda: kernels._disk_union_cells_nb(*disk_args),
                                     lambda: kernels._disk_union_cells_np(*disk_args)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, (nb, np_) in cases(rng).items():
        a, b = nb(), np_()
        assert np.array_equal(a, b), name
        t_nb = min(timeit.repeat(nb, number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(np_, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26} {t_nb:>10.2f} {t_np:>10.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
