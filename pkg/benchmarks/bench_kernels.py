"""Time each hot kernel under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Reports the best of ``--repeat`` runs after one warm-up call, so numba
compile time is excluded. ``--scale`` multiplies every problem size.
"""
import argparse
import timeit

import numpy as np

from povmap import _accel, kernels


def cases(scale):
    rng = np.random.default_rng(0)

    n_pts = int(200_000 * scale)
    theta = np.sort(rng.uniform(0, 2 * np.pi, 64))
    ring = np.column_stack([np.cos(theta), np.sin(theta)]) * rng.uniform(0.6, 1.0, (64, 1))
    xs, ys = rng.uniform(-1, 1, n_pts), rng.uniform(-1, 1, n_pts)

    grid = rng.gamma(2.0, 3.0, size=(int(600 * scale ** 0.5), int(800 * scale ** 0.5)))
    cs = 15 / 3600
    m = int(20_000 * scale)
    lo_x = rng.uniform(0, grid.shape[1] * cs, m)
    lo_y = rng.uniform(0, grid.shape[0] * cs, m)
    bounds = np.column_stack([lo_x, lo_x + 0.0045, lo_y, lo_y + 0.0045])

    x = np.concatenate([rng.normal(mu, sd, int(100_000 * scale))
                        for mu, sd in ((0, 1), (50, 5), (200, 20))])
    gmm = ([0.3, 0.3, 0.4], [0.0, 50.0, 200.0], [1.0, 25.0, 400.0])

    def boxes(k):
        xy = rng.uniform(0, 4000, (k, 2))
        return np.hstack([xy, xy + rng.uniform(5, 80, (k, 2))])
    a, b = boxes(int(1500 * scale)), boxes(int(1500 * scale))

    return {
        f"points_in_ring ({n_pts} pts, 64 verts)":
            lambda be: kernels.points_in_ring(xs, ys, ring, backend=be),
        f"footprint_sums ({m} tiles, {grid.shape[0]}x{grid.shape[1]} raster)":
            lambda be: kernels.footprint_sums(grid, 0.0, 0.0, cs, bounds, backend=be),
        f"gmm_estep ({x.size} values, k=3)":
            lambda be: kernels.gmm_estep(x, *gmm, backend=be),
        f"iou_matrix ({len(a)}x{len(b)})":
            lambda be: kernels.iou_matrix(a, b, backend=be),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()

    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"{'kernel':<52}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(args.scale).items():
        times = []
        for be in backends:
            fn(be)  # warm-up, triggers compilation
            times.append(min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat)))
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else ""
        print(f"{name:<52}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
