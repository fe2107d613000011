"""Time the numba kernels against the numpy fallbacks on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from refalign.features import BRIEF_PATTERN
from refalign.kernels import _numba, _numpy


def cases(rng):
    img = rng.integers(0, 256, (360, 640), dtype=np.uint8)
    ys, xs = np.mgrid[0:360, 0:640].astype(np.float64)
    mx = xs * 0.98 + 3.7
    my = ys * 1.01 - 2.2
    kx = rng.integers(20, 620, 1000)
    ky = rng.integers(20, 340, 1000)
    angles = rng.uniform(0, 2 * np.pi, 1000)
    desc_a = rng.integers(0, 256, (1000, 32), dtype=np.uint8)
    desc_b = rng.integers(0, 256, (1000, 32), dtype=np.uint8)
    h = np.array([[1.01, 0.02, 3.0], [-0.01, 0.99, 2.0], [1e-5, 2e-5, 1.0]])
    src = rng.uniform(0, 640, (1000, 2))
    dst = rng.uniform(0, 640, (1000, 2))
    score = _numpy.fast_score(img)
    return {
        "bilinear_sample 640x360": lambda m: m.bilinear_sample(img.astype(np.float64), mx, my),
        "fast_score 640x360": lambda m: m.fast_score(img),
        "nonmax_suppression 640x360": lambda m: m.nonmax_suppression(score),
        "ic_angles x1000": lambda m: m.ic_angles(img, kx, ky, 15),
        "steered_brief x1000": lambda m: m.steered_brief(img, kx, ky, angles, BRIEF_PATTERN),
        "hamming_matrix 1000x1000": lambda m: m.hamming_matrix(desc_a, desc_b),
        "transfer_errors x1000": lambda m: m.transfer_errors(h, src, dst),
        "grid_occupancy x1000": lambda m: m.grid_occupancy(dst, 640, 480, 4),
    }


def best_time(fn, repeat):
    fn()  # warm-up (JIT compile for numba)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, run in cases(rng).items():
        t_np = best_time(lambda: run(_numpy), args.repeat)
        t_nb = best_time(lambda: run(_numba), args.repeat)
        print(f"{name:<28}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
