"""Time the numba and numpy backends of the z-buffer and mixture kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pvgen import _kernels


def _time(fn, repeat: int) -> float:
    fn()  # warm-up (triggers JIT compilation)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def zbuffer_case(n_points: int, size: int, radius: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    px = rng.integers(-2, size + 2, n_points)
    py = rng.integers(-2, size + 2, n_points)
    z = rng.uniform(0.5, 2.0, n_points)
    offsets = _kernels.disc_offsets(radius)
    return lambda: _kernels.zbuffer(px, py, z, size, size, offsets)


def gmm_case(k: int, d: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    means = rng.uniform(0, 1, (k, d))
    var = np.full((k, d), 0.01**2)
    logw = np.log(np.full(k, 1.0 / k))
    x = rng.standard_normal(d)
    return lambda: _kernels.gmm_posterior(x, 0.7, means, var, logw)


CASES = {
    "zbuffer 16x16, 512 pts": lambda: zbuffer_case(512, 16, 0),
    "zbuffer 128x128, 32k pts, r=1": lambda: zbuffer_case(32_768, 128, 1),
    "gmm K=3, D=43008 (56x16x16x3)": lambda: gmm_case(3, 56 * 16 * 16 * 3),
    "gmm K=4, D=768": lambda: gmm_case(4, 768),
}


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    backends = _kernels.available_backends()
    print(f"{'case':<34}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, make in CASES.items():
        times = {}
        for b in backends:
            prev = _kernels.set_backend(b)
            try:
                times[b] = _time(make(), args.repeat)
            finally:
                _kernels.set_backend(prev)
        row = f"{name:<34}" + "".join(f"{times[b] * 1e3:>10.3f}ms" for b in backends)
        if "numba" in times:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
