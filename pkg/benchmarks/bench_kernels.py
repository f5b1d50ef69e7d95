"""Throughput comparison of the compiled and pure-python pixel kernels.

Both backends are imported directly (bypassing the env-var selection), run
on identical inputs, and verified to agree before timing.  Run from the
repository root:

    python3 benchmarks/bench_kernels.py [--size 512] [--repeats 5]
"""

import argparse
import time

import numpy as np

from mitoviz._kernels import _pykernels

try:
    from mitoviz._kernels import _ckernels
except ImportError:
    _ckernels = None


def field(size: int, seed: int = 0) -> np.ndarray:
    """Smooth noisy intensity field with tube-like bright structures."""
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.random((size, size), dtype=np.float32)
    for _ in range(3):   # crude separable blur widens the structures
        v = (v + np.roll(v, 1, 0) + np.roll(v, -1, 0)
             + np.roll(v, 1, 1) + np.roll(v, -1, 1)) / 5.0
    v -= v.min()
    v /= v.max()
    return np.ascontiguousarray(v, dtype=np.float32)


def cases(size: int):
    v = field(size)
    mask = np.ascontiguousarray(v >= 0.55, dtype=np.uint8)
    ys, xs = np.nonzero(mask)
    pick = np.linspace(0, len(ys) - 1, 32).astype(np.int64)
    sy, sx = int(ys[len(ys) // 2]), int(xs[len(ys) // 2])
    return [
        ("flood_fill", lambda k: k.flood_fill(v, sy, sx, 0.55, True)),
        ("flood_fill_multi", lambda k: k.flood_fill_multi(
            v, np.ascontiguousarray(ys[pick]), np.ascontiguousarray(xs[pick]),
            0.55, True)),
        ("label4", lambda k: k.label4(mask)),
        ("thin", lambda k: k.thin(mask)),
        ("disc_mask", lambda k: k.disc_mask(
            np.ascontiguousarray(ys[pick]), np.ascontiguousarray(xs[pick]),
            size, size, 12.5)),
    ]


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512,
                    help="square field edge in pixels (default 512)")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats, best is reported (default 5)")
    args = ap.parse_args()

    if _ckernels is None:
        print("compiled backend not built; showing pure-python only")
    print(f"{'kernel':<18} {'pure (ms)':>10} {'compiled (ms)':>14} "
          f"{'speedup':>8}")
    for name, call in cases(args.size):
        out_py = call(_pykernels)
        t_py = best_of(lambda: call(_pykernels), args.repeats)
        if _ckernels is None:
            print(f"{name:<18} {t_py * 1e3:>10.2f} {'-':>14} {'-':>8}")
            continue
        out_c = call(_ckernels)
        ref = out_py[0] if isinstance(out_py, tuple) else out_py
        got = out_c[0] if isinstance(out_c, tuple) else out_c
        if not np.array_equal(np.asarray(ref), np.asarray(got)):
            raise SystemExit(f"{name}: backends disagree, benchmark void")
        t_c = best_of(lambda: call(_ckernels), args.repeats)
        print(f"{name:<18} {t_py * 1e3:>10.2f} {t_c * 1e3:>14.2f} "
              f"{t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
