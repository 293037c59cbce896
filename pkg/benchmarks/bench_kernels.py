"""Timing comparison of the numpy and numba kernel backends.

Runs every kernel in vizretrieve.kernels on training-shaped inputs, times
both implementations, and prints mean/std per call plus the speedup.  The
numba column reports "unavailable" when the import failed.  Outputs are
cross-checked before timing so a speedup never hides a disagreement.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--warmup N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vizretrieve.kernels import HAS_NUMBA, NUMBA_IMPL, NUMPY_IMPL, conv_out_size


def build_cases(rng: np.random.Generator) -> dict[str, tuple]:
    """Argument tuples per kernel, sized like a desk training step."""
    n, c, size, k, pad = 16, 8, 64, 3, 1
    hp = size + 2 * pad
    xp = rng.standard_normal((n, c, hp, wp := hp))
    oh = conv_out_size(size, k, 1, pad)
    cols = rng.standard_normal((n, c * k * k, oh * oh))

    pool_x = rng.standard_normal((16, 16, 32, 32))
    _, pool_arg = NUMPY_IMPL["pool_max"](pool_x, 2)
    pool_gout = rng.standard_normal((16, 16, 16, 16))

    seg_x = rng.standard_normal((2000, 64))
    seg = np.sort(rng.integers(0, 32, size=2000)).astype(np.int64)

    mag = rng.random((64, 64))
    bin0 = rng.integers(0, 9, size=(64, 64)).astype(np.int64)
    w0 = rng.random((64, 64))
    bin1 = (bin0 + 1) % 9
    w1 = 1.0 - w0

    return {
        "im2col": (xp, k, k, 1),
        "col2im": (cols, n, c, hp, wp, k, k, 1),
        "pool_max": (pool_x, 2),
        "pool_max_backward": (pool_gout, pool_arg, 2, 32, 32),
        "segment_sum": (seg_x, seg, 32),
        "hog_accumulate": (mag, bin0, w0, bin1, w1, 8, 9),
    }


def check_agreement(name: str, args: tuple) -> None:
    a = NUMPY_IMPL[name](*args)
    b = NUMBA_IMPL[name](*args)
    pairs = zip(a, b) if isinstance(a, tuple) else [(a, b)]
    for x, y in pairs:
        gap = float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float))))
        if gap > 1e-12:
            raise SystemExit(f"{name}: backends disagree by {gap:.3e}")


def time_call(fn, args: tuple, repeat: int, warmup: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn(*args)
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        samples.append((time.perf_counter() - t0) * 1e3)
    arr = np.array(samples)
    return float(arr.mean()), float(arr.std())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--warmup", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    cases = build_cases(rng)

    header = f"{'kernel':<20} {'numpy ms':>16} {'numba ms':>16} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call_args in cases.items():
        np_mean, np_std = time_call(
            NUMPY_IMPL[name], call_args, args.repeat, args.warmup
        )
        if HAS_NUMBA:
            check_agreement(name, call_args)
            nb_mean, nb_std = time_call(
                NUMBA_IMPL[name], call_args, args.repeat, args.warmup
            )
            ratio = np_mean / nb_mean if nb_mean > 0 else float("inf")
            print(
                f"{name:<20} {np_mean:>9.3f}±{np_std:<6.3f}"
                f" {nb_mean:>9.3f}±{nb_std:<6.3f} {ratio:>8.2f}x"
            )
        else:
            print(f"{name:<20} {np_mean:>9.3f}±{np_std:<6.3f} {'unavailable':>16}")


if __name__ == "__main__":
    main()
