"""Micro-benchmark: jit-compiled kernels against the numpy fallback.

Both backends produce bit-identical outputs (see tests/test_kernels.py);
this script measures what the jit path buys. Run directly:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from hbq import _kernels as K
from hbq.config import nearest_rank, percentile_levels


def _ranks(nvals, count=40):
    return np.array(
        [nearest_rank(lv, nvals) for lv in percentile_levels(count)],
        dtype=np.int64,
    )


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_plan_lines(rows, width, repeats):
    rng = np.random.default_rng(0)
    lines = rng.normal(size=(rows, width)).astype(np.float32)
    split = width // 2
    r0, r1 = _ranks(split), _ranks(width - split)

    def nb():
        K.plan_lines_nb(lines, split, r0, r1, True)

    def np_():
        K.plan_lines_np(lines, split, r0, r1, True)

    nb()  # jit warmup
    return best_of(nb, repeats), best_of(np_, repeats)


def bench_haar(rows, width, repeats):
    rng = np.random.default_rng(1)
    m = rng.normal(size=(rows, width)).astype(np.float32)

    def nb():
        K.haar_inv_rows_nb(K.haar_fwd_rows_nb(m))

    def np_():
        K.haar_inv_rows_np(K.haar_fwd_rows_np(m))

    nb()
    return best_of(nb, repeats), best_of(np_, repeats)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rows_fmt = "{:<28} {:>12} {:>12} {:>9}"
    print(rows_fmt.format("kernel", "jit", "numpy", "speedup"))
    cases = [
        ("plan_lines 64x128", bench_plan_lines, (64, 128)),
        ("plan_lines 256x128", bench_plan_lines, (256, 128)),
        ("plan_lines 64x512", bench_plan_lines, (64, 512)),
        ("haar fwd+inv 64x4096", bench_haar, (64, 4096)),
        ("haar fwd+inv 1024x1024", bench_haar, (1024, 1024)),
    ]
    for name, fn, (rows, width) in cases:
        t_nb, t_np = fn(rows, width, args.repeats)
        print(
            rows_fmt.format(
                name,
                f"{t_nb * 1e3:.3f} ms",
                f"{t_np * 1e3:.3f} ms",
                f"{t_np / t_nb:.1f}x",
            )
        )


if __name__ == "__main__":
    main()
