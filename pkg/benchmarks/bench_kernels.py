"""Compare the compiled and numpy identification kernels.

Runs the pool argmin scan (queries x pool x components) on both backends,
checks they agree, and prints the timings as JSON.

    python benchmarks/bench_kernels.py --pool 2048 --queries 200 --dim 1764
"""
import argparse
import json
import time

import numpy as np

from sfwmark._kernels import BACKEND, _fallback

try:
    from sfwmark._kernels import _native
except ImportError:
    _native = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pool", type=int, default=2048)
    p.add_argument("--queries", type=int, default=200)
    # 1764 = HSQR components at cell_px=2; a radius-14 ring uses 664 (HSTR) or 1330
    p.add_argument("--dim", type=int, default=1764)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    refs = rng.normal(scale=45.0, size=(args.pool, args.dim))
    queries = rng.normal(scale=45.0, size=(args.queries, args.dim))

    report = {"active_backend": BACKEND, "pool": args.pool, "queries": args.queries, "dim": args.dim}
    t_np, (idx_np, d_np) = best_of(lambda: _fallback.l1_argmin(queries, refs), args.repeats)
    report["numpy_s"] = t_np
    if _native is not None:
        t_cy, (idx_cy, d_cy) = best_of(lambda: _native.l1_argmin(queries, refs), args.repeats)
        report["cython_s"] = t_cy
        report["speedup"] = t_np / t_cy
        report["agree"] = bool(np.array_equal(idx_np, np.asarray(idx_cy))
                               and np.allclose(d_np, np.asarray(d_cy), rtol=1e-12))
    else:
        report["cython_s"] = None
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
