"""Compare the numba and numpy backends of the hot kernels.

    python3 benchmarks/bench_kernels.py [--N 128] [--M 4096] [--repeat 20] [--end-to-end]

Each kernel is called once on both backends before timing (that call also
triggers numba compilation), then timed with ``timeit``.  The table shows the
best time per call, the speedup, and the largest difference between backends.
``--end-to-end`` also times a short preset run in two subprocesses, one with
``KAWAHARA_JIT=0``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from kawahara_memory import _kernels


def _inputs(N, M, seed=0):
    rng = np.random.default_rng(seed)
    eta = rng.standard_normal((N, M))
    s = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 1.5, M - 1))])
    shifted = np.maximum(s - 0.7, 0.0)
    lo = np.clip(np.searchsorted(s, shifted, side="right") - 1, 0, M - 2)
    frac = np.clip((shifted - s[lo]) / (s[lo + 1] - s[lo]), 0.0, 1.0)
    src = rng.uniform(0.0, 1.0, M)
    w = rng.uniform(0.0, 1.0, M)
    u = rng.standard_normal(N)
    return eta, lo.astype(np.int64), frac, src, w, u, 1.0 / (N + 1)


def _cases(N, M):
    eta, lo, frac, src, w, u, h = _inputs(N, M)
    return {
        "advance_history": lambda jit: _kernels.advance_history_kernel(eta, lo, frac, src, u, jit=jit),
        "weighted_sq_norm k=0": lambda jit: _kernels.weighted_sq_norm(eta, w, 0, h, jit=jit),
        "weighted_sq_norm k=1": lambda jit: _kernels.weighted_sq_norm(eta, w, 1, h, jit=jit),
        "weighted_sq_norm k=2": lambda jit: _kernels.weighted_sq_norm(eta, w, 2, h, jit=jit),
        "skew_advection": lambda jit: _kernels.skew_advection(u, h, jit=jit),
    }


def bench_kernels(N, M, repeat):
    rows = []
    for name, fn in _cases(N, M).items():
        ref = np.asarray(fn(False))
        diff = float("nan")
        t_nb = float("nan")
        if _kernels.HAVE_NUMBA:
            got = np.asarray(fn(True))
            diff = float(np.max(np.abs(got - ref)) / max(np.max(np.abs(ref)), 1e-300))
            t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=repeat))
        t_np = min(timeit.repeat(lambda: fn(False), number=1, repeat=repeat))
        rows.append((name, t_np, t_nb, diff))
    return rows


def bench_end_to_end(preset, T):
    code = (
        "import time; from kawahara_memory.config import get_preset; "
        "from kawahara_memory.solver import run; "
        f"c = get_preset({preset!r}).config(**{{'sim.T': {T!r}}}); run(c); "
        "t = time.perf_counter(); run(c); print(time.perf_counter() - t)"
    )
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, KAWAHARA_JIT=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        out[flag] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=128, help="spatial nodes")
    p.add_argument("--M", type=int, default=4096, help="history nodes")
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--end-to-end", action="store_true")
    p.add_argument("--preset", default="stretched")
    p.add_argument("--T", type=float, default=2.0)
    args = p.parse_args(argv)

    print(f"numba available: {_kernels.HAVE_NUMBA}  (default backend: "
          f"{'numba' if _kernels.USE_JIT else 'numpy'})")
    print(f"N = {args.N}, M = {args.M}, best of {args.repeat}")
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'rel diff':>12}")
    for name, t_np, t_nb, diff in bench_kernels(args.N, args.M, args.repeat):
        print(f"{name:<24}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.2f}{diff:>12.2e}")
    if args.end_to_end:
        times = bench_end_to_end(args.preset, args.T)
        print(f"end-to-end {args.preset} preset, T = {args.T}: "
              f"numba {times['1']:.2f} s, numpy {times['0']:.2f} s, "
              f"speedup {times['0'] / times['1']:.2f}")


if __name__ == "__main__":
    main()
