"""Time the direct quantization kernel, numba against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 256 512 1024 2048] [--repeat 3]

Both backends run in this process; the numba path is warmed up once so JIT
compilation is not counted.  The fallback that GSLAB_DISABLE_NUMBA=1 selects
is the same ``numpy`` backend timed here.
"""

import argparse
import time

import numpy as np

from gslab import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024, 2048])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    if "numba" in backends:
        n = 16
        _kernels.quantize_direct(np.ones((n, n), complex), np.ones(n, complex),
                                 _kernels.twiddles(n), backend="numba")
    else:
        print("numba unavailable, timing the numpy backend only")

    print(f"{'N':>6} " + " ".join(f"{b:>10}" for b in backends) + "   speedup  max|diff|")
    for n in args.sizes:
        p = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        tw = _kernels.twiddles(n)
        res = {b: _kernels.quantize_direct(p, c, tw, backend=b) for b in backends}
        secs = {b: best_of(lambda b=b: _kernels.quantize_direct(p, c, tw, backend=b), args.repeat)
                for b in backends}
        row = f"{n:>6} " + " ".join(f"{secs[b]:>9.4f}s" for b in backends)
        if len(backends) == 2:
            diff = np.max(np.abs(res["numba"] - res["numpy"]))
            row += f"   {secs['numpy'] / secs['numba']:7.1f}x  {diff:.1e}"
        print(row)


if __name__ == "__main__":
    main()
