"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--size 150] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from meshreg import _kernels_py

try:
    from meshreg import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _inputs(size, rng):
    mask = (rng.random((size, size)) < 0.01).astype(np.uint8)
    img = rng.random((size, size))
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    xs = np.ascontiguousarray(xs + rng.normal(0, 3, xs.shape))
    ys = np.ascontiguousarray(ys + rng.normal(0, 3, ys.shape))
    return mask, img, xs, ys


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=150)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mask, img, xs, ys = _inputs(args.size, np.random.default_rng(0))
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    results = {}
    print(f"{'kernel':<16}{'backend':<9}{'best ms':>10}")
    for kernel, call in (
        ("edt_squared", lambda m: m.edt_squared(mask)),
        ("bilinear_sample", lambda m: m.bilinear_sample(img, xs, ys)),
    ):
        for name, mod in backends:
            best = min(timeit.repeat(lambda: call(mod), number=1, repeat=args.repeat))
            results[(kernel, name)] = best
            print(f"{kernel:<16}{name:<9}{best * 1e3:>10.3f}")
        if _kernels_c:
            ref, fast = call(_kernels_py), call(_kernels_c)
            speed = results[(kernel, "python")] / results[(kernel, "cython")]
            print(f"{'':<16}speedup {speed:.1f}x, max abs diff {float(np.max(np.abs(ref - fast))):.3g}")
    if not _kernels_c:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
