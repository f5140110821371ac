"""Time the compiled scan kernels against their pure-Python twins.

Usage: ``python benchmarks/bench_kernels.py [--paths 20000] [--steps 400] [--repeat 3]``
"""

import argparse
import timeit

import numpy as np

from bsdelab import _scan_py

try:
    from bsdelab import _scan
except ImportError:
    _scan = None


def _inputs(paths, steps, seed):
    rng = np.random.default_rng(seed)
    zabs = np.ascontiguousarray(rng.uniform(0.0, 0.5, size=(paths, steps)))
    znorm = np.ascontiguousarray(rng.uniform(0.0, 15.0, size=(paths, steps)))
    values = np.ascontiguousarray(np.cumsum(rng.uniform(0.0, 1.0, size=(paths, steps)), axis=1) / steps)
    labels = np.ascontiguousarray(rng.integers(0, 2, size=(paths, steps), dtype=np.uint8))
    start = rng.integers(0, steps // 2, size=paths).astype(np.int64)
    end = (start + rng.integers(1, steps // 2, size=paths)).astype(np.int64)
    return {
        "window_scan": (zabs, znorm, start, end, 0.1),
        "first_at_least": (values, 0.25, start, end),
        "run_segments": (labels, start, end),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"paths={args.paths} steps={args.steps} repeat={args.repeat} seed={args.seed}")
    if _scan is None:
        print("compiled extension not built; timing the Python backend only")
    print(f"{'kernel':<16}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}  agree")
    for name, call_args in _inputs(args.paths, args.steps, args.seed).items():
        py = getattr(_scan_py, name)
        t_py = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat))
        if _scan is None:
            print(f"{name:<16}{t_py:>12.4f}{'-':>12}{'-':>10}  -")
            continue
        cy = getattr(_scan, name)
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat))
        agree = _same(py(*call_args), cy(*call_args))
        print(f"{name:<16}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
