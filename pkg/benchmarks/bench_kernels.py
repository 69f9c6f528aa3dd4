"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--size S]

Prints one line per kernel with the median time per call for each backend.
"""
import argparse
import timeit

import numpy as np

from shadowguard import _pykernels
from shadowguard.profiles import _weight_groups, gaussian_window, window_sigma

try:
    from shadowguard import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(size, rng):
    img = rng.uniform(0, 255, (size, size))
    mag = np.round(rng.uniform(0, 300, (size, size)))
    direction = rng.integers(0, 4, (size, size)).astype(np.int8)
    groups = _weight_groups(3, window_sigma(3))
    poly = rng.uniform(-4, size + 4, (6, 2))
    return {
        "correlate_replicate 5x5": lambda m: m.correlate_replicate(img, gaussian_window(5, 1.1)),
        "threshold_margin 3x3": lambda m: m.threshold_margin(img, *groups),
        "nonmax_suppress": lambda m: m.nonmax_suppress(mag, direction),
        "hysteresis": lambda m: m.hysteresis(mag, np.ones(mag.shape, np.uint8), 80.0, 200.0),
        "rasterize_evenodd 6 vertices": lambda m: m.rasterize_evenodd(poly, size, size),
    }


def median_time(fn, repeat):
    runs = timeit.repeat(fn, number=1, repeat=repeat)
    return float(np.median(runs))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--size", type=int, default=32)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':32s}" + "".join(f"{name:>12s}" for name, _ in backends) + ("     speedup" if _ckernels else ""))
    for label, call in cases(args.size, rng).items():
        times = [median_time(lambda m=m: call(m), args.repeat) for _, m in backends]
        line = f"{label:32s}" + "".join(f"{t * 1e6:10.1f}us" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
