"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints the median time per call for each kernel and backend, and the speedup.
"""

import argparse
import timeit

import numpy as np

from prunelab import _kernels_py

try:
    from prunelab import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    x = rng.standard_normal((64, 8, 28, 28)).astype(np.float32)
    cols = _kernels_py.im2col(x, 3, 3, 1, 1)
    p = rng.standard_normal((64, 16, 28, 28)).astype(np.float32)
    out, arg = _kernels_py.maxpool_forward(p, 2, 2)
    g = np.ones_like(out)
    return {
        "im2col 64x8x28x28 k3": lambda m: m.im2col(x, 3, 3, 1, 1),
        "col2im 64x8x28x28 k3": lambda m: m.col2im(cols, x.shape, 3, 3, 1, 1),
        "maxpool fwd 64x16x28x28": lambda m: m.maxpool_forward(p, 2, 2),
        "maxpool bwd 64x16x28x28": lambda m: m.maxpool_backward(g, arg, p.shape),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("compiled", _kernels)] if _kernels else [])
    print(f"{'kernel':26s}" + "".join(f"{name:>14s}" for name, _ in backends) + "   speedup")
    for label, fn in cases(np.random.default_rng(0)).items():
        times = []
        for _, mod in backends:
            fn(mod)  # warm-up
            t = timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)
            times.append(float(np.median(t)))
        cells = "".join(f"{1e3 * t:11.2f} ms" for t in times)
        speed = f"{times[0] / times[1]:8.1f}x" if len(times) == 2 else "       -"
        print(f"{label:26s}{cells}  {speed}")
    if _kernels is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
