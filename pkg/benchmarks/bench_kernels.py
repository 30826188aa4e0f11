"""Compare the compiled kernels against the numpy fallback.

Times im2col and PReLU on their own, then a full conv layer
forward+backward at training size with each backend swapped in.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from decnn import _pykernels, kernels
from decnn.layers import Conv2D, PReLU
from decnn.tensor import Rng

try:
    from decnn import _ckernels
except ImportError:
    _ckernels = None


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def with_backend(impl, fn):
    saved = kernels.im2col, kernels.prelu_forward, kernels.prelu_backward
    kernels.im2col, kernels.prelu_forward, kernels.prelu_backward = (
        impl.im2col, impl.prelu_forward, impl.prelu_backward)
    try:
        return fn()
    finally:
        kernels.im2col, kernels.prelu_forward, kernels.prelu_backward = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args()

    r = Rng(0)
    n, c, s = args.batch, args.channels, args.size
    x = r.normal((n, c, s, s))
    g = r.normal((n, c, s, s))
    alpha = np.full(c, 0.25, np.float32)
    conv, act = Conv2D(c, c), PReLU(c)
    conv.he_init(r)

    def layer_step():
        z = conv.forward(x)
        act.forward(z)
        conv.backward(x, act.backward(z, g))

    cases = {
        "im2col": lambda impl: best(lambda: impl.im2col(x, 3), args.repeat),
        "prelu fwd": lambda impl: best(lambda: impl.prelu_forward(x, alpha), args.repeat),
        "prelu bwd": lambda impl: best(lambda: impl.prelu_backward(x, alpha, g), args.repeat),
        "conv+prelu fwd/bwd": lambda impl: with_backend(impl, lambda: best(layer_step, args.repeat)),
    }
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"input ({n}, {c}, {s}, {s}) float32; best of {args.repeat}; default backend: {kernels.BACKEND}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in backends) + ("     speedup" if _ckernels else ""))
    for label, run in cases.items():
        times = [run(impl) for _, impl in backends]
        row = f"{label:<20}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>11.2f}x"
        print(row)
    if _ckernels is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
