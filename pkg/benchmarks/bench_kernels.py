"""Compare the compiled data-movement core against the numpy fallback.

Times im2col / col2im_add in isolation and a full dilated-conv
forward+backward pass with each backend swapped in.  Run:

    python3 benchmarks/bench_kernels.py [--size 128] [--repeat 5]
"""

import argparse
import time

import numpy as np

from labnet import kernels
from labnet._core import kernels_np

try:
    from labnet._core import kernels_cy
except ImportError:
    kernels_cy = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_backend(impl, size, repeat, rng):
    n, cin, cout, k, dil = 2, 32, 32, 3, 8
    x = rng.standard_normal((n, cin, size, size)).astype(np.float32)
    w = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
    b = np.zeros(cout, dtype=np.float32)
    pad = dil * (k - 1) // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = impl.im2col(padded, k, k, dil, size, size)
    g = rng.standard_normal(cols.shape).astype(np.float32)

    out = {}
    out["im2col"] = best_of(
        lambda: impl.im2col(padded, k, k, dil, size, size), repeat)
    hp, wp = padded.shape[2], padded.shape[3]
    out["col2im_add"] = best_of(
        lambda: impl.col2im_add(g, k, k, dil, hp, wp, size, size), repeat)

    # full conv passes, with the chosen impl spliced into the driver
    saved = kernels.im2col, kernels.col2im_add
    kernels.im2col, kernels.col2im_add = impl.im2col, impl.col2im_add
    try:
        y = None

        def fwd():
            nonlocal y
            y = kernels.conv2d_forward(x, w, b, dil)

        fwd()
        gy = rng.standard_normal(y.shape).astype(np.float32)
        out["conv_forward"] = best_of(fwd, repeat)
        out["conv_backward"] = best_of(
            lambda: kernels.conv2d_backward(x, w, gy, dil), repeat)
    finally:
        kernels.im2col, kernels.col2im_add = saved
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    results = {"numpy": bench_backend(kernels_np, args.size, args.repeat, rng)}
    if kernels_cy is not None:
        results["cython"] = bench_backend(kernels_cy, args.size, args.repeat,
                                          rng)
    else:
        print("compiled core not available; showing numpy fallback only")

    names = list(results["numpy"])
    cols = list(results)
    head = f"{'kernel':<16}" + "".join(f"{c:>12}" for c in cols)
    if len(cols) == 2:
        head += f"{'speedup':>10}"
    print(f"active backend: {kernels.BACKEND}  "
          f"(size {args.size}, 32ch 3x3 dilation 8, best of {args.repeat})")
    print(head)
    for name in names:
        row = f"{name:<16}"
        for c in cols:
            row += f"{results[c][name] * 1e3:>10.2f}ms"
        if len(cols) == 2:
            ratio = results["numpy"][name] / results["cython"][name]
            row += f"{ratio:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
