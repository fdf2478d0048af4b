#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs the four hot kernels (conv forward/weight-grad/input-grad, max
pooling) on desk- and paper-scale shapes and prints the per-call times
and speedups.  Usage: python benchmarks/bench_kernels.py [repeats]
"""

import sys
import time

import numpy as np

from lofarline import _kernels_py as py

try:
    from lofarline import _native as native
except ImportError:
    native = None

SHAPES = {
    # name: (cin, h, w, cout, k, stride, pad)
    "desk conv1 64x64": (1, 64, 64, 8, 5, 2, 2),
    "desk conv2 16x16": (8, 16, 16, 16, 3, 1, 1),
    "mid conv 32x32": (16, 32, 32, 32, 3, 1, 1),
}


def timeit(fn, repeats):
    fn()   # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench(repeats=20):
    rng = np.random.default_rng(0)
    for name, (cin, h, w, cout, k, stride, pad) in SHAPES.items():
        x = np.ascontiguousarray(rng.standard_normal((cin, h, w)))
        wgt = np.ascontiguousarray(rng.standard_normal((cout, cin, k, k)))
        b = np.ascontiguousarray(rng.standard_normal(cout))
        y = py.conv_forward(x, wgt, b, stride, pad)
        gy = np.ascontiguousarray(rng.standard_normal(y.shape))
        cases = [
            ("conv_forward", lambda m: m.conv_forward(x, wgt, b, stride, pad)),
            ("conv_weight_grad", lambda m: m.conv_weight_grad(x, gy, stride, pad, k, k)),
            ("conv_input_grad", lambda m: m.conv_input_grad(gy, wgt, stride, pad, h, w)),
            ("maxpool_forward", lambda m: m.maxpool_forward(x, 2, 2)),
        ]
        print(f"\n{name}  (cin={cin} {h}x{w} -> cout={cout}, k={k}, stride={stride})")
        for op, call in cases:
            t_py = timeit(lambda: call(py), repeats)
            if native is None:
                print(f"  {op:18s} python {t_py * 1e3:8.3f} ms   (no compiled backend)")
                continue
            t_nat = timeit(lambda: call(native), repeats)
            print(f"  {op:18s} python {t_py * 1e3:8.3f} ms   native {t_nat * 1e3:8.3f} ms"
                  f"   x{t_py / t_nat:5.1f}")


if __name__ == "__main__":
    bench(int(sys.argv[1]) if len(sys.argv) > 1 else 20)
