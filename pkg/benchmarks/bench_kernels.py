"""Compare the compiled patch-extraction kernels against the numpy fallback.

Times im2col/col2im round trips on convolution-sized workloads and a full
training step of the default network, printing one row per backend.

Usage: python3 benchmarks/bench_kernels.py [--quick]
"""
import argparse
import time

import numpy as np

from corrodet import kernels
from corrodet.kernels import _fallback

try:
    from corrodet.kernels import _core
except ImportError:
    _core = None


def time_fn(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats):
    cases = [
        ("stem 64x256x256 k3 s2", (8, 3, 256, 256), 3, 2, 1),
        ("stage 16x128x128 k3 s1", (8, 16, 128, 128), 3, 1, 1),
        ("stage 64x32x32 k3 s1", (8, 64, 32, 32), 3, 1, 1),
    ]
    backends = [("fallback", _fallback)]
    if _core is not None:
        backends.append(("cython", _core))
    rng = np.random.default_rng(0)
    print(f"{'case':<28}{'backend':<10}{'im2col':>10}{'col2im':>10}")
    for name, shape, k, stride, pad in cases:
        x = rng.normal(size=shape).astype(np.float32)
        ref = _fallback.im2col(x, k, stride, pad)
        cols = rng.normal(size=ref.shape).astype(np.float32)
        for bname, mod in backends:
            assert np.array_equal(mod.im2col(x, k, stride, pad), ref)
            fwd = time_fn(lambda: mod.im2col(x, k, stride, pad), repeats)
            bwd = time_fn(lambda: mod.col2im(cols, x.shape, k, stride, pad), repeats)
            print(f"{name:<28}{bname:<10}{fwd * 1e3:>9.1f}ms{bwd * 1e3:>9.1f}ms")


def bench_train_step(repeats):
    import os

    from corrodet import model

    print(f"\n{'training step (batch 16)':<28}{'backend':<10}{'time':>10}")
    rng = np.random.default_rng(0)
    batch = model.Batch(
        inputs=rng.normal(size=(16, 256, 256, 3)).astype(np.float32),
        labels=rng.integers(0, 2, size=16),
    )
    label = "forced fallback" if os.environ.get("CORRODET_NO_EXT") else kernels.BACKEND
    params = model.init_model(model.ArchConfig(), 0)
    step = time_fn(lambda: model.loss_and_grad(params, batch), repeats)
    print(f"{'':<28}{label:<10}{step:>9.2f}s")
    if kernels.BACKEND == "cython":
        print("rerun with CORRODET_NO_EXT=1 to time the fallback end to end")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="single repetition")
    args = parser.parse_args()
    repeats = 1 if args.quick else 3
    print(f"active backend: {kernels.BACKEND}")
    bench_kernels(repeats)
    bench_train_step(repeats)


if __name__ == "__main__":
    main()
