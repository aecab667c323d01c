#!/usr/bin/env python3
"""Time the JIT kernels against the interpreted fallback.

The fallback runs the same function bodies without numba, selected at import
time by CBM_DISABLE_NUMBA=1; here both paths are imported side by side and
timed on representative shapes. Outputs are also cross-checked, since the
two paths must agree bit for bit.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import timeit

import numpy as np

from cbm import _kernels


def bench(label, py_call, jit_call, repeats):
    py_t = min(timeit.repeat(py_call, number=1, repeat=repeats))
    if jit_call is None:
        print(f"{label:44s} py {py_t * 1e3:9.3f} ms   (numba disabled)")
        return
    jit_call()  # compile outside the timed region
    jit_t = min(timeit.repeat(jit_call, number=1, repeat=repeats))
    print(f"{label:44s} py {py_t * 1e3:9.3f} ms   jit {jit_t * 1e3:8.3f} ms   "
          f"speedup {py_t / jit_t:7.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    gen = np.random.Generator(np.random.Philox(seed=0))
    py = _kernels.PY_KERNELS
    jit = _kernels.JIT_KERNELS if _kernels.NUMBA_ENABLED else {}

    print(f"numba enabled: {_kernels.NUMBA_ENABLED}")

    for size in (64, 256):
        img = gen.random((size, size)) * 255.0
        if jit:
            assert np.array_equal(py["grad_magnitude"](img), jit["grad_magnitude"](img))
        bench(f"grad_magnitude {size}x{size}",
              lambda img=img: py["grad_magnitude"](img),
              (lambda img=img: jit["grad_magnitude"](img)) if jit else None,
              args.repeats)

    for size, n_h in ((64, 8), (256, 16)):
        img = gen.random((size, size))
        if jit:
            assert np.array_equal(py["patch_means"](img, n_h, n_h),
                                  jit["patch_means"](img, n_h, n_h))
        bench(f"patch_means {size}x{size} grid {n_h}x{n_h}",
              lambda img=img, n=n_h: py["patch_means"](img, n, n),
              (lambda img=img, n=n_h: jit["patch_means"](img, n, n)) if jit else None,
              args.repeats)

    for n, draws in ((16, 8), (256, 128)):
        weights = gen.random(n)
        weights /= weights.sum()
        uniforms = gen.random(draws)
        out = np.empty(draws, dtype=np.int64)

        def py_sample(w=weights, u=uniforms, o=out):
            for _ in range(100):
                py["sample_without_replacement"](w, u, o)

        def jit_sample(w=weights, u=uniforms, o=out):
            for _ in range(100):
                jit["sample_without_replacement"](w, u, o)

        if jit:
            a = np.empty(draws, dtype=np.int64)
            b = np.empty(draws, dtype=np.int64)
            py["sample_without_replacement"](weights, uniforms, a)
            jit["sample_without_replacement"](weights, uniforms, b)
            assert np.array_equal(a, b)
        bench(f"sample_without_replacement n={n} x100",
              py_sample, jit_sample if jit else None, args.repeats)


if __name__ == "__main__":
    main()
