"""Hot numeric kernels, JIT-compiled with numba when available.

Set CBM_DISABLE_NUMBA=1 to force the interpreted path. Both paths execute
the same function bodies, so outputs are bit-identical either way; the env
flag only trades speed. benchmarks/bench_kernels.py compares the two.
"""

import os

import numpy as np

NUMBA_ENV_FLAG = "CBM_DISABLE_NUMBA"


def numba_disabled() -> bool:
    return os.environ.get(NUMBA_ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


def _grad_magnitude(gray):
    # central differences, replicate border: |step| halves at the edges
    h, w = gray.shape
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        ym = y - 1 if y > 0 else 0
        yp = y + 1 if y < h - 1 else h - 1
        for x in range(w):
            xm = x - 1 if x > 0 else 0
            xp = x + 1 if x < w - 1 else w - 1
            gx = (gray[y, xp] - gray[y, xm]) * 0.5
            gy = (gray[yp, x] - gray[ym, x]) * 0.5
            out[y, x] = np.sqrt(gx * gx + gy * gy)
    return out


def _patch_means(mag, n_h, n_w):
    h, w = mag.shape
    ph = h // n_h
    pw = w // n_w
    inv = 1.0 / (ph * pw)
    out = np.empty(n_h * n_w, dtype=np.float64)
    for r in range(n_h):
        for c in range(n_w):
            acc = 0.0
            for y in range(r * ph, (r + 1) * ph):
                for x in range(c * pw, (c + 1) * pw):
                    acc += mag[y, x]
            out[r * n_w + c] = acc * inv
    return out


def _sample_without_replacement(weights, uniforms, out):
    # Sequential categorical draws; a drawn index is removed and the rest
    # renormalized (implicitly, by re-walking the remaining mass). Once the
    # positive-weight support is exhausted, remaining picks are uniform over
    # the still-available indices.
    n = weights.shape[0]
    taken = np.zeros(n, dtype=np.bool_)
    for i in range(out.shape[0]):
        total = 0.0
        for j in range(n):
            if not taken[j]:
                total += weights[j]
        idx = -1
        if total > 0.0:
            target = uniforms[i] * total
            acc = 0.0
            for j in range(n):
                if taken[j]:
                    continue
                acc += weights[j]
                if acc > target and weights[j] > 0.0:
                    idx = j
                    break
            if idx < 0:
                # rounding pushed target to the very end; take the last live index
                for j in range(n - 1, -1, -1):
                    if not taken[j] and weights[j] > 0.0:
                        idx = j
                        break
        else:
            remaining = 0
            for j in range(n):
                if not taken[j]:
                    remaining += 1
            pick = int(uniforms[i] * remaining)
            if pick >= remaining:
                pick = remaining - 1
            for j in range(n):
                if not taken[j]:
                    if pick == 0:
                        idx = j
                        break
                    pick -= 1
        taken[idx] = True
        out[i] = idx


def _sample_with_replacement(weights, uniforms, out):
    n = weights.shape[0]
    total = 0.0
    for j in range(n):
        total += weights[j]
    for i in range(out.shape[0]):
        target = uniforms[i] * total
        acc = 0.0
        idx = -1
        for j in range(n):
            acc += weights[j]
            if acc > target and weights[j] > 0.0:
                idx = j
                break
        if idx < 0:
            for j in range(n - 1, -1, -1):
                if weights[j] > 0.0:
                    idx = j
                    break
        out[i] = idx


PY_KERNELS = {
    "grad_magnitude": _grad_magnitude,
    "patch_means": _patch_means,
    "sample_without_replacement": _sample_without_replacement,
    "sample_with_replacement": _sample_with_replacement,
}

JIT_KERNELS: dict = {}
NUMBA_ENABLED = False

if not numba_disabled():
    try:
        from numba import njit
    except ImportError:
        pass
    else:
        # no fastmath: reassociation would break bit-parity with the fallback
        _jit = njit(cache=True, nogil=True)
        JIT_KERNELS = {name: _jit(fn) for name, fn in PY_KERNELS.items()}
        NUMBA_ENABLED = True

_ACTIVE = JIT_KERNELS if NUMBA_ENABLED else PY_KERNELS

grad_magnitude = _ACTIVE["grad_magnitude"]
patch_means = _ACTIVE["patch_means"]
sample_without_replacement = _ACTIVE["sample_without_replacement"]
sample_with_replacement = _ACTIVE["sample_with_replacement"]
