"""Mask plans: pick which patches to zero for one image at one epoch.

The count of masked patches is round(n * r_k), half-up, clamped to [0, n].
Indices are drawn from the salience distribution without replacement by
default (each draw removes its index and renormalizes the rest), which
guarantees exactly that count of distinct patches. The literal independent
draw behavior, which can hit the same patch twice and mask fewer distinct
patches, stays available behind `replacement=True`.

All draws consume an explicit generator; callers derive the substream from
(seed, epoch, image id) so plans never depend on scheduling or call order.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .salience import PatchGrid, SalienceProfile


@dataclass(frozen=True)
class MaskPlan:
    """Distinct patch indices (in draw order) to zero out."""

    indices: np.ndarray  # int64
    n_mask: int
    seed_path: tuple[int, int, int] | None = None  # (run seed, epoch, image id)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def mask_count(n: int, r_k: float) -> int:
    """Number of patches to mask at ratio r_k, clamped to [0, n]."""
    return min(max(round_half_up(n * r_k), 0), n)


def _draw(weights: np.ndarray, n_mask: int, rng: np.random.Generator, replacement: bool) -> np.ndarray:
    out = np.empty(n_mask, dtype=np.int64)
    if n_mask == 0:
        return out
    uniforms = rng.random(n_mask)
    if replacement:
        _kernels.sample_with_replacement(weights, uniforms, out)
        # keep first occurrences only; repeats mask nothing new
        _, first = np.unique(out, return_index=True)
        out = out[np.sort(first)]
    else:
        _kernels.sample_without_replacement(weights, uniforms, out)
    return out


def plan_mask(
    profile: SalienceProfile,
    r_k: float,
    rng: np.random.Generator,
    *,
    replacement: bool = False,
    seed_path: tuple[int, int, int] | None = None,
) -> MaskPlan:
    """Draw a salience-weighted mask plan for one image."""
    if not (0.0 <= r_k <= 1.0):
        raise ValueError(f"masking ratio must be in [0, 1], got {r_k}")
    weights = np.ascontiguousarray(profile.p, dtype=np.float64)
    indices = _draw(weights, mask_count(profile.n, r_k), rng, replacement)
    return MaskPlan(indices=indices, n_mask=indices.shape[0], seed_path=seed_path)


def plan_mask_uniform(
    n: int,
    r_k: float,
    rng: np.random.Generator,
    *,
    replacement: bool = False,
    seed_path: tuple[int, int, int] | None = None,
) -> MaskPlan:
    """Mask plan with every patch equally likely (ablation baseline)."""
    if n < 1:
        raise ValueError(f"patch count must be >= 1, got {n}")
    if not (0.0 <= r_k <= 1.0):
        raise ValueError(f"masking ratio must be in [0, 1], got {r_k}")
    weights = np.full(n, 1.0 / n)
    indices = _draw(weights, mask_count(n, r_k), rng, replacement)
    return MaskPlan(indices=indices, n_mask=indices.shape[0], seed_path=seed_path)


def apply_mask(image: np.ndarray, grid: PatchGrid, plan: MaskPlan) -> np.ndarray:
    """Return a copy of the image with every planned patch zeroed.

    Zeroing happens in the raw pixel domain, across all channels; pixels
    outside masked patches are untouched.
    """
    a = np.asarray(image)
    if a.ndim not in (2, 3):
        raise ValueError(f"expected a (h, w) or (h, w, c) image, got shape {a.shape}")
    ph, pw = grid.patch_shape(a.shape[0], a.shape[1])
    out = a.copy()
    for idx in plan.indices:
        if not (0 <= idx < grid.n):
            raise ValueError(f"patch index {idx} out of range for grid {grid} (n={grid.n})")
        r, c = divmod(int(idx), grid.n_w)
        out[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw] = 0
    return out
