"""Per-patch masking probabilities from image gradient salience.

The chain is grayscale -> gradient magnitude -> per-patch mean -> normalized
probabilities. Patches with strong intensity edges (likely object parts or
other discriminative content) end up with the highest masking probability.

Everything here is a pure function of the pixel values and the patch grid,
so a profile can be computed once per image and cached. Gradients are taken
on the raw [0, 255] intensity domain; the final probabilities are invariant
to any positive rescaling of the input, and a flat image falls back to a
uniform distribution.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels

# Rec. 601 luma weights, fixed for reproducibility.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

STENCILS = ("central", "sobel")


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping n_h x n_w partition of an image."""

    n_h: int
    n_w: int

    def __post_init__(self):
        if self.n_h < 1 or self.n_w < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.n_h}x{self.n_w}")

    @property
    def n(self) -> int:
        return self.n_h * self.n_w

    def patch_shape(self, h: int, w: int) -> tuple[int, int]:
        """Patch size in pixels; image dimensions must divide exactly."""
        if h % self.n_h != 0 or w % self.n_w != 0:
            raise ValueError(
                f"image {h}x{w} is not divisible by grid {self.n_h}x{self.n_w}"
            )
        return h // self.n_h, w // self.n_w

    @classmethod
    def parse(cls, text: str) -> "PatchGrid":
        """Parse a grid written as e.g. '4x4'."""
        parts = str(text).lower().split("x")
        if len(parts) != 2:
            raise ValueError(f"grid must look like '4x4', got {text!r}")
        try:
            n_h, n_w = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"grid must look like '4x4', got {text!r}") from None
        return cls(n_h, n_w)

    def __str__(self) -> str:
        return f"{self.n_h}x{self.n_w}"


@dataclass(frozen=True)
class SalienceProfile:
    """Per-patch mean gradient magnitudes and masking probabilities."""

    m: np.ndarray  # shape (n,), >= 0
    p: np.ndarray  # shape (n,), >= 0, sums to 1

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @classmethod
    def from_magnitudes(cls, m: np.ndarray) -> "SalienceProfile":
        """Normalize patch magnitudes into probabilities.

        A zero total (flat image) falls back to the uniform distribution so
        that every image remains maskable.
        """
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("patch magnitudes must be a non-empty 1-D array")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("patch magnitudes must be finite and non-negative")
        total = float(m.sum())
        if total > 0.0:
            p = m / total
        else:
            p = np.full(m.shape[0], 1.0 / m.shape[0])
        m.setflags(write=False)
        p.setflags(write=False)
        return cls(m=m, p=p)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Collapse an image to a 2-D float64 intensity map.

    Accepts (h, w), (h, w, 1) or (h, w, 3) arrays. Single-channel input is
    returned with values unchanged; RGB is mixed with Rec. 601 luma weights.
    """
    a = np.asarray(image)
    if a.ndim == 2:
        return a.astype(np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        return a[:, :, 0].astype(np.float64)
    if a.ndim == 3 and a.shape[2] == 3:
        a = a.astype(np.float64)
        w0, w1, w2 = LUMA_WEIGHTS
        return w0 * a[:, :, 0] + w1 * a[:, :, 1] + w2 * a[:, :, 2]
    raise ValueError(f"expected 1 or 3 channels, got array of shape {a.shape}")


def _sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    p = np.pad(gray, 1, mode="edge")
    gx = (
        p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
        - p[:-2, :-2] - 2.0 * p[1:-1, :-2] - p[2:, :-2]
    ) / 8.0
    gy = (
        p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
        - p[:-2, :-2] - 2.0 * p[:-2, 1:-1] - p[:-2, 2:]
    ) / 8.0
    return np.sqrt(gx * gx + gy * gy)


def gradient_magnitude(gray: np.ndarray, stencil: str = "central") -> np.ndarray:
    """Discrete gradient magnitude sqrt(dI/dx^2 + dI/dy^2) of a 2-D image.

    The default stencil is central differences with a replicated border
    (edge pixels see half the interior step). 'sobel' is available as an
    alternative operator.
    """
    a = np.asarray(gray)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale array, got shape {a.shape}")
    a = np.ascontiguousarray(a, dtype=np.float64)
    if stencil == "central":
        return _kernels.grad_magnitude(a)
    if stencil == "sobel":
        return _sobel_magnitude(a)
    raise ValueError(f"unknown stencil {stencil!r}, expected one of {STENCILS}")


def patch_probabilities(magnitude: np.ndarray, grid: PatchGrid) -> SalienceProfile:
    """Reduce a magnitude map to per-patch means and masking probabilities."""
    mag = np.asarray(magnitude)
    if mag.ndim != 2:
        raise ValueError(f"expected a 2-D magnitude map, got shape {mag.shape}")
    grid.patch_shape(mag.shape[0], mag.shape[1])
    mag = np.ascontiguousarray(mag, dtype=np.float64)
    m = _kernels.patch_means(mag, grid.n_h, grid.n_w)
    return SalienceProfile.from_magnitudes(m)


def salience_profile(image: np.ndarray, grid: PatchGrid, stencil: str = "central") -> SalienceProfile:
    """Full chain from pixels to masking probabilities."""
    return patch_probabilities(gradient_magnitude(to_grayscale(image), stencil), grid)
