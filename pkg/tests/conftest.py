import numpy as np
import pytest
from PIL import Image as PILImage


@pytest.fixture
def quadrant_image():
    """8x8 grayscale: checkerboard in the top-left quadrant, flat elsewhere.

    Under a 2x2 grid the checkerboard patch carries almost all the gradient
    mass; the three flat quadrants only see boundary bleed.
    """
    img = np.full((8, 8), 128, dtype=np.uint8)
    yy, xx = np.mgrid[0:4, 0:4]
    img[0:4, 0:4] = np.where((yy + xx) % 2 == 0, 255, 0)
    return img


def write_png(path, pixels):
    mode = "L" if pixels.ndim == 2 else "RGB"
    PILImage.fromarray(pixels, mode=mode).save(path)


def write_ppm(path, pixels):
    if pixels.ndim == 2:
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
    PILImage.fromarray(pixels, mode="RGB").save(path, format="PPM")


@pytest.fixture
def image_dataset_dir(tmp_path):
    """2 classes x 5 deterministic 16x16 grayscale PNGs."""
    gen = np.random.Generator(np.random.Philox(seed=1234))
    root = tmp_path / "dataset"
    for cls in ("circles", "stripes"):
        d = root / cls
        d.mkdir(parents=True)
        for i in range(5):
            pixels = gen.integers(0, 256, size=(16, 16), dtype=np.uint8)
            write_png(d / f"img{i}.png", pixels)
    return root
