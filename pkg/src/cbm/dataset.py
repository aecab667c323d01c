"""Dataset ingest, salience caching, and per-epoch masked batch streams.

Two data sources: a directory tree (`root/<class_name>/*.png|*.ppm`) and the
built-in synthetic generators. Either way, ingest produces a DatasetManifest
holding every image in memory at one fixed geometry, with a salience profile
cached per image.

Profiles are also persisted next to the dataset in a small binary cache so
repeated runs skip the gradient pass: magic `CBMS1`, then one record per
image of (8-byte content key, uint32 patch count n, n little-endian float64
probabilities, n float64 patch magnitudes). The key hashes pixel content
together with geometry, grid and stencil, so any of those changing simply
misses the cache.

Per-epoch streams shuffle with a substream keyed by (seed, epoch) and mask
each training image with a substream keyed by (seed, epoch, image id), so
batch contents are a pure function of (manifest, schedule, seed). Validation
images are never masked.
"""

import hashlib
import logging
import queue
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigError
from .masking import apply_mask, plan_mask, plan_mask_uniform, round_half_up
from .rng import RngStream
from .salience import PatchGrid, SalienceProfile, salience_profile
from .schedule import ScheduleVector

logger = logging.getLogger("cbm")

CACHE_MAGIC = b"CBMS1"
IMAGE_SUFFIXES = (".png", ".ppm")
MASKING_MODES = ("gradient", "uniform", "none")
SYNTHETIC_GENERATORS = ("two-shapes",)


@dataclass
class ManifestItem:
    id: int
    label: int
    split: str  # "train" | "val"
    pixels: np.ndarray  # uint8, (h, w) for c=1 or (h, w, 3)
    content_key: bytes  # 8-byte salience cache key
    path: str | None = None
    meta: dict | None = None


@dataclass
class DatasetManifest:
    items: list[ManifestItem]
    classes: list[str]
    geometry: tuple[int, int, int]  # (h, w, c)
    grid: PatchGrid
    stencil: str
    profiles: dict[int, SalienceProfile] = field(default_factory=dict)
    skipped: int = 0
    source: str = ""

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def input_dim(self) -> int:
        h, w, c = self.geometry
        return h * w * c

    def split_items(self, split: str) -> list[ManifestItem]:
        return [it for it in self.items if it.split == split]


def _content_key(pixels: np.ndarray, geometry, grid: PatchGrid, stencil: str) -> bytes:
    h, w, c = geometry
    digest = hashlib.sha256()
    digest.update(pixels.tobytes())
    digest.update(struct.pack("<5I", h, w, c, grid.n_h, grid.n_w))
    digest.update(stencil.encode())
    return digest.digest()[:8]


def _validate_geometry(geometry, grid: PatchGrid) -> tuple[int, int, int]:
    try:
        h, w, c = (int(v) for v in geometry)
    except (TypeError, ValueError):
        raise ConfigError(f"geometry must be (h, w, c), got {geometry!r}") from None
    if h < 1 or w < 1:
        raise ConfigError(f"geometry must have positive h and w, got {h}x{w}")
    if c not in (1, 3):
        raise ConfigError(f"channel count must be 1 or 3, got {c}")
    if h % grid.n_h != 0 or w % grid.n_w != 0:
        raise ConfigError(f"geometry {h}x{w} is not divisible by patch grid {grid}")
    return h, w, c


# ---------------------------------------------------------------------------
# Salience cache persistence
# ---------------------------------------------------------------------------

def write_salience_cache(path: str | Path, records: dict[bytes, SalienceProfile]) -> None:
    chunks = [CACHE_MAGIC]
    for key in sorted(records):
        prof = records[key]
        n = prof.n
        chunks.append(key)
        chunks.append(struct.pack("<I", n))
        chunks.append(prof.p.astype("<f8").tobytes())
        chunks.append(prof.m.astype("<f8").tobytes())
    from .fileio import atomic_write_bytes

    atomic_write_bytes(path, b"".join(chunks))


def read_salience_cache(path: str | Path) -> dict[bytes, SalienceProfile]:
    data = Path(path).read_bytes()
    if not data.startswith(CACHE_MAGIC):
        raise ConfigError(f"{path}: not a salience cache (bad magic)")
    records: dict[bytes, SalienceProfile] = {}
    off = len(CACHE_MAGIC)
    while off < len(data):
        if off + 12 > len(data):
            raise ConfigError(f"{path}: truncated cache record header")
        key = data[off:off + 8]
        (n,) = struct.unpack_from("<I", data, off + 8)
        off += 12
        need = 16 * n
        if off + need > len(data):
            raise ConfigError(f"{path}: truncated cache record body")
        p = np.frombuffer(data, dtype="<f8", count=n, offset=off)
        m = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8 * n)
        off += need
        prof = SalienceProfile(m=m.astype(np.float64), p=p.astype(np.float64))
        prof.m.setflags(write=False)
        prof.p.setflags(write=False)
        records[key] = prof
    return records


def _attach_profiles(manifest: DatasetManifest, cache_path: str | Path | None,
                     force_recompute: bool = False) -> None:
    """Fill manifest.profiles, reading/refreshing the disk cache when set."""
    cached: dict[bytes, SalienceProfile] = {}
    if cache_path is not None and not force_recompute and Path(cache_path).is_file():
        cached = read_salience_cache(cache_path)
    spot_checked = False
    dirty = False
    for item in manifest.items:
        hit = cached.get(item.content_key)
        if hit is not None and hit.n == manifest.grid.n:
            if not spot_checked:
                fresh = salience_profile(item.pixels, manifest.grid, manifest.stencil)
                if not (np.array_equal(fresh.p, hit.p) and np.array_equal(fresh.m, hit.m)):
                    raise ConfigError(
                        f"salience cache {cache_path} is stale for item {item.id}; "
                        "rebuild it (cbm cache rebuild)"
                    )
                spot_checked = True
            manifest.profiles[item.id] = hit
        else:
            prof = salience_profile(item.pixels, manifest.grid, manifest.stencil)
            manifest.profiles[item.id] = prof
            cached[item.content_key] = prof
            dirty = True
    if cache_path is not None and (dirty or force_recompute):
        write_salience_cache(cache_path, cached)


# ---------------------------------------------------------------------------
# Directory ingest
# ---------------------------------------------------------------------------

def _decode_image(path: Path, geometry, resize: str) -> np.ndarray:
    h, w, c = geometry
    with PILImage.open(path) as img:
        img = img.convert("L" if c == 1 else "RGB")
        if img.size != (w, h):
            resample = PILImage.Resampling.NEAREST if resize == "nearest" else PILImage.Resampling.BILINEAR
            img = img.resize((w, h), resample)
        return np.asarray(img, dtype=np.uint8)


def ingest(
    root: str | Path,
    geometry: tuple[int, int, int],
    grid: PatchGrid,
    *,
    val_fraction: float = 0.2,
    stencil: str = "central",
    resize: str = "nearest",
    cache_path: str | Path | None = "auto",
    force_recompute: bool = False,
) -> DatasetManifest:
    """Build a manifest from `root/<class_name>/*.png|*.ppm`.

    Images are decoded, resized to the target geometry, split per class
    (last round(val_fraction * count) files by sorted name go to val), and
    their salience profiles computed and cached. Unreadable files are
    skipped with a warning.
    """
    geometry = _validate_geometry(geometry, grid)
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset root {root} is not a directory")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ConfigError(f"dataset root {root} has no class subdirectories")
    if cache_path == "auto":
        cache_path = root / "salience.cbms"

    items: list[ManifestItem] = []
    classes = [d.name for d in class_dirs]
    skipped = 0
    next_id = 0
    for label, class_dir in enumerate(class_dirs):
        files = sorted(
            f for f in class_dir.iterdir()
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
        )
        decoded = []
        for f in files:
            try:
                decoded.append((f, _decode_image(f, geometry, resize)))
            except Exception as exc:  # unreadable/corrupt file: skip, keep going
                skipped += 1
                logger.warning("skipping unreadable image %s: %s", f, exc)
        n_val = round_half_up(len(decoded) * val_fraction)
        n_train = len(decoded) - n_val
        if n_train == 0:
            raise ConfigError(f"class {class_dir.name!r} has no training images after split")
        for i, (f, pixels) in enumerate(decoded):
            items.append(ManifestItem(
                id=next_id,
                label=label,
                split="train" if i < n_train else "val",
                pixels=pixels,
                content_key=_content_key(pixels, geometry, grid, stencil),
                path=str(f),
            ))
            next_id += 1

    manifest = DatasetManifest(
        items=items, classes=classes, geometry=geometry, grid=grid,
        stencil=stencil, skipped=skipped, source=str(root),
    )
    _attach_profiles(manifest, cache_path, force_recompute)
    return manifest


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

SHAPE_INTENSITY = 220


def _two_shapes_item(gen: np.random.Generator, h: int, w: int, label: int) -> tuple[np.ndarray, dict]:
    # low-contrast textured background, bright shape: disk (class 0) or square (class 1);
    # shape size/position ranges tuned so the task is learnable at desk scale
    pixels = gen.integers(40, 90, size=(h, w), dtype=np.int64)
    small = min(h, w)
    half = int(gen.integers(small // 4, small // 3 + 1))
    margin = half + 1
    cy = int(gen.integers(margin, h - margin))
    cx = int(gen.integers(margin, w - margin))
    yy, xx = np.mgrid[0:h, 0:w]
    if label == 0:
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= half ** 2
        shape = "disk"
    else:
        inside = np.maximum(np.abs(yy - cy), np.abs(xx - cx)) <= half
        shape = "square"
    pixels[inside] = SHAPE_INTENSITY
    meta = {"shape": shape, "cy": cy, "cx": cx, "half": half}
    return pixels.astype(np.uint8), meta


def make_synthetic(
    name: str,
    n_train: int,
    n_val: int,
    seed: int,
    *,
    geometry: tuple[int, int, int] = (16, 16, 1),
    grid: PatchGrid = PatchGrid(4, 4),
    stencil: str = "central",
    cache_path: str | Path | None = None,
) -> DatasetManifest:
    """Generate a deterministic two-class dataset with exactly balanced splits."""
    if name not in SYNTHETIC_GENERATORS:
        raise ConfigError(f"unknown synthetic generator {name!r}, expected one of {SYNTHETIC_GENERATORS}")
    geometry = _validate_geometry(geometry, grid)
    h, w, c = geometry
    if c != 1:
        raise ConfigError(f"two-shapes generates single-channel images, got c={c}")
    if min(h, w) < 8:
        raise ConfigError(f"two-shapes needs geometry of at least 8x8, got {h}x{w}")
    if n_train < 2 or n_val < 2 or n_train % 2 or n_val % 2:
        raise ConfigError(
            f"two-shapes needs even, >= 2 sizes for exact class balance, got train={n_train} val={n_val}"
        )
    stream = RngStream(seed)
    items = []
    for i in range(n_train + n_val):
        label = i % 2
        pixels, meta = _two_shapes_item(stream.synth_stream(i), h, w, label)
        items.append(ManifestItem(
            id=i,
            label=label,
            split="train" if i < n_train else "val",
            pixels=pixels,
            content_key=_content_key(pixels, geometry, grid, stencil),
            meta=meta,
        ))
    manifest = DatasetManifest(
        items=items, classes=["disk", "square"], geometry=geometry, grid=grid,
        stencil=stencil, source=f"synthetic:{name}:{seed}",
    )
    _attach_profiles(manifest, cache_path)
    return manifest


# ---------------------------------------------------------------------------
# Epoch streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochStream:
    """Shuffled order and masking ratio for one training epoch."""

    epoch: int
    ratio: float
    order: np.ndarray  # item ids, a permutation of the train split
    batch_size: int


def plan_epoch(manifest: DatasetManifest, schedule: ScheduleVector, k: int,
               batch_size: int, seed: int) -> EpochStream:
    train_ids = np.asarray([it.id for it in manifest.split_items("train")], dtype=np.int64)
    if train_ids.size == 0:
        raise ConfigError("manifest has no training items")
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    perm = RngStream(seed).shuffle_stream(k).permutation(train_ids.size)
    return EpochStream(epoch=k, ratio=schedule.ratio_at(k), order=train_ids[perm],
                       batch_size=batch_size)


def _vectorize(pixels: np.ndarray) -> np.ndarray:
    return pixels.reshape(-1).astype(np.float64) / 255.0


def epoch_batches(
    manifest: DatasetManifest,
    schedule: ScheduleVector,
    k: int,
    batch_size: int,
    seed: int,
    mode: str = "gradient",
    *,
    replacement: bool = False,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (inputs, labels) batches for epoch k, masking per the schedule.

    Inputs are flattened float64 rows scaled to [0, 1]; masking is applied
    before scaling. The final partial batch is kept.
    """
    if mode not in MASKING_MODES:
        raise ConfigError(f"masking mode must be one of {MASKING_MODES}, got {mode!r}")
    stream = plan_epoch(manifest, schedule, k, batch_size, seed)
    by_id = {it.id: it for it in manifest.items}
    rng = RngStream(seed)
    r_k = stream.ratio

    for start in range(0, stream.order.size, batch_size):
        chunk = stream.order[start:start + batch_size]
        rows = np.empty((chunk.size, manifest.input_dim), dtype=np.float64)
        labels = np.empty(chunk.size, dtype=np.int64)
        for i, item_id in enumerate(chunk):
            item = by_id[int(item_id)]
            pixels = item.pixels
            if mode != "none" and r_k > 0.0:
                gen = rng.mask_stream(k, item.id)
                path = (seed, k, item.id)
                if mode == "gradient":
                    plan = plan_mask(manifest.profiles[item.id], r_k, gen,
                                     replacement=replacement, seed_path=path)
                else:
                    plan = plan_mask_uniform(manifest.grid.n, r_k, gen,
                                             replacement=replacement, seed_path=path)
                pixels = apply_mask(pixels, manifest.grid, plan)
            rows[i] = _vectorize(pixels)
            labels[i] = item.label
        yield rows, labels


def eval_batches(manifest: DatasetManifest, split: str, batch_size: int,
                 ) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Unmasked batches of a split in manifest order (for evaluation only)."""
    items = manifest.split_items(split)
    if not items:
        raise ConfigError(f"manifest has no items in split {split!r}")
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        rows = np.stack([_vectorize(it.pixels) for it in chunk])
        labels = np.asarray([it.label for it in chunk], dtype=np.int64)
        yield rows, labels


def prefetch_batches(batches: Iterator, capacity: int) -> Iterator:
    """Run a batch iterator in a producer thread behind a bounded queue.

    Batch contents and order are unchanged; only the computation overlaps
    with the consumer.
    """
    if capacity < 1:
        raise ValueError(f"queue capacity must be >= 1, got {capacity}")
    q: queue.Queue = queue.Queue(maxsize=capacity)
    done = object()

    def produce():
        try:
            for item in batches:
                q.put(item)
            q.put(done)
        except BaseException as exc:  # surface producer errors to the consumer
            q.put(exc)

    thread = threading.Thread(target=produce, name="cbm-batch-producer", daemon=True)
    thread.start()
    while True:
        item = q.get()
        if item is done:
            break
        if isinstance(item, BaseException):
            raise item
        yield item
    thread.join()
