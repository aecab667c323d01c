"""Counter-based random substreams for reproducible runs.

Every random decision in the pipeline (mask draws, epoch shuffles, weight
init, synthetic data) pulls from its own Philox substream derived from
(root_seed, purpose_tag, *path). Philox is counter-based, so the draw
sequence for a given path is identical across runs, worker counts and call
orders -- no global RNG state anywhere.
"""

from dataclasses import dataclass

import numpy as np

# Substream purpose tags. Never reuse a tag for a second purpose.
STREAM_MASK = 1
STREAM_SHUFFLE = 2
STREAM_INIT = 3
STREAM_SYNTH = 4

MAX_SEED = 2**64


@dataclass(frozen=True)
class RngStream:
    """Splittable RNG rooted at a 64-bit seed."""

    root_seed: int

    def __post_init__(self):
        if not isinstance(self.root_seed, int) or not (0 <= self.root_seed < MAX_SEED):
            raise ValueError(f"root seed must be an int in [0, 2**64), got {self.root_seed!r}")

    def substream(self, *path: int) -> np.random.Generator:
        """Derive the generator for (root_seed, *path)."""
        ss = np.random.SeedSequence(entropy=self.root_seed, spawn_key=tuple(path))
        return np.random.Generator(np.random.Philox(seed=ss))

    def mask_stream(self, epoch: int, image_id: int) -> np.random.Generator:
        return self.substream(STREAM_MASK, epoch, image_id)

    def shuffle_stream(self, epoch: int) -> np.random.Generator:
        return self.substream(STREAM_SHUFFLE, epoch)

    def init_stream(self) -> np.random.Generator:
        return self.substream(STREAM_INIT)

    def synth_stream(self, item_index: int) -> np.random.Generator:
        return self.substream(STREAM_SYNTH, item_index)
