"""Curriculum-by-masking training toolkit.

Builds easy-to-hard training curricula by zeroing image patches: patch
selection is weighted by gradient-magnitude salience, and the masked
fraction follows a per-epoch schedule that ramps from easy (unmasked)
to hard.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DivergenceError
from .masking import MaskPlan, apply_mask, mask_count, plan_mask, plan_mask_uniform
from .rng import RngStream
from .salience import (
    PatchGrid,
    SalienceProfile,
    gradient_magnitude,
    patch_probabilities,
    salience_profile,
    to_grayscale,
)
from .schedule import (
    KINDS,
    ScheduleSpec,
    ScheduleVector,
    build_schedule,
    export_schedule,
    parse_schedule_csv,
)
from .dataset import (
    DatasetManifest,
    EpochStream,
    ManifestItem,
    epoch_batches,
    eval_batches,
    ingest,
    make_synthetic,
    plan_epoch,
    prefetch_batches,
)
from .trainer import (
    RunReport,
    TrainConfig,
    evaluate,
    forward,
    init_params,
    loss_and_grad,
    train,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "MaskPlan",
    "PatchGrid",
    "RngStream",
    "SalienceProfile",
    "ScheduleSpec",
    "ScheduleVector",
    "KINDS",
    "DatasetManifest",
    "EpochStream",
    "ManifestItem",
    "RunReport",
    "TrainConfig",
    "apply_mask",
    "build_schedule",
    "epoch_batches",
    "eval_batches",
    "evaluate",
    "export_schedule",
    "forward",
    "gradient_magnitude",
    "ingest",
    "init_params",
    "loss_and_grad",
    "make_synthetic",
    "mask_count",
    "parse_schedule_csv",
    "patch_probabilities",
    "plan_epoch",
    "plan_mask",
    "plan_mask_uniform",
    "prefetch_batches",
    "salience_profile",
    "to_grayscale",
    "train",
]
