"""Masking-ratio schedules: what fraction of patches is hidden at epoch k.

Five kinds. 'constant' holds the maximum ratio from the start (a plain
augmentation baseline, not a curriculum). 'log' ramps up early and is the
most aggressive curriculum, 'exp' saves almost all masking for the final
epochs, 'linear' sits between them, and 'linear_repeat' restarts a linear
easy-to-hard ramp every `period` epochs so easy images keep reappearing
late in training.

Ratios are indexed by epoch, 1-based: r_k for k in {1..epochs}. Each ramp
is computed as r_n * f(k / epochs) so the final epoch hits r_n exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

KINDS = ("constant", "linear", "log", "exp", "linear_repeat")

SCHEDULE_CSV_HEADER = "epoch,ratio"


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    r_n: float  # maximum masking ratio, 0 < r_n < 1
    epochs: int
    period: int | None = None  # linear_repeat only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"schedule kind must be one of {KINDS}, got {self.kind!r}")
        if not (0.0 < self.r_n < 1.0):
            raise ConfigError(f"maximum masking ratio must satisfy 0 < r_n < 1, got {self.r_n}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.kind == "linear_repeat":
            if self.period is None:
                raise ConfigError("linear_repeat requires a period")
            if not (1 <= self.period <= self.epochs):
                raise ConfigError(
                    f"period must satisfy 1 <= period <= epochs ({self.epochs}), got {self.period}"
                )
        elif self.period is not None:
            raise ConfigError(f"period only applies to linear_repeat, got kind {self.kind!r}")


@dataclass(frozen=True)
class ScheduleVector:
    """Realized ratio vector; entry k-1 is the ratio for epoch k."""

    spec: ScheduleSpec
    r: np.ndarray

    def __len__(self) -> int:
        return self.r.shape[0]

    @property
    def epochs(self) -> int:
        return self.r.shape[0]

    def ratio_at(self, k: int) -> float:
        if not (1 <= k <= self.epochs):
            raise IndexError(f"epoch index must be in [1, {self.epochs}], got {k}")
        return float(self.r[k - 1])


def build_schedule(spec: ScheduleSpec) -> ScheduleVector:
    """Evaluate the closed form of the requested schedule kind."""
    n = spec.epochs
    k = np.arange(1, n + 1, dtype=np.float64)
    if spec.kind == "constant":
        r = np.full(n, spec.r_n)
    elif spec.kind == "linear":
        r = spec.r_n * (k / n)
    elif spec.kind == "log":
        r = spec.r_n * np.log2(1.0 + k / n)
    elif spec.kind == "exp":
        r = spec.r_n * np.exp(k - n)
    else:  # linear_repeat: sawtooth restarting at r_n/period, peaking at r_n
        t = float(spec.period)
        phase = np.mod(k - 1.0, t) + 1.0
        r = spec.r_n * (phase / t)
    r.setflags(write=False)
    return ScheduleVector(spec=spec, r=r)


def export_schedule(schedule: ScheduleVector) -> str:
    """Render the vector as CSV text: header then one (epoch, ratio) row per epoch."""
    lines = [SCHEDULE_CSV_HEADER]
    for k in range(1, schedule.epochs + 1):
        lines.append("%d,%.12g" % (k, schedule.r[k - 1]))
    return "\n".join(lines) + "\n"


def parse_schedule_csv(text: str) -> np.ndarray:
    """Read back a CSV produced by export_schedule."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SCHEDULE_CSV_HEADER:
        raise ValueError(f"expected header {SCHEDULE_CSV_HEADER!r}")
    ratios = []
    for i, ln in enumerate(lines[1:], start=1):
        epoch_s, ratio_s = ln.split(",")
        if int(epoch_s) != i:
            raise ValueError(f"non-contiguous epoch column at row {i}: {ln!r}")
        ratios.append(float(ratio_s))
    return np.asarray(ratios, dtype=np.float64)
