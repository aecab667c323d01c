"""Small deterministic classifiers for desk-scale masking ablations.

Two architectures: softmax regression ("linear") and a one-hidden-layer ReLU
network ("mlp"), both with hand-derived gradients, trained by SGD with
momentum and optional weight decay on the cross-entropy loss. Inputs are the
flattened [0, 1] pixel rows produced by the dataset pipeline.

Runs are bitwise deterministic per seed: weight init, epoch shuffles and
mask draws all come from substreams of the run seed, and the loop aborts
with context if the loss or any parameter goes non-finite.
"""

from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetManifest, epoch_batches, eval_batches, prefetch_batches
from .errors import ConfigError, DivergenceError
from .rng import RngStream
from .schedule import ScheduleVector

ARCHITECTURES = ("linear", "mlp")
INIT_STD = 0.01

EPOCHS_CSV_HEADER = "epoch,seed,train_loss,train_acc,val_acc"
SUMMARY_CSV_HEADER = "seed,final_val_acc"


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "mlp"
    hidden: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    prefetch: int = 0  # batch producer queue capacity; 0 = inline

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.hidden < 1:
            raise ConfigError(f"hidden width must be >= 1, got {self.hidden}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


def init_params(arch: str, in_dim: int, n_classes: int, hidden: int,
                gen: np.random.Generator) -> dict[str, np.ndarray]:
    """Seeded Gaussian weights (std 0.01), zero biases."""
    if arch == "linear":
        return {
            "W": gen.standard_normal((in_dim, n_classes)) * INIT_STD,
            "b": np.zeros(n_classes),
        }
    return {
        "W1": gen.standard_normal((in_dim, hidden)) * INIT_STD,
        "b1": np.zeros(hidden),
        "W2": gen.standard_normal((hidden, n_classes)) * INIT_STD,
        "b2": np.zeros(n_classes),
    }


def _logits(params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    if "W" in params:
        return x @ params["W"] + params["b"], None
    z1 = x @ params["W1"] + params["b1"]
    a1 = np.maximum(z1, 0.0)
    return a1 @ params["W2"] + params["b2"], a1


def forward(params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per sample (rows sum to 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != _input_dim(params):
        raise ValueError(f"batch shape {x.shape} does not match input dim {_input_dim(params)}")
    with np.errstate(over="ignore", invalid="ignore"):
        z, _ = _logits(params, x)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def _input_dim(params: dict[str, np.ndarray]) -> int:
    return params["W"].shape[0] if "W" in params else params["W1"].shape[0]


def _n_classes(params: dict[str, np.ndarray]) -> int:
    return params["W"].shape[1] if "W" in params else params["W2"].shape[1]


def loss_and_grad(params: dict[str, np.ndarray], x: np.ndarray, y: np.ndarray,
                  ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and its analytic gradient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n_classes = _n_classes(params)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ValueError(f"labels shape {y.shape} does not match batch of {x.shape[0]}")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must be in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    b = x.shape[0]

    # divergence shows up as non-finite values; callers detect and abort, so
    # the overflow warnings along the way are just noise
    with np.errstate(over="ignore", invalid="ignore"):
        z, a1 = _logits(params, x)
        zmax = z.max(axis=1, keepdims=True)
        logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        loss = float(np.mean(logsumexp - z[np.arange(b), y]))

        probs = np.exp(z - zmax)
        probs /= probs.sum(axis=1, keepdims=True)
        dz = probs
        dz[np.arange(b), y] -= 1.0
        dz /= b

        if "W" in params:
            return loss, {"W": x.T @ dz, "b": dz.sum(axis=0)}
        d_a1 = dz @ params["W2"].T
        dz1 = d_a1 * (a1 > 0.0)
        return loss, {
            "W1": x.T @ dz1,
            "b1": dz1.sum(axis=0),
            "W2": a1.T @ dz,
            "b2": dz.sum(axis=0),
        }


def sgd_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               velocity: dict[str, np.ndarray], lr: float, momentum: float,
               weight_decay: float) -> None:
    for key in params:
        g = grads[key]
        if weight_decay > 0.0 and key.startswith("W"):
            g = g + weight_decay * params[key]
        velocity[key] = momentum * velocity[key] + g
        params[key] -= lr * velocity[key]


def evaluate(params: dict[str, np.ndarray], manifest: DatasetManifest, split: str,
             batch_size: int = 256) -> float:
    """Accuracy on the given split; images are never masked here."""
    correct = 0
    total = 0
    for x, y in eval_batches(manifest, split, batch_size):
        pred = forward(params, x).argmax(axis=1)
        correct += int((pred == y).sum())
        total += y.shape[0]
    return correct / total


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochRow:
    epoch: int
    seed: int
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class RunReport:
    epoch_rows: list[EpochRow] = field(default_factory=list)
    final_accs: dict[int, float] = field(default_factory=dict)  # seed -> final val acc

    @property
    def mean_final(self) -> float:
        return float(np.mean(list(self.final_accs.values())))

    @property
    def std_final(self) -> float:
        # population std, matching mean +/- std reporting over repeated runs
        return float(np.std(list(self.final_accs.values())))

    def merged(self, other: "RunReport") -> "RunReport":
        report = RunReport(epoch_rows=self.epoch_rows + other.epoch_rows,
                           final_accs={**self.final_accs, **other.final_accs})
        report.epoch_rows.sort(key=lambda r: (r.seed, r.epoch))
        return report

    def epochs_csv(self) -> str:
        lines = [EPOCHS_CSV_HEADER]
        for r in sorted(self.epoch_rows, key=lambda r: (r.seed, r.epoch)):
            lines.append("%d,%d,%.12g,%.12g,%.12g" % (r.epoch, r.seed, r.train_loss,
                                                      r.train_acc, r.val_acc))
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        lines = [SUMMARY_CSV_HEADER]
        for seed in sorted(self.final_accs):
            lines.append("%d,%.12g" % (seed, self.final_accs[seed]))
        lines.append("mean,%.12g" % self.mean_final)
        lines.append("std,%.12g" % self.std_final)
        return "\n".join(lines) + "\n"


def _check_finite(params: dict[str, np.ndarray], seed: int, epoch: int) -> None:
    for key, value in params.items():
        if not np.all(np.isfinite(value)):
            raise DivergenceError(
                f"non-finite values in parameter {key!r} after epoch {epoch} (seed {seed})",
                seed=seed, epoch=epoch,
            )


def train(manifest: DatasetManifest, schedule: ScheduleVector, mode: str,
          config: TrainConfig) -> RunReport:
    """Train one model per seed and report per-epoch and final metrics.

    `mode` selects the masking applied to training batches: 'gradient'
    (salience-weighted), 'uniform', or 'none' (the schedule is ignored and
    batches stream unmasked).
    """
    report = RunReport()
    for seed in config.seeds:
        params = init_params(config.arch, manifest.input_dim, manifest.n_classes,
                             config.hidden, RngStream(seed).init_stream())
        velocity = {k: np.zeros_like(v) for k, v in params.items()}
        for k in range(1, schedule.epochs + 1):
            batches = epoch_batches(manifest, schedule, k, config.batch_size, seed, mode)
            if config.prefetch > 0:
                batches = prefetch_batches(batches, config.prefetch)
            loss_sum = 0.0
            correct = 0
            total = 0
            for b, (x, y) in enumerate(batches):
                loss, grads = loss_and_grad(params, x, y)
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite loss at epoch {k}, batch {b} (seed {seed})",
                        seed=seed, epoch=k, batch=b,
                    )
                pred = forward(params, x).argmax(axis=1)
                correct += int((pred == y).sum())
                total += y.shape[0]
                loss_sum += loss * y.shape[0]
                sgd_update(params, grads, velocity, config.lr, config.momentum,
                           config.weight_decay)
            _check_finite(params, seed, k)
            val_acc = evaluate(params, manifest, "val")
            report.epoch_rows.append(EpochRow(
                epoch=k, seed=seed, train_loss=loss_sum / total,
                train_acc=correct / total, val_acc=val_acc,
            ))
        report.final_accs[seed] = report.epoch_rows[-1].val_acc
    return report
