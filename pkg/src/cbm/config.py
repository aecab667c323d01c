"""Run configuration: JSON document merged over defaults, strictly validated.

Precedence, lowest to highest: built-in defaults, the config file, then
`--set section.key=value` flags. Unknown keys anywhere are rejected, and all
value checks run before any work starts. The env var CBM_SEED supplies the
seed list when neither the file nor a flag does.
"""

import copy
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .salience import PatchGrid, STENCILS
from .schedule import KINDS, ScheduleSpec
from .trainer import ARCHITECTURES, TrainConfig

ENV_SEED = "CBM_SEED"

DEFAULTS: dict[str, Any] = {
    "data": {
        "synthetic": "two-shapes",  # built-in generator name, or null when root is set
        "root": None,               # dataset directory (root/<class>/*.png|*.ppm)
        "n_train": 400,             # synthetic only
        "n_val": 200,               # synthetic only
        "synthetic_seed": 1,        # synthetic only
        "val_fraction": 0.2,        # directory ingest only
        "geometry": [16, 16, 1],
        "grid": "4x4",
        "batch_size": 32,
        "stencil": "central",
        "resize": "nearest",
        "cache_path": None,         # null = beside the dataset root (ingest) / no disk cache (synthetic)
    },
    "schedule": {
        "kind": "linear_repeat",
        "rn": 0.4,
        "epochs": 80,
        "period": 5,
    },
    "masking": {
        "mode": "gradient",         # gradient | uniform | none
        "replacement": False,
    },
    "trainer": {
        "arch": "mlp",
        "hidden": 64,
        "lr": 0.05,
        "momentum": 0.9,
        "weight_decay": 0.0,
        "prefetch": 0,
    },
    "seeds": [1, 2, 3, 4, 5],
    "output_dir": "runs/out",
}


def _reject_unknown(doc: dict, reference: dict, prefix: str = "") -> None:
    for key, value in doc.items():
        if key not in reference:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        if isinstance(reference[key], dict) and reference[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {prefix + key!r} must be an object")
            _reject_unknown(value, reference[key], prefix + key + ".")


def _merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass
class ExperimentConfig:
    doc: dict

    # -- section accessors -------------------------------------------------
    @property
    def data(self) -> dict:
        return self.doc["data"]

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(self.doc["seeds"])

    @property
    def output_dir(self) -> Path:
        return Path(self.doc["output_dir"])

    @property
    def masking_mode(self) -> str:
        return self.doc["masking"]["mode"]

    @property
    def replacement(self) -> bool:
        return self.doc["masking"]["replacement"]

    def grid(self) -> PatchGrid:
        return PatchGrid.parse(self.doc["data"]["grid"])

    def geometry(self) -> tuple[int, int, int]:
        return tuple(self.doc["data"]["geometry"])

    def schedule_spec(self) -> ScheduleSpec:
        s = self.doc["schedule"]
        period = s["period"] if s["kind"] == "linear_repeat" else None
        return ScheduleSpec(kind=s["kind"], r_n=s["rn"], epochs=s["epochs"], period=period)

    def train_config(self) -> TrainConfig:
        t = self.doc["trainer"]
        return TrainConfig(
            arch=t["arch"], hidden=t["hidden"], lr=t["lr"], momentum=t["momentum"],
            weight_decay=t["weight_decay"], batch_size=self.doc["data"]["batch_size"],
            seeds=self.seeds, prefetch=t["prefetch"],
        )

    def with_overrides(self, assignments: dict[str, Any]) -> "ExperimentConfig":
        """New config with dotted-key assignments applied and re-validated."""
        doc = copy.deepcopy(self.doc)
        for dotted, value in assignments.items():
            node = doc
            parts = dotted.split(".")
            for part in parts[:-1]:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"unknown config key {dotted!r}")
                node = node[part]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node[parts[-1]] = value
        return resolve_config(doc, merged=True)


def validate_config(doc: dict) -> None:
    _reject_unknown(doc, DEFAULTS)
    data = doc["data"]
    sched = doc["schedule"]
    mask = doc["masking"]
    tr = doc["trainer"]

    has_root = data["root"] is not None
    has_synth = data["synthetic"] is not None
    _require(has_root != has_synth,
             "exactly one of data.root and data.synthetic must be set")
    _require(data["stencil"] in STENCILS,
             f"data.stencil must be one of {STENCILS}, got {data['stencil']!r}")
    _require(data["resize"] in ("nearest", "bilinear"),
             f"data.resize must be 'nearest' or 'bilinear', got {data['resize']!r}")
    _require(isinstance(data["batch_size"], int) and data["batch_size"] >= 1,
             f"data.batch_size must be an int >= 1, got {data['batch_size']!r}")
    _require(0.0 <= data["val_fraction"] < 1.0,
             f"data.val_fraction must be in [0, 1), got {data['val_fraction']!r}")

    try:
        grid = PatchGrid.parse(data["grid"])
    except ValueError as exc:
        raise ConfigError(f"data.grid: {exc}") from exc
    geometry = data["geometry"]
    _require(isinstance(geometry, (list, tuple)) and len(geometry) == 3,
             f"data.geometry must be [h, w, c], got {geometry!r}")
    h, w, c = geometry
    _require(all(isinstance(v, int) for v in (h, w, c)) and h >= 1 and w >= 1,
             f"data.geometry must be positive ints, got {geometry!r}")
    _require(c in (1, 3), f"data.geometry channel count must be 1 or 3, got {c}")
    _require(h % grid.n_h == 0 and w % grid.n_w == 0,
             f"data.geometry {h}x{w} is not divisible by data.grid {grid}")

    _require(sched["kind"] in KINDS,
             f"schedule.kind must be one of {KINDS}, got {sched['kind']!r}")
    _require(isinstance(sched["rn"], (int, float)) and 0.0 < sched["rn"] < 1.0,
             f"schedule.rn must satisfy 0 < rn < 1, got {sched['rn']!r}")
    _require(isinstance(sched["epochs"], int) and sched["epochs"] >= 1,
             f"schedule.epochs must be an int >= 1, got {sched['epochs']!r}")
    if sched["kind"] == "linear_repeat":
        _require(isinstance(sched["period"], int) and 1 <= sched["period"] <= sched["epochs"],
                 f"schedule.period must satisfy 1 <= period <= epochs, got {sched['period']!r}")

    _require(mask["mode"] in ("gradient", "uniform", "none"),
             f"masking.mode must be gradient, uniform or none, got {mask['mode']!r}")
    _require(isinstance(mask["replacement"], bool),
             f"masking.replacement must be a bool, got {mask['replacement']!r}")

    _require(tr["arch"] in ARCHITECTURES,
             f"trainer.arch must be one of {ARCHITECTURES}, got {tr['arch']!r}")
    _require(isinstance(tr["hidden"], int) and tr["hidden"] >= 1,
             f"trainer.hidden must be an int >= 1, got {tr['hidden']!r}")
    _require(isinstance(tr["lr"], (int, float)) and tr["lr"] > 0,
             f"trainer.lr must be > 0, got {tr['lr']!r}")
    _require(isinstance(tr["momentum"], (int, float)) and 0.0 <= tr["momentum"] < 1.0,
             f"trainer.momentum must be in [0, 1), got {tr['momentum']!r}")
    _require(isinstance(tr["weight_decay"], (int, float)) and tr["weight_decay"] >= 0,
             f"trainer.weight_decay must be >= 0, got {tr['weight_decay']!r}")
    _require(isinstance(tr["prefetch"], int) and tr["prefetch"] >= 0,
             f"trainer.prefetch must be an int >= 0, got {tr['prefetch']!r}")

    seeds = doc["seeds"]
    _require(isinstance(seeds, list) and len(seeds) >= 1
             and all(isinstance(s, int) and 0 <= s < 2**64 for s in seeds),
             f"seeds must be a non-empty list of ints in [0, 2**64), got {seeds!r}")
    _require(isinstance(doc["output_dir"], str) and doc["output_dir"],
             "output_dir must be a non-empty string")

    if data["synthetic"] is not None:
        _require(data["synthetic"] == "two-shapes",
                 f"data.synthetic must name a built-in generator, got {data['synthetic']!r}")
        _require(isinstance(data["synthetic_seed"], int) and data["synthetic_seed"] >= 0,
                 f"data.synthetic_seed must be an int >= 0, got {data['synthetic_seed']!r}")


def resolve_config(doc: dict, *, merged: bool = False) -> ExperimentConfig:
    """Merge a user document over the defaults and validate everything."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _reject_unknown(doc, DEFAULTS)
    full = doc if merged else _merge(DEFAULTS, doc)
    if not merged and "seeds" not in doc and os.environ.get(ENV_SEED):
        try:
            full["seeds"] = [int(os.environ[ENV_SEED])]
        except ValueError:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {os.environ[ENV_SEED]!r}") from None
    validate_config(full)
    return ExperimentConfig(doc=full)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load a JSON config file (or just the defaults when path is None)."""
    if path is None:
        return resolve_config({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return resolve_config(doc)


def parse_override(text: str) -> tuple[str, Any]:
    """Parse a --set assignment 'section.key=value'; the value is JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"--set expects key.path=value, got {text!r}")
    key, _, raw = text.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"--set expects key.path=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value
