"""Experiment drivers behind the CLI: single runs, previews, sweeps.

A sweep varies one axis (schedule kind, maximum ratio, patch grid, or
repeat period), optionally crossed with a list of masking modes, and trains
every (cell, seed) combination. Cells are independent and may run in
parallel worker threads; results are merged in (value, mode, seed) order,
so the emitted tables do not depend on scheduling. All outputs are written
atomically: a failed run leaves no truncated files.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import __version__
from ._kernels import NUMBA_ENABLED
from .config import ExperimentConfig
from .dataset import DatasetManifest, ingest, make_synthetic
from .errors import ConfigError
from .fileio import atomic_write_bytes, atomic_write_text
from .masking import MaskPlan, apply_mask, plan_mask, plan_mask_uniform
from .rng import RngStream
from .salience import PatchGrid, SalienceProfile, gradient_magnitude, salience_profile, to_grayscale
from .schedule import ScheduleVector, build_schedule
from .trainer import RunReport, train

SWEEP_AXES = ("schedule", "rn", "grid", "period")
SWEEP_CSV_HEADER = "value,mode,mean_acc,std_acc,best_epoch"
SWEEP_LONG_CSV_HEADER = "value,mode,seed,epoch,train_loss,train_acc,val_acc"


def build_manifest(cfg: ExperimentConfig, *, force_recompute: bool = False) -> DatasetManifest:
    data = cfg.data
    grid = cfg.grid()
    geometry = cfg.geometry()
    if data["synthetic"] is not None:
        return make_synthetic(
            data["synthetic"], data["n_train"], data["n_val"], data["synthetic_seed"],
            geometry=geometry, grid=grid, stencil=data["stencil"],
            cache_path=data["cache_path"],
        )
    return ingest(
        data["root"], geometry, grid,
        val_fraction=data["val_fraction"], stencil=data["stencil"],
        resize=data["resize"],
        cache_path=data["cache_path"] if data["cache_path"] is not None else "auto",
        force_recompute=force_recompute,
    )


def run_metadata(cfg: ExperimentConfig, extra: dict | None = None) -> str:
    meta = {
        "config": cfg.doc,
        "seeds": list(cfg.seeds),
        "version": __version__,
        "numba": NUMBA_ENABLED,
    }
    if extra:
        meta.update(extra)
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


def run_training(cfg: ExperimentConfig, out_dir: Path | None = None,
                 manifest: DatasetManifest | None = None) -> RunReport:
    """Train per the config and write epochs.csv, summary.csv, run_meta.json."""
    if manifest is None:
        manifest = build_manifest(cfg)
    schedule = build_schedule(cfg.schedule_spec())
    report = train(manifest, schedule, cfg.masking_mode, cfg.train_config())
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "epochs.csv", report.epochs_csv())
        atomic_write_text(out_dir / "summary.csv", report.summary_csv())
        atomic_write_text(out_dir / "run_meta.json", run_metadata(cfg))
    return report


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: ExperimentConfig
    modes: tuple[str, ...] = ()  # empty = just the base masking mode

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one axis value")
        for mode in self.modes:
            if mode not in ("gradient", "uniform"):
                raise ConfigError(f"sweep modes must be gradient or uniform, got {mode!r}")


@dataclass(frozen=True)
class SweepCell:
    value: str
    mode: str
    cfg: ExperimentConfig


@dataclass
class SweepResult:
    cells: list[SweepCell]
    reports: dict[tuple[str, str], RunReport] = field(default_factory=dict)

    def table_csv(self) -> str:
        lines = [SWEEP_CSV_HEADER]
        for cell in self.cells:
            report = self.reports[(cell.value, cell.mode)]
            lines.append("%s,%s,%.12g,%.12g,%d" % (
                cell.value, cell.mode, report.mean_final, report.std_final,
                _best_epoch(report),
            ))
        return "\n".join(lines) + "\n"

    def long_csv(self) -> str:
        lines = [SWEEP_LONG_CSV_HEADER]
        for cell in self.cells:
            report = self.reports[(cell.value, cell.mode)]
            for r in report.epoch_rows:
                lines.append("%s,%s,%d,%d,%.12g,%.12g,%.12g" % (
                    cell.value, cell.mode, r.seed, r.epoch, r.train_loss,
                    r.train_acc, r.val_acc,
                ))
        return "\n".join(lines) + "\n"


def _best_epoch(report: RunReport) -> int:
    by_epoch: dict[int, list[float]] = {}
    for r in report.epoch_rows:
        by_epoch.setdefault(r.epoch, []).append(r.val_acc)
    means = {k: float(np.mean(v)) for k, v in by_epoch.items()}
    best = max(sorted(means), key=lambda k: means[k])
    return best


def _cell_config(spec: SweepSpec, value, mode: str | None) -> ExperimentConfig:
    assignments: dict = {}
    if spec.axis == "schedule":
        if value == "none":
            assignments["masking.mode"] = "none"
        else:
            assignments["schedule.kind"] = str(value)
            if str(value) != "linear_repeat":
                assignments["schedule.period"] = None
    elif spec.axis == "rn":
        assignments["schedule.rn"] = float(value)
    elif spec.axis == "grid":
        assignments["data.grid"] = str(value)
    else:  # period
        if spec.base.doc["schedule"]["kind"] != "linear_repeat":
            raise ConfigError("period sweep requires schedule.kind = linear_repeat")
        assignments["schedule.period"] = int(value)
    if mode is not None and assignments.get("masking.mode") != "none":
        assignments["masking.mode"] = mode
    return spec.base.with_overrides(assignments)


def expand_cells(spec: SweepSpec) -> list[SweepCell]:
    """Validate and list every (axis value, mode) cell up front."""
    modes = spec.modes or (spec.base.masking_mode,)
    cells = []
    for value in spec.values:
        for mode in modes:
            cfg = _cell_config(spec, value, mode if spec.modes else None)
            cells.append(SweepCell(value=str(value), mode=mode, cfg=cfg))
    return cells


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Train every sweep cell (optionally in parallel) and merge reports."""
    cells = expand_cells(spec)
    result = SweepResult(cells=cells)

    # one manifest per distinct data geometry/grid, shared read-only by cells
    manifests: dict[str, DatasetManifest] = {}
    schedules: dict[int, ScheduleVector] = {}
    for i, cell in enumerate(cells):
        data_key = json.dumps(cell.cfg.doc["data"], sort_keys=True)
        if data_key not in manifests:
            manifests[data_key] = build_manifest(cell.cfg)
        schedules[i] = build_schedule(cell.cfg.schedule_spec())

    jobs = []
    for i, cell in enumerate(cells):
        data_key = json.dumps(cell.cfg.doc["data"], sort_keys=True)
        for seed in cell.cfg.seeds:
            jobs.append((i, seed, manifests[data_key]))

    def run_job(job):
        i, seed, manifest = job
        cell = cells[i]
        config = replace(cell.cfg.train_config(), seeds=(seed,))
        return i, train(manifest, schedules[i], cell.cfg.masking_mode, config)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run_job, jobs))
    else:
        partials = [run_job(j) for j in jobs]

    merged: dict[int, RunReport] = {}
    for i, report in partials:
        merged[i] = merged[i].merged(report) if i in merged else report
    for i, cell in enumerate(cells):
        result.reports[(cell.value, cell.mode)] = merged[i]
    return result


def write_sweep_outputs(spec: SweepSpec, result: SweepResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "ablation.csv", result.table_csv())
    atomic_write_text(out_dir / "ablation_long.csv", result.long_csv())
    atomic_write_text(out_dir / "sweep_meta.json", run_metadata(spec.base, extra={
        "axis": spec.axis,
        "values": [str(v) for v in spec.values],
        "modes": list(spec.modes),
    }))


# ---------------------------------------------------------------------------
# Preview and salience dumps
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/PPM image as uint8, grayscale (h, w) or color (h, w, 3)."""
    with PILImage.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("L" if img.mode in ("1", "I", "I;16", "F") else "RGB")
        return np.asarray(img, dtype=np.uint8)


def save_image(path: str | Path, pixels: np.ndarray) -> None:
    import io

    img = PILImage.fromarray(pixels, mode="L" if pixels.ndim == 2 else "RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def dump_salience(dump_dir: str | Path, name: str, magnitude: np.ndarray,
                  profile: SalienceProfile) -> None:
    """Debug dump: per-patch (index, m, p) CSV plus the magnitude map as a PNG.

    The PNG is min-max normalized for viewing only; the CSV carries the
    actual values.
    """
    dump_dir = Path(dump_dir)
    dump_dir.mkdir(parents=True, exist_ok=True)
    lines = ["index,m,p"]
    for i in range(profile.n):
        lines.append("%d,%.12g,%.12g" % (i, profile.m[i], profile.p[i]))
    atomic_write_text(dump_dir / f"{name}.salience.csv", "\n".join(lines) + "\n")
    lo, hi = float(magnitude.min()), float(magnitude.max())
    scaled = np.zeros_like(magnitude) if hi <= lo else (magnitude - lo) / (hi - lo)
    save_image(dump_dir / f"{name}.magnitude.png", (scaled * 255.0).round().astype(np.uint8))


def run_preview(
    image_path: str | Path,
    grid: PatchGrid,
    ratio: float,
    seed: int,
    out_path: str | Path,
    *,
    uniform: bool = False,
    replacement: bool = False,
    stencil: str = "central",
    dump_dir: str | Path | None = None,
) -> MaskPlan:
    """Mask one image and write it plus a sidecar CSV of the masked indices.

    The draw uses the substream for (seed, epoch 1, image id 0).
    """
    pixels = load_image(image_path)
    try:
        grid.patch_shape(pixels.shape[0], pixels.shape[1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not (0.0 <= ratio <= 1.0):
        raise ConfigError(f"ratio must be in [0, 1], got {ratio}")

    gen = RngStream(seed).mask_stream(1, 0)
    if uniform:
        plan = plan_mask_uniform(grid.n, ratio, gen, replacement=replacement,
                                 seed_path=(seed, 1, 0))
    else:
        profile = salience_profile(pixels, grid, stencil)
        plan = plan_mask(profile, ratio, gen, replacement=replacement,
                         seed_path=(seed, 1, 0))
    masked = apply_mask(pixels, grid, plan)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_image(out_path, masked)
    sidecar = out_path.with_suffix(".indices.csv")
    atomic_write_text(sidecar, "index\n" + "".join(f"{int(i)}\n" for i in plan.indices))

    if dump_dir is not None:
        magnitude = gradient_magnitude(to_grayscale(pixels), stencil)
        dump_salience(dump_dir, out_path.stem, magnitude,
                      salience_profile(pixels, grid, stencil))
    return plan
