"""Command-line front end.

Subcommands: preview (mask one image), schedule (export a ratio curve),
train (run the trainer per a JSON config), ablate (axis sweeps), cache
(inspect or rebuild the salience cache).

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 I/O failure.
"""

import argparse
import os
import sys
from pathlib import Path

from .config import ENV_SEED, load_config, parse_override
from .dataset import read_salience_cache
from .errors import ConfigError, DivergenceError
from .experiments import (
    SweepSpec,
    build_manifest,
    dump_salience,
    run_preview,
    run_sweep,
    run_training,
    write_sweep_outputs,
)
from .fileio import atomic_write_text
from .salience import PatchGrid, STENCILS, gradient_magnitude, to_grayscale
from .schedule import KINDS, ScheduleSpec, build_schedule, export_schedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def _default_seed() -> int:
    value = os.environ.get(ENV_SEED, "").strip()
    if not value:
        return 0
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{ENV_SEED} must be an integer, got {value!r}") from None


def _load_with_overrides(args) -> "object":
    cfg = load_config(args.config)
    overrides = dict(parse_override(s) for s in (args.set or []))
    if getattr(args, "out", None):
        overrides["output_dir"] = str(args.out)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def cmd_preview(args) -> int:
    try:
        grid = PatchGrid.parse(args.grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    seed = args.seed if args.seed is not None else _default_seed()
    plan = run_preview(
        args.image, grid, args.ratio, seed, args.out,
        uniform=args.uniform, replacement=args.replacement,
        stencil=args.stencil, dump_dir=args.dump_salience,
    )
    print(f"wrote {args.out} ({plan.n_mask} of {grid.n} patches masked)")
    return EXIT_OK


def cmd_schedule(args) -> int:
    spec = ScheduleSpec(kind=args.kind, r_n=args.rn, epochs=args.epochs,
                        period=args.period if args.kind == "linear_repeat" else None)
    text = export_schedule(build_schedule(spec))
    atomic_write_text(args.out, text)
    print(f"wrote {args.out} ({args.epochs} rows)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_with_overrides(args)
    report = run_training(cfg, cfg.output_dir)
    print(f"wrote {cfg.output_dir}/epochs.csv, summary.csv, run_meta.json")
    print(f"final val acc: mean {report.mean_final:.4f} std {report.std_final:.4f} "
          f"over {len(report.final_accs)} seed(s)")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_with_overrides(args)
    values = [v for v in args.values.split(",") if v]
    modes = tuple(m for m in (args.modes or "").split(",") if m)
    spec = SweepSpec(axis=args.axis, values=tuple(values), base=cfg, modes=modes)
    result = run_sweep(spec, workers=args.workers)
    write_sweep_outputs(spec, result, cfg.output_dir)
    print(f"wrote {cfg.output_dir}/ablation.csv, ablation_long.csv, sweep_meta.json")
    print(result.table_csv(), end="")
    return EXIT_OK


def cmd_cache(args) -> int:
    if args.cache_cmd == "inspect":
        records = read_salience_cache(args.path)
        print(f"{args.path}: {len(records)} record(s)")
        for key in sorted(records):
            print(f"  {key.hex()}  n={records[key].n}")
        return EXIT_OK
    # rebuild
    cfg = _load_with_overrides(args)
    if cfg.data["synthetic"] is not None and cfg.data["cache_path"] is None:
        raise ConfigError("cache rebuild for a synthetic dataset needs data.cache_path set")
    manifest = build_manifest(cfg, force_recompute=True)
    if args.dump_salience:
        for item in manifest.items:
            magnitude = gradient_magnitude(to_grayscale(item.pixels), manifest.stencil)
            dump_salience(args.dump_salience, f"item{item.id:05d}", magnitude,
                          manifest.profiles[item.id])
    path = cfg.data["cache_path"] or (Path(cfg.data["root"]) / "salience.cbms")
    print(f"rebuilt {path} ({len(manifest.items)} record(s))")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbm",
        description="curriculum-by-masking: salience-weighted patch masking "
                    "with easy-to-hard masking-ratio schedules",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preview", help="mask a single image and save the result")
    p.add_argument("--image", required=True, help="input PNG/PPM image")
    p.add_argument("--grid", default="4x4", help="patch grid, e.g. 4x4")
    p.add_argument("--ratio", type=float, required=True, help="masking ratio in [0, 1]")
    p.add_argument("--seed", type=int, default=None,
                   help=f"draw seed (default: ${ENV_SEED} or 0)")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--uniform", action="store_true",
                   help="sample patches uniformly instead of by salience")
    p.add_argument("--replacement", action="store_true",
                   help="draw with replacement (repeats mask fewer patches)")
    p.add_argument("--stencil", choices=STENCILS, default="central")
    p.add_argument("--dump-salience", metavar="DIR", default=None,
                   help="also write the salience CSV and magnitude PNG")
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("schedule", help="export a masking-ratio schedule as CSV")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--rn", type=float, required=True, help="maximum masking ratio")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--period", type=int, default=5, help="linear_repeat ramp length")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("train", help="train per a JSON config and write report CSVs")
    p.add_argument("--config", default=None, help="JSON config file (defaults apply)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. --set schedule.rn=0.5")
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="sweep one axis and write comparison tables")
    p.add_argument("--config", default=None, help="base JSON config file")
    p.add_argument("--axis", choices=("schedule", "rn", "grid", "period"), required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated axis values ('none' disables masking on the schedule axis)")
    p.add_argument("--modes", default=None,
                   help="comma-separated masking modes to cross with the axis (gradient,uniform)")
    p.add_argument("--workers", type=int, default=1, help="parallel (cell, seed) workers")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("cache", help="inspect or rebuild the salience cache")
    cache_sub = p.add_subparsers(dest="cache_cmd", required=True)
    pi = cache_sub.add_parser("inspect", help="list records of a cache file")
    pi.add_argument("--path", required=True)
    pi.set_defaults(func=cmd_cache)
    pr = cache_sub.add_parser("rebuild", help="recompute all profiles and rewrite the cache")
    pr.add_argument("--config", default=None)
    pr.add_argument("--set", action="append", metavar="KEY=VALUE")
    pr.add_argument("--dump-salience", metavar="DIR", default=None)
    pr.set_defaults(func=cmd_cache)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
