"""Command-line entry point: split, train, eval, reproduce.

Settings resolve as command-line flags > ``--config`` YAML file > defaults.
The dataset root can also come from the ``CVARREC_DATA_ROOT`` environment
variable (``$CVARREC_DATA_ROOT/ml-1m`` for MovieLens).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import DATA_ROOT_ENV, ConfigError, ExperimentConfig, load_config
from .features import IngestionError
from .harness import (
    PHASES,
    DatasetSplit,
    MetricReport,
    SplitError,
    SplitSpec,
    Trainer,
    format_table,
    prepare,
    resolve_threshold,
    run_experiment,
    split_dataset,
    write_csv,
    write_long_format,
)
from .harness.data import fingerprint, load_table
from .harness.experiment import PHASE_DATA, _branch_plan, _eval_rng

log = logging.getLogger("cvarrec")

MANIFEST = "split.npz"
REPORT = "report.csv"
LONG_REPORT = "report_long.csv"

# grids for each reproducible artifact; everything else comes from the config
REPRODUCE = {
    "table1": {"backbone": ["DeepFM", "WideDeep"], "variant": ["backbone", "cvar", "cvar-init-only"],
               "x_freq": [1.0]},
    "table3": {"backbone": ["WideDeep"], "variant": ["cvar"], "x_freq": [0.01, 0.1, 0.25, 0.5, 1.0]},
    "figure2": {"backbone": "all", "variant": ["backbone", "cvar", "cvar-init-only"], "x_freq": [1.0]},
}

# keys that do not change what a grid cell computes
_HASH_EXCLUDE = {"backbone", "seeds", "jobs", "out"}


class CommandError(RuntimeError):
    pass


def config_hash(cfg: ExperimentConfig) -> str:
    d = {k: v for k, v in cfg.to_dict().items() if k not in _HASH_EXCLUDE}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip().replace("-", "_")] = yaml.safe_load(value)
    return out


def resolve_config(args) -> ExperimentConfig:
    overrides = _parse_set(getattr(args, "set", None))
    for name in ("dataset", "data_path", "backbone", "variant", "jobs", "out"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "seed", None):
        overrides["seeds"] = list(args.seed)
    if getattr(args, "x_freq", None):
        overrides["x_freq"] = list(args.x_freq)
    return load_config(args.config, overrides).validate()


# --- split --------------------------------------------------------------------


def _print_split(split: DatasetSplit, out=None) -> None:
    out = out or sys.stdout
    spec = split.spec
    print(f"threshold N={spec.threshold} policy={spec.policy}", file=out)
    print(f"old items: {split.n_old_items}  new items: {split.n_new_items}  "
          f"new:old ratio {split.new_old_ratio:.3f}", file=out)
    print(f"{'group':<8}{'items':>8}{'instances':>12}", file=out)
    for name, s in split.stats.items():
        if isinstance(s, dict):
            print(f"{name:<8}{s['items']:>8}{s['instances']:>12}", file=out)


def cmd_split(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    table = load_table(cfg)
    spec = SplitSpec(resolve_threshold(cfg, table), cfg.split_policy, cfg.warm_k)
    split = split_dataset(table, spec)
    if args.dry_run:
        _print_split(split)
        print("dry run: no manifest written")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    split.save(out / MANIFEST, fingerprint(table))
    _print_split(split)
    print(f"manifest written to {out / MANIFEST}")
    return 0


# --- train --------------------------------------------------------------------


def _load_manifest(cfg: ExperimentConfig) -> tuple[DatasetSplit, dict]:
    path = Path(cfg.out) / MANIFEST
    if not path.exists():
        raise CommandError(f"no split manifest at {path}; run `cvarrec split` with the same config and --out first")
    return DatasetSplit.load(path)


def _check_manifest(cfg: ExperimentConfig, split: DatasetSplit, meta: dict, table) -> None:
    if meta.get("fingerprint") and meta["fingerprint"] != fingerprint(table):
        raise CommandError("the split manifest was built from different data; rerun `cvarrec split`")
    if split.spec.threshold != resolve_threshold(cfg, table) or split.spec.policy != cfg.split_policy:
        raise CommandError("the split manifest was built with different split settings; rerun `cvarrec split`")


def phase_plan(cfg: ExperimentConfig, split: DatasetSplit) -> list[str]:
    """Human-readable description of everything a train run would do."""
    plan = _branch_plan(cfg)
    lines = [f"cells: {len(cfg.backbone) * len(cfg.seeds)} "
             f"(backbones {', '.join(cfg.backbone)}; seeds {cfg.seeds})",
             f"variants: {', '.join(cfg.variant)}; x_freq overrides {cfg.x_freq}; batch {cfg.batch_size}"]
    for i, phase in enumerate(PHASES):
        group = PHASE_DATA[phase]
        n = len(split[group])
        epochs = cfg.pretrain_epochs if i == 0 else cfg.warm_epochs
        steps = math.ceil(n / cfg.batch_size) * epochs
        if i == 0:
            what = "backbone" + (" + cvar" if plan["main"]["train_cvar"] else "")
        else:
            parts = []
            for name, spec in plan.items():
                trained = [k for k, on in (("backbone", spec["warm_backbone"]), ("cvar", spec["warm_cvar"])) if on]
                parts.append(f"{name}: {'+'.join(trained)}")
            what = "; ".join(parts)
        lines.append(f"  {phase:<7} train on {group:<6} {n:>8} rows, {epochs} epoch(s), {steps} steps "
                     f"[{what}] -> evaluate on {len(split['test'])} test rows")
    return lines


def _run_grid(cfg: ExperimentConfig, out: Path, dry_run: bool, split: DatasetSplit | None = None,
              table=None) -> int:
    if split is None:
        split, meta = _load_manifest(cfg)
    else:
        meta = {}
    if dry_run:
        print("\n".join(phase_plan(cfg, split)))
        print("dry run: nothing trained")
        return 0
    table = load_table(cfg) if table is None else table
    if meta:
        _check_manifest(cfg, split, meta, table)
    prep = prepare(cfg, table=table, split=split, cache_dir=out / "cache")
    ckpt_root = out / "checkpoints" / config_hash(cfg)
    reports = run_experiment(cfg, prep, ckpt_root)
    write_csv(out / REPORT, reports, cfg)
    write_long_format(out / LONG_REPORT, reports)
    print(format_table(reports))
    print(f"report written to {out / REPORT}")
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    return _run_grid(cfg, out, args.dry_run)


# --- eval ---------------------------------------------------------------------


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    """Re-score the last saved phase of every cell on the test set."""
    out = Path(cfg.out)
    split, meta = _load_manifest(cfg)
    ckpt_root = out / "checkpoints" / config_hash(cfg)
    cells = [(k, s) for k in cfg.backbone for s in cfg.seeds]
    missing = [f"{k}_seed{s}" for k, s in cells if not list((ckpt_root / f"{k}_seed{s}").glob("phase*/done.json"))]
    if missing:
        raise CommandError(f"no checkpoints for {', '.join(missing)} under {ckpt_root}; run `cvarrec train` first")
    if args.dry_run:
        print(f"would evaluate {len(cells)} cells from {ckpt_root} at x_freq {cfg.x_freq}")
        return 0
    table = load_table(cfg)
    _check_manifest(cfg, split, meta, table)
    prep = prepare(cfg, table=table, split=split, cache_dir=out / "cache")
    test = prep.split["test"]
    plan = _branch_plan(cfg)
    reports = []
    for kind, seed in cells:
        last = sorted((ckpt_root / f"{kind}_seed{seed}").glob("phase*/done.json"))[-1].parent
        info = json.loads((last / "done.json").read_text())
        pi = info["phase_idx"]
        for branch in info["branches"]:
            spec = plan[branch]
            t = Trainer(cfg, prep.schema, kind, seed)
            t.load(last / branch)
            if spec["native"]:
                a, f = t.evaluate(prep.encoded, test)
                for variant in spec["native"]:
                    reports.append(MetricReport(PHASES[pi], variant, kind, seed, spec.get("tag", math.nan), a, f))
            for xf in cfg.x_freq if spec["substituted"] else []:
                a, f = t.evaluate(prep.encoded, test, xf, _eval_rng(seed, pi, xf))
                for variant in spec["substituted"]:
                    reports.append(MetricReport(PHASES[pi], variant, kind, seed, xf, a, f))
    write_csv(out / "eval.csv", reports, cfg)
    print(format_table(reports))
    print(f"evaluation written to {out / 'eval.csv'}")
    return 0


# --- reproduce ----------------------------------------------------------------


def cmd_reproduce(cfg: ExperimentConfig, args) -> int:
    grid = REPRODUCE[args.artifact]
    d = cfg.to_dict()
    d.update(grid)
    cfg = ExperimentConfig.from_dict(d).validate()
    out = Path(cfg.out) / args.artifact
    if args.dry_run:
        table = load_table(cfg)
        split = split_dataset(table, SplitSpec(resolve_threshold(cfg, table), cfg.split_policy, cfg.warm_k))
        print("\n".join(phase_plan(cfg, split)))
        print("dry run: nothing trained")
        return 0
    table = load_table(cfg)
    split = split_dataset(table, SplitSpec(resolve_threshold(cfg, table), cfg.split_policy, cfg.warm_k))
    out.mkdir(parents=True, exist_ok=True)
    split.save(out / MANIFEST, fingerprint(table))
    _print_split(split)
    return _run_grid(cfg, out, False, split=split, table=table)


# --- argument parsing ---------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--out", help="output directory (default: runs)")
    p.add_argument("--seed", type=int, nargs="+", help="one or more run seeds")
    p.add_argument("--jobs", type=int, help="worker processes for independent grid cells")
    p.add_argument("--dry-run", action="store_true", help="print what would run and exit")
    p.add_argument("--dataset", choices=["movielens", "taobao", "synthetic"])
    p.add_argument("--data-path", dest="data_path", help=f"dataset directory (or set ${DATA_ROOT_ENV})")
    p.add_argument("--backbone", nargs="+", help="backbone names, or 'all'")
    p.add_argument("--variant", nargs="+", help="backbone, cvar, cvar-init-only, or 'all'")
    p.add_argument("--x-freq", dest="x_freq", type=float, nargs="+", help="frequency overrides for CVAR evaluation")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvarrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("split", help="split the dataset and write the manifest")
    _common(p)
    p.set_defaults(func=cmd_split)
    p = sub.add_parser("train", help="run the phase protocol over the configured grid")
    _common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("eval", help="re-score the latest checkpoints on the test set")
    _common(p)
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("reproduce", help="run a predefined experiment grid")
    p.add_argument("artifact", choices=sorted(REPRODUCE), help="which grid to run")
    _common(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def _normalize_lists(args) -> None:
    # single-token 'all' means the keyword, not a one-element list
    for name in ("backbone", "variant"):
        value = getattr(args, name, None)
        if value == ["all"]:
            setattr(args, name, "all")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _normalize_lists(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(cfg, args)
    except (CommandError, SplitError, IngestionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
