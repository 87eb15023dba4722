"""Four-phase protocol: pretrain on old items, then warm-a/b/c, evaluating on the fixed test set after each."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..config import ExperimentConfig
from .data import PreparedData
from .split import WARM_GROUPS
from .training import PhaseLog, Trainer

log = logging.getLogger(__name__)

PHASES = ("cold", "warm-a", "warm-b", "warm-c")
PHASE_DATA = {"cold": "old", "warm-a": "warm_a", "warm-b": "warm_b", "warm-c": "warm_c"}
CSV_COLUMNS = ["phase", "variant", "backbone", "seed", "x_freq", "auc", "f1", "l_ctr", "l_rec", "l_w"]


@dataclass
class MetricReport:
    phase: str
    variant: str
    backbone: str
    seed: int
    x_freq: float
    auc: float
    f1: float
    l_ctr: float = float("nan")
    l_rec: float = float("nan")
    l_w: float = float("nan")

    def key(self) -> tuple:
        # native-embedding rows carry NaN, which cannot be a dict key
        xf = None if math.isnan(self.x_freq) else self.x_freq
        return (self.backbone, self.variant, xf, self.phase)


@dataclass
class MetricSummary:
    backbone: str
    variant: str
    x_freq: float | None
    phase: str
    runs_auc: list[float] = field(default_factory=list)
    runs_f1: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    @property
    def auc(self) -> float:
        return float(np.mean(self.runs_auc))

    @property
    def f1(self) -> float:
        return float(np.mean(self.runs_f1))


def summarize(reports: list[MetricReport]) -> dict[tuple, MetricSummary]:
    out: dict[tuple, MetricSummary] = {}
    for r in reports:
        key = r.key()
        s = out.setdefault(key, MetricSummary(r.backbone, r.variant, key[2], r.phase))
        s.runs_auc.append(r.auc)
        s.runs_f1.append(r.f1)
        s.seeds.append(r.seed)
    return out


def mean_auc(reports, backbone: str, variant: str, phase: str, x_freq: float | None = None) -> float:
    vals = [r.auc for r in reports if r.backbone == backbone and r.variant == variant and r.phase == phase
            and (x_freq is None or math.isnan(r.x_freq) or r.x_freq == x_freq)]
    if not vals:
        raise KeyError(f"no reports for {backbone}/{variant}/{phase}")
    return float(np.mean(vals))


def _branch_plan(cfg: ExperimentConfig) -> dict[str, dict]:
    """Which model copies to train in the warm phases, and which variants read from each.

    ``main`` trains CVAR in every phase. ``init`` is forked after pretraining,
    has CVAR-generated item rows written in once, then trains only the
    backbone. A separate ``plain`` copy exists only when the main copy's
    backbone stops training in the warm phases (``warm_train="cvar"``).
    """
    v = set(cfg.variant)
    plan = {}
    wants_cvar = "cvar" in v
    plan["main"] = {"train_cvar": wants_cvar or "cvar-init-only" in v,
                    "warm_backbone": not wants_cvar or cfg.warm_train == "both",
                    "warm_cvar": wants_cvar,
                    "native": [], "substituted": []}
    if wants_cvar:
        plan["main"]["substituted"].append("cvar")
    if "backbone" in v:
        if plan["main"]["warm_backbone"]:
            plan["main"]["native"].append("backbone")
        else:
            plan["plain"] = {"warm_backbone": True, "warm_cvar": False, "native": ["backbone"], "substituted": []}
    if "cvar-init-only" in v:
        plan["init"] = {"warm_backbone": True, "warm_cvar": False, "native": ["cvar-init-only"], "substituted": [],
                        "tag": INIT_X_FREQ}
    return plan


INIT_X_FREQ = 1.0


def _eval_rng(seed: int, phase_idx: int, x_freq: float) -> np.random.Generator:
    return np.random.default_rng([seed, phase_idx, int(round(x_freq * 1_000_000))])


def _reports_for(trainer: Trainer, prep: PreparedData, cfg: ExperimentConfig, kind: str, seed: int,
                 phase_idx: int, native: list[str], substituted: list[str], plog: PhaseLog,
                 cvar_losses: bool, tag: float = math.nan) -> list[MetricReport]:
    test = prep.split["test"]
    phase = PHASES[phase_idx]
    out = []
    if native:
        a, f = trainer.evaluate(prep.encoded, test)
        for variant in native:
            losses = (plog.l_ctr, plog.l_rec, plog.l_w) if (cvar_losses and variant != "backbone") else (plog.l_bce, math.nan, math.nan)
            out.append(MetricReport(phase, variant, kind, seed, tag, a, f, *losses))
    for xf in cfg.x_freq if substituted else []:
        a, f = trainer.evaluate(prep.encoded, test, xf, _eval_rng(seed, phase_idx, xf))
        for variant in substituted:
            out.append(MetricReport(phase, variant, kind, seed, xf, a, f, plog.l_ctr, plog.l_rec, plog.l_w))
    return out


def run_cell(cfg: ExperimentConfig, prep: PreparedData, kind: str, seed: int,
             checkpoint_dir=None, on_phase=None) -> list[MetricReport]:
    """Train and evaluate every requested variant for one (backbone, seed) pair.

    Variants share as much work as is exactly equivalent: one pretraining
    run, and one model copy for Backbone-only and CVAR whenever the backbone
    keeps training in the warm phases. With ``checkpoint_dir`` set each
    finished phase is saved and an interrupted cell resumes from the last one.
    """
    test_mask = np.zeros(len(prep.encoded), dtype=bool)
    test_mask[prep.split["test"]] = True
    plan = _branch_plan(cfg)
    ckpt = Path(checkpoint_dir) if checkpoint_dir else None
    reports: list[MetricReport] = []
    branches: dict[str, Trainer] = {}
    start = 0
    if ckpt is not None:
        done = sorted(ckpt.glob("phase*/done.json"))
        if done:
            last = done[-1].parent
            meta = json.loads((last / "done.json").read_text())
            reports = [MetricReport(**r) for r in meta["reports"]]
            for name in meta["branches"]:
                t = Trainer(cfg, prep.schema, kind, seed)
                t.load(last / name)
                branches[name] = t
            start = meta["phase_idx"] + 1
            log.info("%s seed %d: resuming after phase %s", kind, seed, PHASES[meta["phase_idx"]])

    for pi in range(start, len(PHASES)):
        phase = PHASES[pi]
        rows = prep.split[PHASE_DATA[phase]]
        if test_mask[rows].any():
            raise RuntimeError("test rows leaked into a training phase")
        seen = ["old", *WARM_GROUPS[:pi]]
        freq = prep.frequency_through(seen)
        if pi == 0:
            main = Trainer(cfg, prep.schema, kind, seed)
            plog = main.train_phase(prep.encoded, rows, freq, cfg.pretrain_epochs,
                                    train_backbone=True, train_cvar=plan["main"]["train_cvar"])
            branches["main"] = main
            cold_sub = ["cvar"] if "cvar" in cfg.variant else []
            cold_native = ["backbone"] if "backbone" in cfg.variant else []
            reports += _reports_for(main, prep, cfg, kind, seed, 0, cold_native, cold_sub, plog,
                                    cvar_losses=plan["main"]["train_cvar"])
            if "plain" in plan:
                branches["plain"] = main.clone()
            if "init" in plan:
                init = main.clone()
                new_rows = np.concatenate([prep.split[g] for g in (*WARM_GROUPS, "test")])
                init.init_items_from_cvar(prep.encoded, new_rows, INIT_X_FREQ, _eval_rng(seed, 0, INIT_X_FREQ))
                branches["init"] = init
                reports += _reports_for(init, prep, cfg, kind, seed, 0, ["cvar-init-only"], [], plog,
                                        cvar_losses=True, tag=INIT_X_FREQ)
        else:
            for name, spec in plan.items():
                t = branches[name]
                plog = t.train_phase(prep.encoded, rows, freq, cfg.warm_epochs,
                                     train_backbone=spec["warm_backbone"], train_cvar=spec["warm_cvar"])
                reports += _reports_for(t, prep, cfg, kind, seed, pi, spec["native"], spec["substituted"],
                                        plog, cvar_losses=spec["warm_cvar"], tag=spec.get("tag", math.nan))
        if ckpt is not None:
            d = ckpt / f"phase{pi}"
            for name, t in branches.items():
                t.save(d / name)
            (d / "done.json").write_text(json.dumps({"phase_idx": pi, "branches": list(branches),
                                                     "reports": [asdict(r) for r in reports]}))
        if on_phase is not None:
            on_phase(pi, branches)
    return reports


def _cell_job(args):
    cfg, prep, kind, seed, ckpt = args
    return run_cell(cfg, prep, kind, seed, ckpt)


def run_experiment(cfg: ExperimentConfig, prep: PreparedData, checkpoint_root=None) -> list[MetricReport]:
    """Every (backbone, seed) cell of the grid; deterministic given the seeds."""
    cfg.validate()
    cells = [(kind, seed) for kind in cfg.backbone for seed in cfg.seeds]
    jobs = [(cfg, prep, kind, seed, Path(checkpoint_root) / f"{kind}_seed{seed}" if checkpoint_root else None)
            for kind, seed in cells]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = []
        for job in jobs:
            log.info("running %s seed %d", job[2], job[3])
            results.append(_cell_job(job))
    return [r for cell in results for r in cell]


# --- output -------------------------------------------------------------------


def write_csv(path, reports: list[MetricReport], cfg: ExperimentConfig | None = None) -> None:
    """Report CSV; the resolved config is embedded as ``#``-prefixed header lines."""
    path = Path(path)
    buf = io.StringIO()
    if cfg is not None:
        for line in json.dumps(cfg.to_dict(), sort_keys=True, indent=1).splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf)
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([getattr(r, c) for c in CSV_COLUMNS])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    tmp.replace(path)


def read_csv(path) -> list[MetricReport]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    types = {f.name: f.type for f in fields(MetricReport)}
    out = []
    for row in csv.DictReader(lines):
        kw = {}
        for k, v in row.items():
            kw[k] = v if types[k] == "str" else (int(v) if types[k] == "int" else float(v))
        out.append(MetricReport(**kw))
    return out


def read_csv_config(path) -> dict:
    lines = [ln[2:] for ln in Path(path).read_text().splitlines() if ln.startswith("# ")]
    return json.loads("\n".join(lines)) if lines else {}


def write_long_format(path, reports: list[MetricReport]) -> None:
    """Plot-ready long table: one row per (backbone, variant, x_freq, phase, metric) with mean and runs."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["backbone", "variant", "x_freq", "phase", "phase_index", "metric", "mean", "runs"])
    for s in summarize(reports).values():
        for metric, runs in (("auc", s.runs_auc), ("f1", s.runs_f1)):
            w.writerow([s.backbone, s.variant, "" if s.x_freq is None else s.x_freq, s.phase, PHASES.index(s.phase), metric,
                        float(np.mean(runs)), " ".join(f"{x:.6f}" for x in runs)])
    path.write_text(buf.getvalue())


def format_table(reports: list[MetricReport]) -> str:
    """Rows per (backbone, variant, x_freq); AUC and F1 columns per phase, means over seeds."""
    summary = summarize(reports)
    rows = sorted({(s.backbone, s.variant, s.x_freq) for s in summary.values()},
                  key=lambda r: (r[0], r[1], -1.0 if r[2] is None else r[2]))
    head = f"{'backbone':<10}{'variant':<16}{'x_freq':>7} " + "".join(f"{p + ' AUC':>13}{'F1':>8}" for p in PHASES)
    lines = [head, "-" * len(head)]
    for b, v, x in rows:
        cells = []
        for p in PHASES:
            s = summary.get((b, v, x, p))
            cells.append(f"{s.auc:>13.4f}{s.f1:>8.4f}" if s else f"{'-':>13}{'-':>8}")
        xs = "native" if x is None else f"{x:g}"
        lines.append(f"{b:<10}{v:<16}{xs:>7} " + "".join(cells))
    return "\n".join(lines)
