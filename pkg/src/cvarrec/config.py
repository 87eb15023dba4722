"""Experiment configuration: defaults, YAML loading and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backbones import BackboneKind

VARIANTS = ("backbone", "cvar", "cvar-init-only")
DATASETS = ("movielens", "taobao", "synthetic")
DEFAULT_THRESHOLDS = {"movielens": 200, "taobao": 2000}
DATA_ROOT_ENV = "CVARREC_DATA_ROOT"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"
    data_path: str | None = None
    label_threshold: int = 4
    use_title: bool = True
    year_as: str = "continuous"
    taobao_rows: int | None = None

    synthetic_users: int = 500
    synthetic_items: int = 200
    synthetic_interactions: int = 40_000
    zipf_exponent: float = 1.2
    synthetic_seed: int = 0

    # None: 200 for MovieLens, 2000 for Taobao, the 80th item-count percentile for synthetic
    threshold: int | None = None
    split_policy: str = "quarters"
    warm_k: int = 20

    backbone: list[str] = field(default_factory=lambda: ["DeepFM"])
    variant: list[str] = field(default_factory=lambda: list(VARIANTS))
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    embedding_dim: int = 16
    hidden: list[int] = field(default_factory=lambda: [16, 16])
    latent_dim: int = 16
    alpha: float = 1.0
    beta: float = 1.0
    learning_rate: float = 0.001
    batch_size: int = 2048
    pretrain_epochs: int = 1
    warm_epochs: int = 1
    warm_train: str = "both"
    eval_mode: str = "sample"
    x_freq: list[float] = field(default_factory=lambda: [1.0])
    f1_threshold: float = 0.5
    freeze_audit: bool = True

    out: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.backbone, str):
            self.backbone = [k.value for k in BackboneKind] if self.backbone == "all" else [self.backbone]
        if isinstance(self.variant, str):
            self.variant = list(VARIANTS) if self.variant == "all" else [self.variant]
        if isinstance(self.seeds, int):
            self.seeds = [self.seeds]
        if isinstance(self.x_freq, (int, float)):
            self.x_freq = [float(self.x_freq)]

    def validate(self) -> "ExperimentConfig":
        errors = []
        if self.dataset not in DATASETS:
            errors.append(f"dataset must be one of {DATASETS}")
        if self.dataset in ("movielens", "taobao") and not self.resolved_data_path():
            errors.append(f"dataset {self.dataset!r} needs data_path or ${DATA_ROOT_ENV}")
        try:
            self.backbone = [BackboneKind.parse(b).value for b in self.backbone]
        except ValueError as exc:
            errors.append(str(exc))
        bad = [v for v in self.variant if v not in VARIANTS]
        if bad:
            errors.append(f"unknown variants {bad}; choose from {VARIANTS}")
        if not self.seeds:
            errors.append("at least one seed is required")
        for name in ("embedding_dim", "latent_dim", "batch_size", "synthetic_users", "synthetic_items",
                     "synthetic_interactions", "jobs", "warm_k"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        for name in ("pretrain_epochs", "warm_epochs"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be non-negative")
        if self.learning_rate <= 0:
            errors.append("learning_rate must be positive")
        if self.alpha < 0 or self.beta < 0:
            errors.append("alpha and beta must be non-negative")
        if not self.hidden or any(h <= 0 for h in self.hidden):
            errors.append("hidden sizes must be positive")
        if not self.x_freq or any(not 0.0 <= x <= 1.0 for x in self.x_freq):
            errors.append("x_freq overrides must lie in [0, 1]")
        if not 0.0 < self.f1_threshold < 1.0:
            errors.append("f1_threshold must lie in (0, 1)")
        if self.threshold is not None and self.threshold < 0:
            errors.append("threshold must be non-negative")
        if self.split_policy not in ("quarters", "prefix"):
            errors.append("split_policy must be 'quarters' or 'prefix'")
        if self.warm_train not in ("both", "cvar"):
            errors.append("warm_train must be 'both' or 'cvar'")
        if self.eval_mode not in ("sample", "mean"):
            errors.append("eval_mode must be 'sample' or 'mean'")
        if self.year_as not in ("continuous", "categorical"):
            errors.append("year_as must be 'continuous' or 'categorical'")
        if self.zipf_exponent <= 0:
            errors.append("zipf_exponent must be positive")
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    def resolved_data_path(self) -> str | None:
        import os

        if self.data_path:
            return self.data_path
        root = os.environ.get(DATA_ROOT_ENV)
        if not root:
            return None
        sub = {"movielens": "ml-1m", "taobao": "taobao"}.get(self.dataset, "")
        return str(Path(root) / sub)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the YAML file, then ``overrides`` (command-line flags)."""
    values: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        values.update(_flatten(loaded))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(values)


def _flatten(d: dict) -> dict:
    """Allow grouping keys under sections (``model: {alpha: 1}``) in the YAML file."""
    sections = {"data", "split", "model", "train", "output"}
    out = {}
    for k, v in d.items():
        if k in sections and isinstance(v, dict):
            out.update(v)
        else:
            out[k] = v
    return out
