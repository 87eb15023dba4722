"""Load a dataset, split it, build the schema on training rows and encode everything once."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import DEFAULT_THRESHOLDS, ExperimentConfig
from ..features import (
    EncodedDataset,
    FeatureSchema,
    FrequencyTable,
    InteractionTable,
    build_schema,
    encode_table,
    generate_synthetic,
    load_encoded,
    load_movielens,
    save_encoded,
)
from .split import GROUPS, DatasetSplit, SplitSpec, split_dataset

log = logging.getLogger(__name__)


@dataclass
class PreparedData:
    table: InteractionTable
    split: DatasetSplit
    schema: FeatureSchema
    encoded: EncodedDataset
    normalizer: float

    def frequency_through(self, groups) -> FrequencyTable:
        """Item counts over the training groups seen so far, scaled by the dataset's max count."""
        rows = np.concatenate([self.split[g] for g in groups])
        return FrequencyTable.from_item_ids(self.encoded.item_ids[rows], self.schema.num_items, self.normalizer)


def load_table(cfg: ExperimentConfig) -> InteractionTable:
    if cfg.dataset == "synthetic":
        return generate_synthetic(cfg.synthetic_users, cfg.synthetic_items, cfg.synthetic_interactions,
                                  cfg.zipf_exponent, cfg.synthetic_seed)
    path = cfg.resolved_data_path()
    if cfg.dataset == "movielens":
        return load_movielens(path, cfg.label_threshold, cfg.use_title, cfg.year_as)
    from ..features.taobao import load_taobao

    return load_taobao(path, cfg.taobao_rows)


def resolve_threshold(cfg: ExperimentConfig, table: InteractionTable) -> int:
    if cfg.threshold is not None:
        return cfg.threshold
    if cfg.dataset in DEFAULT_THRESHOLDS:
        return DEFAULT_THRESHOLDS[cfg.dataset]
    _, counts = np.unique(table.items, return_counts=True)
    return int(np.percentile(counts, 80))


def fingerprint(table: InteractionTable) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(table.items).tobytes())
    h.update(np.ascontiguousarray(table.timestamps).tobytes())
    h.update(np.ascontiguousarray(table.labels).tobytes())
    return h.hexdigest()[:16]


def prepare(cfg: ExperimentConfig, table: InteractionTable | None = None,
            split: DatasetSplit | None = None, cache_dir=None) -> PreparedData:
    table = load_table(cfg) if table is None else table
    if split is None:
        spec = SplitSpec(resolve_threshold(cfg, table), cfg.split_policy, cfg.warm_k)
        split = split_dataset(table, spec)
    train_rows = np.concatenate([split[g] for g in GROUPS if g != "test"])
    schema = build_schema(table.take(np.sort(train_rows)), table.side_info_fields, cfg.embedding_dim,
                          item_catalog=np.unique(table.items))
    encoded = None
    cache = Path(cache_dir) / "encoded.npz" if cache_dir else None
    if cache is not None:
        encoded = load_encoded(cache, schema, rows=len(table))
        if encoded is not None:
            log.info("using cached encoding %s", cache)
    if encoded is None:
        encoded = encode_table(table, schema)
        if cache is not None:
            cache.parent.mkdir(parents=True, exist_ok=True)
            save_encoded(cache, encoded, schema)
    counts = np.bincount(encoded.item_ids, minlength=schema.num_items)
    return PreparedData(table, split, schema, encoded, float(counts.max()))
