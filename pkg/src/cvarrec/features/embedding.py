from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as N
from .schema import FeatureSchema, SampleBatch

ITEM_TABLE = "item"


def table_name(field: str) -> str:
    return f"field/{field}"


@dataclass
class EmbeddingBundle:
    v_i: N.Tensor
    v_I: N.Tensor
    v_X: N.Tensor
    touched: dict[str, np.ndarray]

    @property
    def touched_items(self) -> np.ndarray:
        return self.touched[ITEM_TABLE]


def init_tables(schema: FeatureSchema, rng: np.random.Generator, std: float = 0.01) -> N.ParameterStore:
    """One [vocab x d] table per categorical field plus the [num_items x d] item table."""
    d = schema.embedding_dim
    store = N.ParameterStore()
    store.add(ITEM_TABLE, N.truncated_normal(rng, (schema.num_items, d), std))
    for f in schema.categorical_fields:
        store.add(table_name(f.name), N.truncated_normal(rng, (f.size, d), std))
    return store


def embed(batch: SampleBatch, tables: N.ParameterStore, schema: FeatureSchema) -> EmbeddingBundle:
    """Look up v_i, assemble v_X (field embeddings then raw continuous values) and slice out v_I."""
    touched = {ITEM_TABLE: np.unique(batch.item_ids)}
    v_i = N.embedding(tables[ITEM_TABLE], batch.item_ids)
    cat_parts, side_cat = [], []
    for f in schema.categorical_fields:
        name = table_name(f.name)
        ids = batch.categorical[f.name]
        if f.multi:
            w = batch.bag_weights[f.name]
            e = N.embedding_bag(tables[name], ids, w)
            touched[name] = np.unique(ids[w != 0])
        else:
            e = N.embedding(tables[name], ids)
            touched[name] = np.unique(ids)
        cat_parts.append(e)
        if f.name in schema.side_info_fields:
            side_cat.append(e)
    cont_parts, side_cont = [], []
    for f in schema.continuous_fields:
        c = N.Tensor(batch.continuous[f.name].reshape(-1, 1))
        cont_parts.append(c)
        if f.name in schema.side_info_fields:
            side_cont.append(c)
    v_X = N.concat(cat_parts + cont_parts, axis=1)
    v_I = N.concat(side_cat + side_cont, axis=1)
    return EmbeddingBundle(v_i, v_I, v_X, touched)


class EmbeddingLayer:
    """The phi parameter group: every embedding table keyed by field."""

    def __init__(self, schema: FeatureSchema, rng: np.random.Generator, std: float = 0.01):
        self.schema = schema
        self.params = init_tables(schema, rng, std)

    def __call__(self, batch: SampleBatch) -> EmbeddingBundle:
        return embed(batch, self.params, self.schema)

    def side_info(self, batch: SampleBatch) -> N.Tensor:
        return self(batch).v_I

    def write_item_rows(self, rows: np.ndarray, values: np.ndarray) -> None:
        self.params[ITEM_TABLE].data[np.asarray(rows, dtype=np.intp)] = values
