"""Vocabularies, min-max scaling, batch encoding and item frequencies."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .table import CATEGORICAL, CONTINUOUS, MULTI, InteractionTable

OOV = 0


@dataclass
class CategoricalField:
    name: str
    vocab: dict
    multi: bool = False

    @property
    def size(self) -> int:
        return len(self.vocab) + 1

    def encode(self, values) -> np.ndarray:
        get = self.vocab.get
        return np.fromiter((get(v, OOV) for v in values), dtype=np.int64, count=len(values))


@dataclass
class ContinuousField:
    name: str
    lo: float
    hi: float

    def encode(self, values) -> np.ndarray:
        x = np.asarray(values, dtype=np.float64)
        span = self.hi - self.lo
        if span <= 0:
            return np.zeros_like(x)
        return np.clip((x - self.lo) / span, 0.0, 1.0)


@dataclass
class FeatureSchema:
    item_id_field: str
    item_vocab: dict
    categorical_fields: list[CategoricalField]
    continuous_fields: list[ContinuousField]
    side_info_fields: list[str]
    embedding_dim: int = 16

    def __post_init__(self):
        names = [f.name for f in self.categorical_fields] + [f.name for f in self.continuous_fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate field names in {names}")
        if self.item_id_field in self.side_info_fields:
            raise ValueError("the item ID cannot be part of the side information")
        unknown = set(self.side_info_fields) - set(names)
        if unknown:
            raise ValueError(f"side-info fields {sorted(unknown)} are not feature fields")
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")

    @property
    def num_items(self) -> int:
        return len(self.item_vocab) + 1

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.categorical_fields] + [f.name for f in self.continuous_fields]

    def side_categorical(self) -> list[CategoricalField]:
        return [f for f in self.categorical_fields if f.name in self.side_info_fields]

    def side_continuous(self) -> list[ContinuousField]:
        return [f for f in self.continuous_fields if f.name in self.side_info_fields]

    @property
    def x_width(self) -> int:
        return self.embedding_dim * len(self.categorical_fields) + len(self.continuous_fields)

    @property
    def side_width(self) -> int:
        return self.embedding_dim * len(self.side_categorical()) + len(self.side_continuous())

    def side_columns(self) -> np.ndarray:
        """Column indices of v_I inside v_X."""
        d = self.embedding_dim
        cols = []
        for i, f in enumerate(self.categorical_fields):
            if f.name in self.side_info_fields:
                cols.extend(range(i * d, (i + 1) * d))
        base = d * len(self.categorical_fields)
        for j, f in enumerate(self.continuous_fields):
            if f.name in self.side_info_fields:
                cols.append(base + j)
        return np.asarray(cols, dtype=np.intp)

    def to_dict(self) -> dict:
        def keyed(vocab):
            return [[_jsonable(k), v] for k, v in vocab.items()]

        return {
            "item_id_field": self.item_id_field,
            "item_vocab": keyed(self.item_vocab),
            "categorical_fields": [
                {"name": f.name, "multi": f.multi, "vocab": keyed(f.vocab)} for f in self.categorical_fields
            ],
            "continuous_fields": [
                {"name": f.name, "lo": f.lo, "hi": f.hi} for f in self.continuous_fields
            ],
            "side_info_fields": list(self.side_info_fields),
            "embedding_dim": self.embedding_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        def unkey(pairs):
            return {_hashable(k): v for k, v in pairs}

        return cls(
            item_id_field=d["item_id_field"],
            item_vocab=unkey(d["item_vocab"]),
            categorical_fields=[CategoricalField(f["name"], unkey(f["vocab"]), f["multi"])
                                for f in d["categorical_fields"]],
            continuous_fields=[ContinuousField(f["name"], f["lo"], f["hi"]) for f in d["continuous_fields"]],
            side_info_fields=list(d["side_info_fields"]),
            embedding_dim=d["embedding_dim"],
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _hashable(v):
    return tuple(v) if isinstance(v, list) else v


def _build_vocab(values) -> dict:
    uniq = sorted(set(_jsonable(v) for v in values), key=lambda v: (str(type(v)), v))
    return {v: i + 1 for i, v in enumerate(uniq)}


def build_schema(table: InteractionTable, side_info_fields=None, embedding_dim: int = 16,
                 item_catalog=None) -> FeatureSchema:
    """Build vocabularies and continuous ranges from ``table`` (the training data).

    Index 0 of every vocabulary is the out-of-vocabulary bucket. The item-ID
    vocabulary comes from ``item_catalog`` when given, so items that appear
    only later still own an embedding row.
    """
    if len(table) == 0:
        raise ValueError("cannot build a schema from an empty training split")
    if not table.kinds:
        raise ValueError("field list is empty")
    side = list(table.side_info_fields if side_info_fields is None else side_info_fields)
    cats, conts = [], []
    for name, kind in table.kinds.items():
        col = table.columns[name]
        if kind == CATEGORICAL:
            cats.append(CategoricalField(name, _build_vocab(col)))
        elif kind == MULTI:
            tokens = (tok for row in col for tok in row)
            cats.append(CategoricalField(name, _build_vocab(tokens), multi=True))
        elif kind == CONTINUOUS:
            x = np.asarray(col, dtype=np.float64)
            conts.append(ContinuousField(name, float(x.min()), float(x.max())))
        else:
            raise ValueError(f"unknown field kind {kind!r} for {name!r}")
    items = table.items if item_catalog is None else item_catalog
    return FeatureSchema(table.item_field, _build_vocab(items), cats, conts, side, embedding_dim)


@dataclass
class SampleBatch:
    item_ids: np.ndarray
    categorical: dict[str, np.ndarray]
    continuous: dict[str, np.ndarray]
    labels: np.ndarray
    x_freq: np.ndarray
    bag_weights: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.item_ids)
        arrays = [self.labels, self.x_freq, *self.categorical.values(), *self.continuous.values()]
        if any(len(a) != n for a in arrays):
            raise ValueError("all batch arrays must share the batch length")

    def __len__(self) -> int:
        return len(self.item_ids)

    def with_x_freq(self, value: float) -> "SampleBatch":
        return SampleBatch(self.item_ids, self.categorical, self.continuous, self.labels,
                           np.full(len(self), float(value)), self.bag_weights)


@dataclass
class EncodedDataset:
    """The full table encoded once; batches are row selections of it."""

    item_ids: np.ndarray
    categorical: dict[str, np.ndarray]
    bag_weights: dict[str, np.ndarray]
    continuous: dict[str, np.ndarray]
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.item_ids)

    def batch(self, rows, freq: "FrequencyTable | None" = None) -> SampleBatch:
        rows = np.asarray(rows, dtype=np.intp)
        items = self.item_ids[rows]
        x_freq = freq.lookup(items) if freq is not None else np.zeros(len(rows))
        return SampleBatch(
            item_ids=items,
            categorical={k: v[rows] for k, v in self.categorical.items()},
            continuous={k: v[rows] for k, v in self.continuous.items()},
            labels=self.labels[rows],
            x_freq=x_freq,
            bag_weights={k: v[rows] for k, v in self.bag_weights.items()},
        )


def _encode_multi(f: CategoricalField, col) -> tuple[np.ndarray, np.ndarray]:
    cache: dict = {}
    encoded = []
    for row in col:
        key = tuple(row)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = [f.vocab.get(_jsonable(t), OOV) for t in key]
        encoded.append(hit)
    width = max(1, max((len(e) for e in encoded), default=1))
    ids = np.zeros((len(encoded), width), dtype=np.int64)
    weights = np.zeros((len(encoded), width))
    for r, e in enumerate(encoded):
        if e:
            ids[r, :len(e)] = e
            weights[r, :len(e)] = 1.0 / len(e)
    return ids, weights


def encode_table(table: InteractionTable, schema: FeatureSchema) -> EncodedDataset:
    item_ids = np.fromiter((schema.item_vocab.get(_jsonable(v), OOV) for v in table.items),
                           dtype=np.int64, count=len(table))
    cats, bags = {}, {}
    for f in schema.categorical_fields:
        col = table.columns[f.name]
        if f.multi:
            cats[f.name], bags[f.name] = _encode_multi(f, col)
        else:
            cats[f.name] = f.encode([_jsonable(v) for v in col])
    conts = {f.name: f.encode(table.columns[f.name]) for f in schema.continuous_fields}
    labels = np.asarray(table.labels, dtype=np.float64)
    return EncodedDataset(item_ids, cats, bags, conts, labels)


def encode_batch(rows: InteractionTable, schema: FeatureSchema, freq: "FrequencyTable | None" = None) -> SampleBatch:
    enc = encode_table(rows, schema)
    return enc.batch(np.arange(len(enc)), freq)


@dataclass
class FrequencyTable:
    """Per-item interaction counts scaled by a fixed normalizer (the dataset's max item count)."""

    counts: np.ndarray
    normalizer: float

    @classmethod
    def from_item_ids(cls, item_ids, num_items: int, normalizer: float | None = None) -> "FrequencyTable":
        counts = np.bincount(np.asarray(item_ids, dtype=np.intp), minlength=num_items).astype(np.float64)
        norm = float(counts.max()) if normalizer is None else float(normalizer)
        return cls(counts, max(norm, 1.0))

    def lookup(self, item_ids) -> np.ndarray:
        return np.clip(self.counts[np.asarray(item_ids, dtype=np.intp)] / self.normalizer, 0.0, 1.0)

    def updated(self, item_ids) -> "FrequencyTable":
        extra = np.bincount(np.asarray(item_ids, dtype=np.intp), minlength=len(self.counts))
        return FrequencyTable(self.counts + extra, self.normalizer)
