"""On-disk cache of an EncodedDataset, keyed by schema hash and row count."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .schema import EncodedDataset, FeatureSchema

CACHE_VERSION = 1


def save_encoded(path, data: EncodedDataset, schema: FeatureSchema) -> None:
    header = {"version": CACHE_VERSION, "schema_hash": schema.hash(), "rows": len(data),
              "categorical": list(data.categorical), "bags": list(data.bag_weights),
              "continuous": list(data.continuous)}
    arrays = {"item_ids": data.item_ids, "labels": data.labels,
              "header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    arrays.update({f"cat:{k}": v for k, v in data.categorical.items()})
    arrays.update({f"bag:{k}": v for k, v in data.bag_weights.items()})
    arrays.update({f"cont:{k}": v for k, v in data.continuous.items()})
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def load_encoded(path, schema: FeatureSchema, rows: int | None = None) -> EncodedDataset | None:
    """Return the cached dataset, or None when absent, stale or from another schema."""
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path) as z:
        header = json.loads(z["header"].tobytes())
        if header.get("version") != CACHE_VERSION or header.get("schema_hash") != schema.hash():
            return None
        if rows is not None and header["rows"] != rows:
            return None
        return EncodedDataset(
            item_ids=z["item_ids"],
            categorical={k: z[f"cat:{k}"] for k in header["categorical"]},
            bag_weights={k: z[f"bag:{k}"] for k in header["bags"]},
            continuous={k: z[f"cont:{k}"] for k in header["continuous"]},
            labels=z["labels"],
        )
