"""Old/new item split and timestamp-ordered warm-a/b/c/test groups."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..features import InteractionTable

GROUPS = ("old", "warm_a", "warm_b", "warm_c", "test")
WARM_GROUPS = GROUPS[1:4]
MANIFEST_VERSION = 1


class SplitError(ValueError):
    pass


@dataclass
class SplitSpec:
    """``threshold``: items with strictly more instances are old.

    ``policy="quarters"`` cuts each new item's time-ordered instances into
    four near-equal groups (earlier groups take the remainder);
    ``policy="prefix"`` gives the first ``warm_k`` instances to warm-a, the
    next ``warm_k`` to warm-b and warm-c, and the rest to test.
    """

    threshold: int = 200
    policy: str = "quarters"
    warm_k: int = 20

    def __post_init__(self):
        if self.threshold < 0:
            raise SplitError("threshold must be non-negative")
        if self.policy not in ("quarters", "prefix"):
            raise SplitError(f"unknown warm-group policy {self.policy!r}")
        if self.warm_k <= 0:
            raise SplitError("warm_k must be positive")


@dataclass
class DatasetSplit:
    groups: dict[str, np.ndarray]
    spec: SplitSpec
    n_old_items: int = 0
    n_new_items: int = 0
    stats: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.groups[name]

    @property
    def new_old_ratio(self) -> float:
        return self.n_new_items / max(self.n_old_items, 1)

    def row_groups(self, n_rows: int) -> np.ndarray:
        out = np.full(n_rows, -1, dtype=np.int8)
        for gi, name in enumerate(GROUPS):
            out[self.groups[name]] = gi
        return out

    def save(self, path, fingerprint: str = "") -> None:
        path = Path(path)
        n = int(sum(len(v) for v in self.groups.values()))
        meta = {"version": MANIFEST_VERSION, "threshold": self.spec.threshold, "policy": self.spec.policy,
                "warm_k": self.spec.warm_k, "n_old_items": self.n_old_items, "n_new_items": self.n_new_items,
                "fingerprint": fingerprint, "stats": self.stats}
        tmp = path.with_name(path.name + ".tmp.npz")
        np.savez(tmp, row_group=self.row_groups(n),
                 meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8))
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> tuple["DatasetSplit", dict]:
        with np.load(path) as z:
            row_group = z["row_group"]
            meta = json.loads(z["meta"].tobytes())
        if meta.get("version") != MANIFEST_VERSION:
            raise SplitError(f"{path}: unsupported manifest version")
        spec = SplitSpec(meta["threshold"], meta["policy"], meta["warm_k"])
        groups = {name: np.flatnonzero(row_group == gi) for gi, name in enumerate(GROUPS)}
        return cls(groups, spec, meta["n_old_items"], meta["n_new_items"], meta["stats"]), meta


def _cut_points(n: int, spec: SplitSpec) -> list[int]:
    if spec.policy == "quarters":
        sizes = [len(a) for a in np.array_split(np.arange(n), 4)]
    else:
        k = spec.warm_k
        sizes = [min(k, n), min(k, max(n - k, 0)), min(k, max(n - 2 * k, 0))]
        sizes.append(n - sum(sizes))
    return list(np.cumsum(sizes)[:-1])


def split_dataset(table: InteractionTable, spec: SplitSpec) -> DatasetSplit:
    """Partition row indices of ``table`` into old/warm_a/warm_b/warm_c/test."""
    items = np.asarray(table.items)
    keys, inverse, counts = np.unique(items, return_inverse=True, return_counts=True)
    old_item = counts > spec.threshold
    is_old_row = old_item[inverse]
    groups = {name: [] for name in GROUPS}
    groups["old"] = np.flatnonzero(is_old_row)

    new_rows = np.flatnonzero(~is_old_row)
    # stable sort by (item, timestamp) keeps input order among equal timestamps
    order = np.lexsort((np.asarray(table.timestamps)[new_rows], inverse[new_rows]))
    new_rows = new_rows[order]
    item_of = inverse[new_rows]
    starts = np.flatnonzero(np.r_[True, item_of[1:] != item_of[:-1]])
    ends = np.r_[starts[1:], len(new_rows)]
    parts = {name: [] for name in GROUPS[1:]}
    for s, e in zip(starts, ends):
        chunks = np.split(new_rows[s:e], _cut_points(e - s, spec))
        for name, chunk in zip(GROUPS[1:], chunks):
            parts[name].append(chunk)
    for name in GROUPS[1:]:
        groups[name] = np.sort(np.concatenate(parts[name])) if parts[name] else np.zeros(0, dtype=np.intp)
    if len(groups["test"]) == 0:
        raise SplitError("the split leaves the test set empty")

    n_old, n_new = int(old_item.sum()), int((~old_item).sum())
    stats = {name: {"instances": int(len(groups[name])),
                    "items": int(len(np.unique(items[groups[name]])))} for name in GROUPS}
    stats["new_old_item_ratio"] = n_new / max(n_old, 1)
    return DatasetSplit({k: np.asarray(v, dtype=np.intp) for k, v in groups.items()}, spec, n_old, n_new, stats)
