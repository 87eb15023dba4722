from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CATEGORICAL = "cat"
MULTI = "multi"
CONTINUOUS = "cont"


class IngestionError(ValueError):
    pass


@dataclass
class InteractionTable:
    """Column-oriented raw interactions, one entry per labeled instance.

    ``kinds`` tags every feature column as categorical, multi-valued
    categorical (values are tuples of tokens) or continuous. The item,
    timestamp and label columns are bookkeeping and carry no kind.
    """

    columns: dict[str, np.ndarray]
    kinds: dict[str, str]
    item_field: str = "item_id"
    timestamp_field: str = "timestamp"
    label_field: str = "label"
    side_info_fields: list[str] = field(default_factory=list)

    def __post_init__(self):
        lengths = {len(c) for c in self.columns.values()}
        if len(lengths) > 1:
            raise IngestionError(f"columns have unequal lengths: {sorted(lengths)}")
        for name in (self.item_field, self.timestamp_field, self.label_field):
            if name not in self.columns:
                raise IngestionError(f"missing required column {name!r}")

    def __len__(self) -> int:
        return len(self.columns[self.item_field])

    @property
    def items(self) -> np.ndarray:
        return self.columns[self.item_field]

    @property
    def timestamps(self) -> np.ndarray:
        return self.columns[self.timestamp_field]

    @property
    def labels(self) -> np.ndarray:
        return self.columns[self.label_field]

    @property
    def feature_fields(self) -> list[str]:
        return list(self.kinds)

    def take(self, idx) -> "InteractionTable":
        idx = np.asarray(idx, dtype=np.intp)
        return InteractionTable(
            columns={k: v[idx] for k, v in self.columns.items()},
            kinds=dict(self.kinds),
            item_field=self.item_field,
            timestamp_field=self.timestamp_field,
            label_field=self.label_field,
            side_info_fields=list(self.side_info_fields),
        )


def object_column(values) -> np.ndarray:
    """Pack tuples into a 1-D object array without numpy trying to broadcast them."""
    out = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        out[i] = v
    return out
