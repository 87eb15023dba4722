"""Seeded synthetic CTR corpora with Zipf item popularity.

Labels come from a latent-factor model in which every item's factor is
mostly determined by its side information, so side info genuinely predicts
the item embedding a model should learn. That makes cold-start methods
testable without any downloaded data.
"""

from __future__ import annotations

import numpy as np

from .table import CATEGORICAL, CONTINUOUS, MULTI, InteractionTable, object_column

TAOBAO_SIDE_FIELDS = ["cate_id", "campaign_id", "brand", "customer"]


def zipf_weights(n: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    """Popularity ``rank ** -exponent`` with ranks assigned to items at random."""
    ranks = rng.permutation(n) + 1
    w = ranks.astype(np.float64) ** -exponent
    return w / w.sum()


def generate_synthetic(n_users: int = 500, n_items: int = 200, n_interactions: int = 40_000,
                       zipf_exponent: float = 1.2, seed: int = 0, flavor: str = "movielens",
                       latent_dim: int = 4, item_noise: float = 0.3, signal: float = 2.0) -> InteractionTable:
    if flavor not in ("movielens", "taobao"):
        raise ValueError(f"unknown synthetic flavor {flavor!r}")
    rng = np.random.default_rng(seed)

    user_factor = rng.normal(size=(n_users, latent_dim))
    user_group = rng.integers(0, 6, size=n_users)
    user_bias = 0.5 * rng.normal(size=n_users)
    user_gender = rng.integers(0, 2, size=n_users)

    if flavor == "movielens":
        side_sizes = {"category": 8, "brand": 20}
    else:
        side_sizes = {"cate_id": 10, "campaign_id": 40, "brand": 25, "customer": 30}
    item_side = {name: rng.integers(0, size, size=n_items) for name, size in side_sizes.items()}
    item_factor = item_noise * rng.normal(size=(n_items, latent_dim))
    for name, size in side_sizes.items():
        centers = rng.normal(size=(size, latent_dim)) / np.sqrt(len(side_sizes))
        item_factor += centers[item_side[name]]
    item_bias = np.zeros(n_items)

    if flavor == "movielens":
        n_tags = 12
        tag_bias = rng.normal(size=n_tags)
        tags = []
        for j in range(n_items):
            k = int(rng.integers(1, 4))
            t = rng.choice(n_tags, size=k, replace=False)
            tags.append(tuple(f"t{x}" for x in sorted(t)))
            item_bias[j] += tag_bias[t].mean()
        year = rng.integers(1950, 2001, size=n_items)
        item_bias += 0.8 * (year - 1975) / 25.0

    popularity = zipf_weights(n_items, zipf_exponent, rng)
    # every catalog item shows up at least once; the rest follow the Zipf draw
    seeded = rng.permutation(n_items)[:n_interactions]
    items = np.concatenate([seeded, rng.choice(n_items, size=n_interactions - len(seeded), p=popularity)])
    items = items[rng.permutation(n_interactions)]
    users = rng.integers(0, n_users, size=n_interactions)
    logit = signal * np.einsum("nk,nk->n", user_factor[users], item_factor[items]) / np.sqrt(latent_dim)
    logit += user_bias[users] + item_bias[items]
    labels = (rng.random(n_interactions) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
    timestamps = rng.integers(0, 10_000_000, size=n_interactions)

    columns = {
        "user_id": users.astype(np.int64),
        "item_id": items.astype(np.int64),
        "timestamp": timestamps.astype(np.int64),
        "label": labels,
    }
    kinds = {"user_id": CATEGORICAL}
    if flavor == "movielens":
        columns["user_group"] = user_group[users]
        kinds["user_group"] = CATEGORICAL
    else:
        columns["gender"] = user_gender[users]
        columns["age_level"] = user_group[users]
        kinds.update(gender=CATEGORICAL, age_level=CATEGORICAL)
    for name in side_sizes:
        columns[name] = item_side[name][items]
        kinds[name] = CATEGORICAL
    side = list(side_sizes)
    if flavor == "movielens":
        columns["tags"] = object_column(tags)[items]
        columns["year"] = year[items]
        kinds.update(tags=MULTI, year=CONTINUOUS)
        side += ["tags", "year"]
    return InteractionTable(columns, kinds, side_info_fields=side)
