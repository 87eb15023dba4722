"""Taobao display-ad reader.

Expects the three CSVs of the public release in one directory:
``raw_sample.csv`` (user, time_stamp, adgroup_id, pid, nonclk, clk),
``ad_feature.csv`` (adgroup_id, cate_id, campaign_id, customer, brand, price)
and ``user_profile.csv`` (userid, cms_segid, cms_group_id, final_gender_code,
age_level, pvalue_level, shopping_level, occupation, new_user_class_level).
Downloading the data is left to the user.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .table import CATEGORICAL, IngestionError, InteractionTable

SIDE_FIELDS = ["cate_id", "campaign_id", "brand", "customer"]
USER_FIELDS = ["cms_segid", "cms_group_id", "final_gender_code", "age_level",
               "pvalue_level", "shopping_level", "occupation", "new_user_class_level"]


def _read(path: Path, nrows=None) -> pd.DataFrame:
    if not path.exists():
        raise IngestionError(f"missing file {path}")
    try:
        return pd.read_csv(path, nrows=nrows)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestionError(f"{path.name}: {exc}") from None


def load_taobao(path, nrows: int | None = None) -> InteractionTable:
    root = Path(path)
    raw = _read(root / "raw_sample.csv", nrows)
    ads = _read(root / "ad_feature.csv")
    users = _read(root / "user_profile.csv").rename(columns={"userid": "user"})
    users.columns = [c.strip() for c in users.columns]
    need = {"user", "time_stamp", "adgroup_id", "clk"}
    if not need <= set(raw.columns):
        raise IngestionError(f"raw_sample.csv lacks columns {sorted(need - set(raw.columns))}")
    df = raw.merge(ads, on="adgroup_id", how="left").merge(users, on="user", how="left")
    columns = {
        "user_id": df["user"].to_numpy(np.int64),
        "item_id": df["adgroup_id"].to_numpy(np.int64),
        "timestamp": df["time_stamp"].to_numpy(np.int64),
        "label": df["clk"].to_numpy(np.int64),
        "pid": df["pid"].astype(str).to_numpy(object) if "pid" in df else np.zeros(len(df), np.int64),
    }
    kinds = {"user_id": CATEGORICAL, "pid": CATEGORICAL}
    for name in SIDE_FIELDS + USER_FIELDS:
        if name in df:
            # missing joins and NaN brands become their own category
            columns[name] = df[name].fillna(-1).astype(np.int64).to_numpy()
            kinds[name] = CATEGORICAL
    return InteractionTable(columns, kinds, side_info_fields=[f for f in SIDE_FIELDS if f in kinds])
