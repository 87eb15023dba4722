"""MovieLens-1M reader (``ratings.dat``, ``users.dat``, ``movies.dat``, ``::``-separated)."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .table import CATEGORICAL, CONTINUOUS, MULTI, IngestionError, InteractionTable, object_column

ML1M_INTERACTIONS = 1_000_209

_YEAR = re.compile(r"\((\d{4})\)\s*$")
_TOKEN = re.compile(r"[a-z0-9]+")


def _read_rows(path: Path, n_fields: int):
    if not path.exists():
        raise IngestionError(f"missing file {path}")
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != n_fields:
                raise IngestionError(f"{path.name}:{lineno}: expected {n_fields} fields, got {len(parts)}")
            yield lineno, parts


def parse_title(raw: str) -> tuple[tuple[str, ...], int]:
    """``"Toy Story (1995)"`` -> ``(("toy", "story"), 1995)``."""
    m = _YEAR.search(raw)
    year = int(m.group(1)) if m else 0
    text = raw[:m.start()] if m else raw
    return tuple(_TOKEN.findall(text.lower())), year


def load_movielens(path, label_threshold: int = 4, use_title: bool = True,
                   year_as: str = "continuous") -> InteractionTable:
    """Join ratings with user and movie attributes.

    Labels are ``rating >= label_threshold``. Title tokens and genres are
    multi-valued fields; with ``use_title=False`` titles are dropped. The
    release year is continuous by default or categorical with
    ``year_as="categorical"``.
    """
    root = Path(path)
    if year_as not in ("continuous", "categorical"):
        raise ValueError(f"year_as must be 'continuous' or 'categorical', not {year_as!r}")

    users = {}
    for lineno, (uid, gender, age, occ, _zip) in _read_rows(root / "users.dat", 5):
        try:
            users[int(uid)] = (gender, int(age), int(occ))
        except ValueError:
            raise IngestionError(f"users.dat:{lineno}: malformed row") from None

    movies = {}
    for lineno, (mid, title, genres) in _read_rows(root / "movies.dat", 3):
        try:
            tokens, year = parse_title(title)
            movies[int(mid)] = (tokens, year, tuple(genres.split("|")) if genres else ())
        except ValueError:
            raise IngestionError(f"movies.dat:{lineno}: malformed row") from None

    cols = {k: [] for k in ("user_id", "item_id", "rating", "timestamp")}
    for lineno, (uid, mid, rating, ts) in _read_rows(root / "ratings.dat", 4):
        try:
            u, m, r, t = int(uid), int(mid), int(rating), int(ts)
        except ValueError:
            raise IngestionError(f"ratings.dat:{lineno}: malformed row") from None
        if u not in users or m not in movies:
            raise IngestionError(f"ratings.dat:{lineno}: unknown user {u} or movie {m}")
        cols["user_id"].append(u)
        cols["item_id"].append(m)
        cols["rating"].append(r)
        cols["timestamp"].append(t)

    user_id = np.asarray(cols["user_id"], dtype=np.int64)
    item_id = np.asarray(cols["item_id"], dtype=np.int64)
    rating = np.asarray(cols["rating"], dtype=np.int64)

    u_keys = np.fromiter(users, dtype=np.int64)
    u_pos = {u: i for i, u in enumerate(u_keys)}
    u_idx = np.fromiter((u_pos[u] for u in cols["user_id"]), dtype=np.intp, count=len(user_id))
    gender = np.asarray([users[u][0] for u in u_keys], dtype=object)[u_idx]
    age = np.asarray([users[u][1] for u in u_keys], dtype=np.int64)[u_idx]
    occupation = np.asarray([users[u][2] for u in u_keys], dtype=np.int64)[u_idx]

    m_keys = list(movies)
    m_pos = {m: i for i, m in enumerate(m_keys)}
    m_idx = np.fromiter((m_pos[m] for m in cols["item_id"]), dtype=np.intp, count=len(item_id))
    title = object_column([movies[m][0] for m in m_keys])[m_idx]
    year = np.asarray([movies[m][1] for m in m_keys], dtype=np.int64)[m_idx]
    genres = object_column([movies[m][2] for m in m_keys])[m_idx]

    columns = {
        "user_id": user_id, "gender": gender, "age": age, "occupation": occupation,
        "item_id": item_id, "year": year, "genres": genres,
        "timestamp": np.asarray(cols["timestamp"], dtype=np.int64),
        "rating": rating,
        "label": (rating >= label_threshold).astype(np.int64),
    }
    kinds = {
        "user_id": CATEGORICAL, "gender": CATEGORICAL, "age": CATEGORICAL, "occupation": CATEGORICAL,
        "year": CONTINUOUS if year_as == "continuous" else CATEGORICAL,
        "genres": MULTI,
    }
    side = ["year", "genres"]
    if use_title:
        columns["title"] = title
        kinds["title"] = MULTI
        side.append("title")
    return InteractionTable(columns, kinds, side_info_fields=side)
