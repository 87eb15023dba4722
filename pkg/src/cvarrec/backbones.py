"""CTR backbones sharing one interface: ``forward(v_i, v_X) -> y_hat``.

The item-ID vector is always the first field of the model's field list, so
any [B x d] tensor can stand in for the learned item embedding.
"""

from __future__ import annotations

import enum
from itertools import combinations

import numpy as np

from . import numerics as N
from .features import FeatureSchema
from .numerics import MLP, ParameterStore, Tensor

BCE_CLAMP = 1e-12


class BackboneKind(str, enum.Enum):
    FM = "FM"
    DeepFM = "DeepFM"
    WideDeep = "WideDeep"
    DCN = "DCN"
    IPNN = "IPNN"
    OPNN = "OPNN"

    @classmethod
    def parse(cls, name: str) -> "BackboneKind":
        key = name.replace("&", "").replace("_", "").replace("-", "").lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        raise ValueError(f"unknown backbone {name!r}; choose from {[k.value for k in cls]}")


class Backbone:
    """Parameters theta plus the field layout fixed at construction.

    ``n_fields`` counts the item field and every categorical field of X,
    each ``d`` wide; ``n_cont`` raw continuous values trail them in v_X.
    """

    def __init__(self, kind: BackboneKind, d: int, n_cat: int, n_cont: int,
                 rng: np.random.Generator, hidden=(16, 16), schema_hash: str = ""):
        self.kind = BackboneKind(kind)
        self.d = d
        self.n_cat = n_cat
        self.n_cont = n_cont
        self.hidden = tuple(hidden)
        self.schema_hash = schema_hash
        self.params = ParameterStore()
        self.n_fields = 1 + n_cat
        self.width = self.n_fields * d + n_cont
        self.pairs = list(combinations(range(self.n_fields), 2))
        self._build(rng)

    # --- construction -----------------------------------------------------

    def _build(self, rng):
        k, p = self.kind, self.params
        D, H = self.width, list(self.hidden)
        if k in (BackboneKind.FM, BackboneKind.DeepFM, BackboneKind.WideDeep):
            p.add("linear/w", N.xavier_uniform(rng, D, 1))
            p.add("linear/b", np.zeros(1))
        if k in (BackboneKind.DeepFM, BackboneKind.WideDeep):
            self.deep = MLP(p, "deep", [D, *H, 1], rng, output_bias=False)
        if k is BackboneKind.DCN:
            for l in range(len(H)):
                p.add(f"cross/w{l}", N.xavier_uniform(rng, D, 1))
                p.add(f"cross/b{l}", np.zeros(D))
            self.deep = MLP(p, "deep", [D, *H], rng)
            p.add("out/w", N.xavier_uniform(rng, D + H[-1], 1))
            p.add("out/b", np.zeros(1))
        if k in (BackboneKind.IPNN, BackboneKind.OPNN):
            P = len(self.pairs)
            if k is BackboneKind.OPNN:
                limit = np.sqrt(6.0 / (2 * self.d))
                p.add("product/kernel", rng.uniform(-limit, limit, size=(P, self.d, self.d)))
            p.add("product/wz", N.xavier_uniform(rng, D, H[0]))
            p.add("product/wp", N.xavier_uniform(rng, P, H[0]) if P else np.zeros((0, H[0])))
            p.add("product/b", np.zeros(H[0]))
            self.deep = MLP(p, "deep", [*H, 1], rng)

    # --- forward ----------------------------------------------------------

    def _inputs(self, v_i: Tensor, v_X: Tensor):
        if v_i.ndim != 2 or v_i.shape[1] != self.d:
            raise N.DimensionError(f"item vector must be [B x {self.d}], got {v_i.shape}")
        want = self.width - self.d
        if v_X.ndim != 2 or v_X.shape[1] != want or v_X.shape[0] != v_i.shape[0]:
            raise N.DimensionError(f"v_X must be [B x {want}], got {v_X.shape}")
        B = v_i.shape[0]
        flat = N.concat([v_i, v_X], axis=1)
        emb_w = self.n_fields * self.d
        fields = N.reshape(flat[:, :emb_w] if self.n_cont else flat, (B, self.n_fields, self.d))
        return flat, fields

    def fm_logit(self, flat: Tensor, fields: Tensor) -> Tensor:
        linear = (flat @ self.params["linear/w"] + self.params["linear/b"])[:, 0]
        summed = N.tsum(fields, axis=1)
        pairwise = N.tsum(N.square(summed) - N.tsum(N.square(fields), axis=1), axis=1)
        return linear + 0.5 * pairwise

    def cross(self, x0: Tensor) -> Tensor:
        x = x0
        for l in range(len(self.hidden)):
            x = x0 * (x @ self.params[f"cross/w{l}"]) + self.params[f"cross/b{l}"] + x
        return x

    def products(self, fields: Tensor) -> Tensor:
        rows = [i for i, _ in self.pairs]
        cols = [j for _, j in self.pairs]
        left = N.take(fields, rows, axis=1)
        right = N.take(fields, cols, axis=1)
        if self.kind is BackboneKind.IPNN:
            return N.tsum(left * right, axis=2)
        projected = N.einsum("bpm,pmn->bpn", left, self.params["product/kernel"])
        return N.tsum(projected * right, axis=2)

    def logit(self, v_i: Tensor, v_X: Tensor) -> Tensor:
        flat, fields = self._inputs(v_i, v_X)
        k, p = self.kind, self.params
        if k is BackboneKind.FM:
            return self.fm_logit(flat, fields)
        if k is BackboneKind.DeepFM:
            return self.fm_logit(flat, fields) + self.deep(flat)[:, 0]
        if k is BackboneKind.WideDeep:
            wide = (flat @ p["linear/w"] + p["linear/b"])[:, 0]
            return wide + self.deep(flat)[:, 0]
        if k is BackboneKind.DCN:
            joined = N.concat([self.cross(flat), N.relu(self.deep(flat))], axis=1)
            return (joined @ p["out/w"] + p["out/b"])[:, 0]
        h = flat @ p["product/wz"] + p["product/b"]
        if self.pairs:
            h = h + self.products(fields) @ p["product/wp"]
        return self.deep(N.relu(h))[:, 0]

    def forward(self, v_i: Tensor, v_X: Tensor) -> Tensor:
        return N.sigmoid(self.logit(v_i, v_X))

    __call__ = forward

    # --- persistence ------------------------------------------------------

    def save(self, path) -> None:
        self.params.save(path, {"kind": self.kind.value, "schema_hash": self.schema_hash,
                                "d": self.d, "n_cat": self.n_cat, "n_cont": self.n_cont,
                                "hidden": list(self.hidden)})

    def load(self, path) -> None:
        store, meta = ParameterStore.load(path)
        if meta.get("kind") != self.kind.value:
            raise N.CheckpointError(f"checkpoint holds a {meta.get('kind')} backbone, not {self.kind.value}")
        if meta.get("schema_hash") != self.schema_hash:
            raise N.CheckpointError("checkpoint was trained against a different feature schema")
        self.params.load_state_dict(store.state_dict())


def build_backbone(kind, schema: FeatureSchema, rng: np.random.Generator, hidden=(16, 16)) -> Backbone:
    if isinstance(kind, str):
        kind = BackboneKind.parse(kind)
    return Backbone(kind, schema.embedding_dim, len(schema.categorical_fields),
                    len(schema.continuous_fields), rng, hidden, schema.hash())


def bce_loss(y_hat: Tensor, y) -> Tensor:
    """Mean binary cross-entropy with predictions clamped away from 0 and 1."""
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise N.DimensionError(f"predictions {y_hat.shape} vs labels {y.shape}")
    p = N.clip(y_hat, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return N.tmean(-(y * N.log(p)) - (1.0 - y) * N.log(1.0 - p))
