"""One model instance (embeddings, backbone, CVAR, optimizers) and its training/evaluation loop."""

from __future__ import annotations

import copy
import json
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import numerics as N
from ..backbones import Backbone, bce_loss, build_backbone
from ..config import ExperimentConfig
from ..cvar import CVAR
from ..features import EmbeddingLayer, EncodedDataset, FeatureSchema, FrequencyTable
from .metrics import auc, f1

EVAL_CHUNK = 8192
STREAMS = ("embedding", "backbone", "cvar", "shuffle", "noise")


class FreezeAuditError(RuntimeError):
    pass


@dataclass
class PhaseLog:
    backbone_steps: int = 0
    cvar_steps: int = 0
    l_bce: float = float("nan")
    l_ctr: float = float("nan")
    l_rec: float = float("nan")
    l_w: float = float("nan")
    audits: int = 0


def _generators(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


class Trainer:
    """Backbone (theta), embedding tables (phi) and the CVAR module for one seed.

    The backbone's training trajectory depends only on the seed: CVAR draws
    from its own random streams and never writes theta or phi, so runs that
    do and do not train CVAR produce bit-identical backbones.
    """

    def __init__(self, cfg: ExperimentConfig, schema: FeatureSchema, kind, seed: int):
        self.cfg = cfg
        self.schema = schema
        self.seed = seed
        self.rngs = _generators(seed)
        self.embedding = EmbeddingLayer(schema, self.rngs["embedding"])
        self.backbone: Backbone = build_backbone(kind, schema, self.rngs["backbone"], cfg.hidden)
        self.cvar = CVAR(schema.embedding_dim, schema.side_width, self.rngs["cvar"], cfg.latent_dim,
                         cfg.alpha, cfg.beta, cfg.hidden, seed)
        lr = cfg.learning_rate
        self.opt_theta = N.AdamState(learning_rate=lr)
        self.opt_phi = N.AdamState(learning_rate=lr)
        self.opt_cvar = N.AdamState(learning_rate=lr)
        self.backbone_steps = 0
        self.cvar_steps = 0

    def clone(self) -> "Trainer":
        return copy.deepcopy(self)

    def backbone_checksum(self) -> str:
        return self.backbone.params.checksum() + self.embedding.params.checksum()

    @contextmanager
    def inference(self):
        with ExitStack() as stack:
            for store in (self.backbone.params, self.embedding.params, self.cvar.params):
                stack.enter_context(store.frozen())
            yield

    # --- training -------------------------------------------------------------

    def backbone_step(self, batch) -> float:
        bundle = self.embedding(batch)
        loss = bce_loss(self.backbone(bundle.v_i, bundle.v_X), batch.labels)
        loss.backward()
        N.adam_step(self.opt_theta, self.backbone.params)
        N.adam_step(self.opt_phi, self.embedding.params, sparse_rows=bundle.touched)
        self.backbone_steps += 1
        return loss.item()

    def cvar_step(self, batch, audit: bool = False):
        before = self.backbone_checksum() if audit else None
        with self.backbone.params.frozen(), self.embedding.params.frozen():
            # re-embed so CVAR sees the item vectors the backbone step just produced
            bundle = self.embedding(batch)
            out = self.cvar.loss_warm(batch, bundle, self.backbone, self.rngs["noise"])
            out.total.backward()
            N.adam_step(self.opt_cvar, self.cvar.params)
        # frozen tensors never join the tape, but clear any stale grads defensively
        self.backbone.params.zero_grad()
        self.embedding.params.zero_grad()
        self.cvar_steps += 1
        if audit and self.backbone_checksum() != before:
            raise FreezeAuditError(f"CVAR step {self.cvar_steps} changed backbone or embedding parameters")
        return out

    def train_phase(self, data: EncodedDataset, rows, freq: FrequencyTable, epochs: int = 1,
                    train_backbone: bool = True, train_cvar: bool = True) -> PhaseLog:
        rows = np.asarray(rows, dtype=np.intp)
        log = PhaseLog()
        bce, ctr, rec, w = [], [], [], []
        bs = self.cfg.batch_size
        for _ in range(epochs):
            order = rows[self.rngs["shuffle"].permutation(len(rows))]
            for start in range(0, len(order), bs):
                batch = data.batch(order[start:start + bs], freq)
                if train_backbone:
                    bce.append(self.backbone_step(batch))
                    log.backbone_steps += 1
                if train_cvar:
                    out = self.cvar_step(batch, audit=self.cfg.freeze_audit)
                    ctr.append(out.ctr)
                    rec.append(out.rec)
                    w.append(out.w)
                    log.cvar_steps += 1
                    log.audits += int(self.cfg.freeze_audit)
        for name, vals in (("l_bce", bce), ("l_ctr", ctr), ("l_rec", rec), ("l_w", w)):
            if vals:
                setattr(log, name, float(np.mean(vals)))
        return log

    # --- inference ------------------------------------------------------------

    def predict(self, data: EncodedDataset, rows, x_freq: float | None = None,
                rng: np.random.Generator | None = None) -> np.ndarray:
        """Scores for ``rows``. With ``x_freq`` set, v_i is swapped for the CVAR warm embedding."""
        rows = np.asarray(rows, dtype=np.intp)
        out = np.empty(len(rows))
        with self.inference():
            for start in range(0, len(rows), EVAL_CHUNK):
                batch = data.batch(rows[start:start + EVAL_CHUNK])
                bundle = self.embedding(batch)
                v_i = bundle.v_i
                if x_freq is not None:
                    v_i = N.Tensor(self.cvar.generate_warm_embedding(bundle.v_I, x_freq, self.cfg.eval_mode, rng))
                out[start:start + len(batch)] = self.backbone(v_i, bundle.v_X).data
        return out

    def evaluate(self, data: EncodedDataset, rows, x_freq: float | None = None,
                 rng: np.random.Generator | None = None) -> tuple[float, float]:
        scores = self.predict(data, rows, x_freq, rng)
        labels = data.labels[np.asarray(rows, dtype=np.intp)]
        return auc(scores, labels), f1(scores, labels, self.cfg.f1_threshold)

    def init_items_from_cvar(self, data: EncodedDataset, rows, x_freq: float,
                             rng: np.random.Generator | None = None) -> np.ndarray:
        """Overwrite the item rows of every item in ``rows`` with generated warm embeddings."""
        rows = np.asarray(rows, dtype=np.intp)
        _, first = np.unique(data.item_ids[rows], return_index=True)
        batch = data.batch(rows[first])
        with self.inference():
            warm = self.cvar.generate_warm_embedding(self.embedding(batch).v_I, x_freq, self.cfg.eval_mode, rng)
        self.embedding.write_item_rows(batch.item_ids, warm)
        return batch.item_ids

    # --- persistence ----------------------------------------------------------

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.backbone.save(d / "backbone.ckpt")
        self.embedding.params.save(d / "embedding.ckpt", {"schema_hash": self.schema.hash()})
        self.cvar.save(d / "cvar.ckpt")
        for name in ("opt_theta", "opt_phi", "opt_cvar"):
            st: N.AdamState = getattr(self, name)
            N.save_arrays(d / f"{name}.ckpt", st.arrays(), {"step": st.step})
        state = {"rngs": {k: g.bit_generator.state for k, g in self.rngs.items()},
                 "backbone_steps": self.backbone_steps, "cvar_steps": self.cvar_steps}
        (d / "trainer.json").write_text(json.dumps(state))

    def load(self, directory) -> None:
        d = Path(directory)
        self.backbone.load(d / "backbone.ckpt")
        store, meta = N.ParameterStore.load(d / "embedding.ckpt")
        if meta.get("schema_hash") != self.schema.hash():
            raise N.CheckpointError("embedding checkpoint was built for a different schema")
        self.embedding.params.load_state_dict(store.state_dict())
        self.cvar.load(d / "cvar.ckpt")
        for name in ("opt_theta", "opt_phi", "opt_cvar"):
            arrays, meta = N.load_arrays(d / f"{name}.ckpt")
            getattr(self, name).load_arrays(arrays, meta["step"])
        state = json.loads((d / "trainer.json").read_text())
        for k, s in state["rngs"].items():
            self.rngs[k].bit_generator.state = s
        self.backbone_steps = state["backbone_steps"]
        self.cvar_steps = state["cvar_steps"]


