"""Conditional-variational warm-up of item-ID embeddings.

Two encoders map into one Gaussian latent space: the regular encoder reads
the learned item embedding v_i, the prior encoder reads the item's
side-information vector v_I. A single decoder, conditioned on the item's
normalized frequency, maps latent samples back to item embeddings. Training
minimizes

    L_warm = L_ctr + alpha * L_rec + beta * L_w

where L_ctr is the frozen backbone's BCE when fed the prior-path embedding,
L_rec the squared reconstruction error of v_i through the regular path, and
L_w the squared 2-Wasserstein distance between the two latent Gaussians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as N
from .backbones import Backbone, bce_loss
from .features import EmbeddingBundle, SampleBatch
from .numerics import MLP, ParameterStore, Tensor

LOG_VAR_RANGE = (-10.0, 10.0)


@dataclass
class GaussianLatent:
    """Diagonal Gaussian; ``log_var`` is the log of the per-coordinate variance."""

    mu: Tensor
    log_var: Tensor

    @property
    def k(self) -> int:
        return self.mu.shape[-1]

    @property
    def std(self) -> Tensor:
        return N.exp(0.5 * self.log_var)


@dataclass
class WarmLoss:
    total: Tensor
    ctr: float
    rec: float
    w: float


def reparameterize(g: GaussianLatent, eps) -> Tensor:
    """``z = mu + sqrt(var) * eps``; eps is a constant, so gradients reach only mu and log_var."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != g.mu.shape:
        raise N.DimensionError(f"noise shape {eps.shape} != latent shape {g.mu.shape}")
    return g.mu + g.std * eps


def loss_rec(v: Tensor, v_hat: Tensor) -> Tensor:
    if v.shape != v_hat.shape:
        raise N.DimensionError(f"reconstruction shapes differ: {v.shape} vs {v_hat.shape}")
    return N.tmean(N.tsum(N.square(v - v_hat), axis=1))


def loss_wasserstein(a: GaussianLatent, b: GaussianLatent) -> Tensor:
    """Batch mean of W2^2 between diagonal Gaussians: |mu-mu'|^2 + |std-std'|^2."""
    if a.mu.shape != b.mu.shape:
        raise N.DimensionError(f"latent shapes differ: {a.mu.shape} vs {b.mu.shape}")
    mean_term = N.tsum(N.square(a.mu - b.mu), axis=1)
    std_term = N.tsum(N.square(a.std - b.std), axis=1)
    return N.tmean(mean_term + std_term)


class CVAR:
    def __init__(self, d: int, side_width: int, rng: np.random.Generator, latent_dim: int = 16,
                 alpha: float = 1.0, beta: float = 1.0, hidden=(16, 16), seed: int | None = None):
        if side_width <= 0:
            raise ValueError("CVAR needs at least one side-information feature")
        self.d = d
        self.side_width = side_width
        self.k = latent_dim
        self.alpha = alpha
        self.beta = beta
        self.seed = seed
        self.params = ParameterStore()
        H = list(hidden)
        self.encoder = MLP(self.params, "enc", [d, *H, 2 * latent_dim], rng)
        self.prior_encoder = MLP(self.params, "prior", [side_width, *H, 2 * latent_dim], rng)
        self.decoder = MLP(self.params, "dec", [latent_dim + 1, *H, d], rng)

    def _split(self, h: Tensor) -> GaussianLatent:
        k = self.k
        return GaussianLatent(h[:, :k], N.clip(h[:, k:], *LOG_VAR_RANGE))

    def encode_regular(self, v_i: Tensor) -> GaussianLatent:
        return self._split(self.encoder(v_i))

    def encode_prior(self, v_I: Tensor) -> GaussianLatent:
        return self._split(self.prior_encoder(v_I))

    def decode(self, z: Tensor, x_freq) -> Tensor:
        x_freq = np.asarray(x_freq, dtype=np.float64).reshape(-1, 1)
        if x_freq.shape[0] != z.shape[0]:
            raise N.DimensionError(f"{x_freq.shape[0]} frequencies for {z.shape[0]} latents")
        return self.decoder(N.concat([z, N.Tensor(x_freq)], axis=1))

    def noise(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        return rng.standard_normal((batch, self.k))

    def warm_forward(self, batch: SampleBatch, bundle: EmbeddingBundle, backbone: Backbone,
                     eps) -> tuple[Tensor, Tensor, GaussianLatent]:
        """Prior path: side info -> z' -> warm item vector -> frozen backbone."""
        prior = self.encode_prior(bundle.v_I)
        v_warm = self.decode(reparameterize(prior, eps), batch.x_freq)
        return backbone.forward(v_warm, bundle.v_X), v_warm, prior

    def loss_warm(self, batch: SampleBatch, bundle: EmbeddingBundle, backbone: Backbone,
                  rng: np.random.Generator) -> WarmLoss:
        B = len(batch)
        regular = self.encode_regular(bundle.v_i)
        v_rec = self.decode(reparameterize(regular, self.noise(rng, B)), batch.x_freq)
        y_warm, _, prior = self.warm_forward(batch, bundle, backbone, self.noise(rng, B))
        l_ctr = bce_loss(y_warm, batch.labels)
        l_rec = loss_rec(bundle.v_i, v_rec)
        l_w = loss_wasserstein(regular, prior)
        total = l_ctr + self.alpha * l_rec + self.beta * l_w
        return WarmLoss(total, l_ctr.item(), l_rec.item(), l_w.item())

    def generate_warm_embedding(self, v_I: Tensor, x_freq_override: float = 1.0, mode: str = "sample",
                                rng: np.random.Generator | None = None) -> np.ndarray:
        """Warm item vectors from side info alone, decoding with a fixed frequency condition."""
        if not 0.0 <= x_freq_override <= 1.0:
            raise ValueError(f"x_freq override must lie in [0, 1], got {x_freq_override}")
        prior = self.encode_prior(N.Tensor(v_I.data))
        if mode == "mean":
            z = prior.mu
        elif mode == "sample":
            if rng is None:
                raise ValueError("sample mode needs a random generator")
            z = reparameterize(prior, self.noise(rng, v_I.shape[0]))
        else:
            raise ValueError(f"mode must be 'sample' or 'mean', not {mode!r}")
        return self.decode(z, np.full(v_I.shape[0], float(x_freq_override))).data

    def save(self, path) -> None:
        self.params.save(path, {"k": self.k, "alpha": self.alpha, "beta": self.beta,
                                "seed": self.seed, "d": self.d, "side_width": self.side_width})

    def load(self, path) -> None:
        store, meta = ParameterStore.load(path)
        if meta.get("k") != self.k:
            raise N.CheckpointError(f"checkpoint latent dim {meta.get('k')} != {self.k}")
        self.params.load_state_dict(store.state_dict())
