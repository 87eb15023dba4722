"""Initializers and a small MLP built on ParameterStore."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .store import ParameterStore


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.01) -> np.ndarray:
    """Normal(0, std) redrawn until every value lies within two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


class MLP:
    """Dense layers with ReLU between them and a linear output layer.

    ``sizes`` lists every width including input and output, e.g.
    ``[16, 16, 16, 32]`` is two hidden layers of 16 followed by a 32-wide
    output. Weights live in ``store`` under ``{prefix}/w{i}`` and ``{prefix}/b{i}``.
    """

    def __init__(self, store: ParameterStore, prefix: str, sizes: list[int],
                 rng: np.random.Generator, output_bias: bool = True):
        self.store = store
        self.prefix = prefix
        self.sizes = list(sizes)
        self.output_bias = output_bias
        last = len(sizes) - 2
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            store.add(f"{prefix}/w{i}", xavier_uniform(rng, fi, fo))
            if i < last or output_bias:
                store.add(f"{prefix}/b{i}", np.zeros(fo))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def __call__(self, x: T.Tensor) -> T.Tensor:
        if x.shape[-1] != self.sizes[0]:
            raise T.DimensionError(f"{self.prefix}: expected width {self.sizes[0]}, got {x.shape[-1]}")
        h = x
        for i in range(self.n_layers):
            h = h @ self.store[f"{self.prefix}/w{i}"]
            bias = f"{self.prefix}/b{i}"
            if bias in self.store:
                h = h + self.store[bias]
            if i < self.n_layers - 1:
                h = T.relu(h)
        return h
