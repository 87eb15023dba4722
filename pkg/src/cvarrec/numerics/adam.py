"""Adam with an optional lazy (row-sparse) update for embedding tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .store import ParameterStore


class OptimizerStateError(RuntimeError):
    pass


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"m/{k}": a for k, a in self.m.items()}
        out.update({f"v/{k}": a for k, a in self.v.items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray], step: int) -> None:
        self.m = {k[2:]: a.copy() for k, a in arrays.items() if k.startswith("m/")}
        self.v = {k[2:]: a.copy() for k, a in arrays.items() if k.startswith("v/")}
        self.step = step


def adam_step(state: AdamState, params: ParameterStore,
              sparse_rows: dict[str, np.ndarray] | None = None) -> None:
    """Apply one bias-corrected Adam update to every unfrozen parameter.

    For names in ``sparse_rows`` only the listed rows have their moments and
    values touched; other rows keep their (possibly zero) moments, which is
    the usual lazy-Adam convention. Gradients on every parameter, frozen or
    not, are cleared afterwards.
    """
    sparse_rows = sparse_rows or {}
    live = [(n, t) for n, t in params.items() if not params.is_frozen(n)]
    for n, t in live:
        if t.grad is None:
            raise OptimizerStateError(f"parameter {n!r} has no gradient and is not frozen")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for n, t in live:
        m = state.m.get(n)
        if m is None:
            m = state.m[n] = np.zeros_like(t.data)
            state.v[n] = np.zeros_like(t.data)
        v = state.v[n]
        g = t.grad
        rows = sparse_rows.get(n)
        if rows is None:
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            t.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        else:
            rows = np.unique(np.asarray(rows, dtype=np.intp))
            gr = g[rows]
            m[rows] = b1 * m[rows] + (1.0 - b1) * gr
            v[rows] = b2 * v[rows] + (1.0 - b2) * gr * gr
            t.data[rows] -= state.learning_rate * (m[rows] / c1) / (np.sqrt(v[rows] / c2) + state.epsilon)
    params.zero_grad()
