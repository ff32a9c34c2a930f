"""Adam with decoupled weight decay (default 0)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import Tensor
from .errors import NumericError, ShapeError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    # per-parameter first/second moments and step counts, keyed by parameter name
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)


def optimizer_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    lr: float,
    state: AdamState,
) -> None:
    """Update ``params`` in place for every name present in ``grads``.

    Parameters without a gradient entry (frozen ones) are left untouched.
    All gradients are checked before anything is modified.
    """
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
            state.t[name] = 0
        t = state.t[name] = state.t[name] + 1
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        update = m_hat / (np.sqrt(v_hat) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data = p.data - lr * update


class Adam:
    """Convenience wrapper that pulls gradients off the parameters themselves."""

    def __init__(self, params: Mapping[str, Tensor], lr: float, weight_decay: float = 0.0) -> None:
        self.params = dict(params)
        self.lr = lr
        self.state = AdamState(weight_decay=weight_decay)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        grads = {
            name: p.grad
            for name, p in self.params.items()
            if p.requires_grad and p.grad is not None
        }
        optimizer_step(self.params, grads, self.lr if lr is None else lr, self.state)
