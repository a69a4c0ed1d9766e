"""AdamW with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from .autograd import Tensor


@dataclass
class AdamWState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamWState) -> None:
    """Update ``params`` in place.

    Weight decay shrinks each parameter before the bias-corrected adaptive
    step; parameters without a gradient are skipped (moments untouched).
    """
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1**t
    c2 = 1 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        if state.weight_decay:
            p *= 1 - state.lr * state.weight_decay
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class AdamW:
    """Optimizer over named parameter tensors."""

    def __init__(self, params: dict[str, Tensor], lr=5e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.state = AdamWState(lr, betas[0], betas[1], eps, weight_decay)

    def step(self) -> None:
        adamw_step(
            {n: p.data for n, p in self.params.items()},
            {n: p.grad for n, p in self.params.items() if p.grad is not None},
            self.state,
        )

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
