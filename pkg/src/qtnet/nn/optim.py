"""Initialisation, ADAM and the step learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..errors import InvalidArgumentError, ShapeError


def kaiming_init(fan_in, shape, rng) -> np.ndarray:
    """Draw from Normal(0, 2 / fan_in)."""
    if fan_in <= 0:
        raise InvalidArgumentError(f"fan_in must be positive, got {fan_in}")
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


def lr_schedule(epoch: int, base_lr: float = 0.01, factor: float = 0.5, every: int = 3) -> float:
    """Halve the learning rate every ``every`` epochs starting from ``base_lr``."""
    if epoch < 0:
        raise InvalidArgumentError("epoch must be non-negative")
    return base_lr * factor ** (epoch // every)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState, lr: float) -> Dict[str, np.ndarray]:
    """Bias-corrected ADAM update, applied in place; returns ``params``.

    Parameters without a gradient entry are left untouched.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if g is None:
            continue
        p = params[name]
        if p.shape != g.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        if m.shape != p.shape:
            raise ShapeError(f"{name}: moment shape {m.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    """Optimizer bound to a model's named parameter tensors."""

    def __init__(self, named_params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(named_params)
        self.state = AdamState(beta1, beta2, eps)

    def step(self, lr: float) -> None:
        data = {k: p.data for k, p in self.params.items()}
        grads = {k: p.grad for k, p in self.params.items()}
        adam_step(data, grads, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
