"""
AdamW: bias-corrected adaptive moments with decoupled weight decay.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .params import ModelParams


@dataclass
class AdamWState:
    step: int = 0
    first: Dict[str, np.ndarray] = field(default_factory=dict)
    second: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams) -> 'AdamWState':
        return cls(
            step=0,
            first={name: np.zeros_like(t) for name, t in params.items()},
            second={name: np.zeros_like(t) for name, t in params.items()},
        )


def adamw_step(params: ModelParams, grads: ModelParams, state: AdamWState, lr: float,
               weight_decay: float, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8) -> ModelParams:
    """
    One in-place AdamW update of ``params``; returns ``params``.

    Decay w <- w * (1 - lr * wd) is applied before the adaptive step and never
    enters the moment estimates.
    """
    if lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    if not state.first:
        fresh = AdamWState.for_params(params)
        state.first, state.second = fresh.first, fresh.second

    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, weights in params.items():
        grad = grads[name]
        m = state.first[name]
        v = state.second[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        if weight_decay:
            weights *= 1.0 - lr * weight_decay
        weights -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return params
