"""Adam with bias correction, operating in place on a ParamSet."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .params import ParamSet


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    def __init__(self, params: ParamSet, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.state = AdamState(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        """Apply one update. Raises before touching anything if a gradient is non-finite."""
        for k, g in grads.items():
            if not np.isfinite(g).all():
                raise NonFiniteGradientError(f"non-finite gradient for {k}")
        optimizer_step(self.params, grads, self.lr, self.state, self.beta1, self.beta2, self.eps)


def optimizer_step(params: ParamSet, grads: Mapping[str, np.ndarray], lr: float,
                   state: AdamState, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> ParamSet:
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
    return params
