from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from ..tensor import Tensor


@dataclass
class AdamW:
    """Adam with decoupled weight decay.

    Per step: ``p -= lr * wd * p`` then the bias-corrected Adam update.
    Parameters listed in ``frozen`` are skipped entirely (no decay, no moment
    update).
    """

    params: list[Tensor]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    exp_avg: list[np.ndarray] = field(default_factory=list)
    exp_avg_sq: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        if not self.exp_avg:
            self.exp_avg = [np.zeros_like(p.data) for p in self.params]
            self.exp_avg_sq = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float, weight_decay: float, frozen: Optional[Iterable[int]] = None) -> None:
        skip = set(frozen or ())
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            if i in skip:
                continue
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            m, v = self.exp_avg[i], self.exp_avg_sq[i]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            data = p.data
            if weight_decay:
                data = data * (1.0 - lr * weight_decay)
            p.data = (data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)


def adamw_step(params: list[Tensor], state: Optional[AdamW], lr: float, weight_decay: float) -> AdamW:
    """One functional AdamW step; creates the state on first use."""
    if state is None:
        state = AdamW(params)
    state.step(lr, weight_decay)
    return state
