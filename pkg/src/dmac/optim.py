"""RMSprop parameter updates over the tape's gradient buffers."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .autodiff import Tensor


class RMSprop:
    """Root-mean-square gradient scaling: v <- rho*v + (1-rho)*g*g, then
    theta <- theta - lr * g / (sqrt(v) + eps).

    A parameter whose gradient buffer is absent is treated as having a zero
    gradient: its accumulator decays and its value is unchanged.
    """

    def __init__(
        self,
        params: Iterable[Tensor],
        learning_rate: float = 1e-3,
        decay_rho: float = 0.99,
        epsilon_stab: float = 1e-8,
    ):
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        if not 0.0 < decay_rho < 1.0:
            raise ValueError(f"decay_rho must lie in (0, 1), got {decay_rho}")
        if epsilon_stab <= 0:
            raise ValueError(f"epsilon_stab must be positive, got {epsilon_stab}")
        self.params = list(params)
        self.learning_rate = learning_rate
        self.decay_rho = decay_rho
        self.epsilon_stab = epsilon_stab
        self.avg_sq = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        rho = self.decay_rho
        for p, v in zip(self.params, self.avg_sq):
            v *= rho
            g = p.grad
            if g is None:
                continue
            v += (1.0 - rho) * g * g
            p.data -= self.learning_rate * g / (np.sqrt(v) + self.epsilon_stab)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
