"""Stochastic gradient descent with classical momentum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Param


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


def sgd_step(
    value: np.ndarray, grad: np.ndarray, velocity: np.ndarray, cfg: OptimizerConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Pure form of one update: v <- mu*v + g, w <- w - lr*v."""
    if value.shape != grad.shape or value.shape != velocity.shape:
        raise ValueError("value, grad and velocity shapes must match")
    v = cfg.momentum * velocity + grad
    return value - cfg.learning_rate * v, v


class SgdMomentum:
    """Applies sgd_step in place, uniformly, to every registered parameter."""

    def __init__(self, params: list[Param], cfg: OptimizerConfig):
        self.params = params
        self.cfg = cfg
        self.velocity = [np.zeros_like(p.value) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            v *= self.cfg.momentum
            v += p.grad
            p.value -= self.cfg.learning_rate * v
