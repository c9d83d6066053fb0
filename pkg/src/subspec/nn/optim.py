from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ShapeError


@dataclass
class StepSchedule:
    """Learning rate divided by ``factor`` every ``period`` epochs."""

    initial: float = 0.1
    factor: float = 10.0
    period: int = 100

    def lr(self, epoch: int) -> float:
        return self.initial / self.factor ** (epoch // self.period)


@dataclass
class OptimizerState:
    learning_rate: float = 0.1
    momentum: float = 0.9
    schedule: StepSchedule = field(default_factory=StepSchedule)
    epoch: int = 0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    def set_epoch(self, epoch: int) -> float:
        self.epoch = epoch
        self.learning_rate = self.schedule.lr(epoch)
        return self.learning_rate


def sgd_nesterov_step(params, state: OptimizerState) -> None:
    """In-place Nesterov update in the usual reformulated form.

    v <- mu v - lr g;  theta <- theta + mu v - lr g
    """
    lr, mu = state.learning_rate, state.momentum
    for p in params:
        g = p.grad
        if g is None:
            continue
        if g.shape != p.value.shape:
            raise ShapeError(f"{p.name}: gradient {g.shape} vs parameter {p.value.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericError(f"{p.name}: {bad} non-finite gradient entries at epoch {state.epoch}")
        v = state.velocity.get(p.name)
        if v is None:
            v = np.zeros_like(p.value)
        v = mu * v - lr * g
        state.velocity[p.name] = v.astype(p.value.dtype, copy=False)
        p.value += (mu * v - lr * g).astype(p.value.dtype, copy=False)
