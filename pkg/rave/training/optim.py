"""Adam with per-Gaussian moment state, plus the exponential rate schedule.

Each Gaussian (row) keeps its own step counter, so a row left out of an
update keeps its moments and bias correction exactly as they were.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..models.train import AdamSettings


def expon_lr(step: int, lr_init: float, lr_final: float, max_steps: int) -> float:
    """Log-linear decay from `lr_init` at step 0 to `lr_final` at `max_steps`."""
    if step < 0 or (lr_init == 0.0 and lr_final == 0.0):
        return 0.0
    t = min(max(step / max_steps, 0.0), 1.0) if max_steps > 0 else 1.0
    return math.exp(math.log(lr_init) * (1 - t) + math.log(lr_final) * t)


def decayed_rates(
    base: dict[str, float], final_factor: float, step: int, max_steps: int
) -> dict[str, float]:
    """Every group decays from its base rate to `final_factor` times it."""
    return {
        name: expon_lr(step, lr, lr * final_factor, max_steps)
        for name, lr in base.items()
    }


@dataclass(frozen=True)
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    steps: np.ndarray


class Adam:
    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: dict[str, float],
        settings: Optional[AdamSettings] = None,
    ) -> None:
        settings = settings or AdamSettings()
        self.beta1 = settings.beta1
        self.beta2 = settings.beta2
        self.epsilon = settings.epsilon
        self.lr = dict(lr)
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        count = next(iter(params.values())).shape[0] if params else 0
        self.steps = np.zeros(count, dtype=np.int64)

    def snapshot(self) -> AdamState:
        return AdamState(
            m={k: v.copy() for k, v in self.m.items()},
            v={k: v.copy() for k, v in self.v.items()},
            steps=self.steps.copy(),
        )

    def restore(self, state: AdamState) -> None:
        self.m = {k: v.copy() for k, v in state.m.items()}
        self.v = {k: v.copy() for k, v in state.v.items()}
        self.steps = state.steps.copy()

    def step(
        self,
        params: dict[str, np.ndarray],
        grads: dict[str, np.ndarray],
        rows: Optional[np.ndarray] = None,
    ) -> None:
        """Update `params` in place; only `rows` move when given."""
        if rows is None:
            rows = np.arange(self.steps.size)
        if rows.size == 0:
            return
        self.steps[rows] += 1
        t = self.steps[rows]
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t

        for k, param in params.items():
            g = grads[k][rows]
            m = self.m[k][rows] * self.beta1 + (1.0 - self.beta1) * g
            v = self.v[k][rows] * self.beta2 + (1.0 - self.beta2) * (g * g)
            self.m[k][rows] = m
            self.v[k][rows] = v
            shape = (-1,) + (1,) * (g.ndim - 1)
            denom = np.sqrt(v / bc2.reshape(shape)) + self.epsilon
            param[rows] -= (self.lr[k] / bc1.reshape(shape)) * m / denom
