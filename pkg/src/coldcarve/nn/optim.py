"""Adam with optional per-element gradient masks, and step learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepDecay:
    """Multiply the learning rate by ``factor`` every ``every`` epochs."""

    factor: float
    every: int

    def __post_init__(self) -> None:
        if not 0 < self.factor <= 1 or self.every < 1:
            raise ValueError("need 0 < factor <= 1 and every >= 1")

    def __call__(self, lr: float, epoch: int) -> float:
        return lr * self.factor ** (epoch // self.every)


SCHEDULES = {
    "None": None,
    "HalveEvery10": StepDecay(0.5, 10),
    "Factor0.9Every10": StepDecay(0.9, 10),
}


def schedule_from(name) -> StepDecay | None:
    if name is None or isinstance(name, StepDecay):
        return name
    try:
        return SCHEDULES[name]
    except KeyError:
        raise ValueError(f"unknown lr schedule {name!r}; choose from {sorted(SCHEDULES)}") from None


class Adam:
    """Adam over a list of parameter arrays, updated in place.

    Step counts are kept per element so that an element whose gradient is
    masked out sees no update at all: its value, both moments and its bias
    correction clock stay as they were.
    """

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = [np.zeros(p.shape, dtype=np.int64) for p in params]

    def step(self, grads: list[np.ndarray], masks: list[np.ndarray] | None = None) -> None:
        b1, b2 = self.beta1, self.beta2
        for i, (p, g) in enumerate(zip(self.params, grads)):
            m, v, t = self.m[i], self.v[i], self.t[i]
            if masks is None:
                t += 1
                m[...] = b1 * m + (1 - b1) * g
                v[...] = b2 * v + (1 - b2) * g * g
                sel = (Ellipsis,)
                tt, mm, vv = t, m, v
            else:
                sel = np.nonzero(masks[i])
                g = g[sel]
                t[sel] += 1
                m[sel] = b1 * m[sel] + (1 - b1) * g
                v[sel] = b2 * v[sel] + (1 - b2) * g * g
                tt, mm, vv = t[sel], m[sel], v[sel]
            c1 = (1 - b1 ** tt).astype(p.dtype)
            c2 = (1 - b2 ** tt).astype(p.dtype)
            p[sel] -= self.lr * (mm / c1) / (np.sqrt(vv / c2) + self.eps)
