"""Adam with bias correction plus the cosine learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .layers import Parameter
from .tensor import NumericsError


class OptimError(NumericsError):
    pass


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi step / total))."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * step / total_steps))


class Adam:
    """Holds first/second-moment state per parameter; updates in place."""

    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value.data) for p in self.params]
        self._v = [np.zeros_like(p.value.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                raise OptimError(f"gradient not populated for parameter {p.name!r}")
            self._m[i] = b1 * self._m[i] + (1.0 - b1) * g
            self._v[i] = b2 * self._v[i] + (1.0 - b2) * (g * g)
            m_hat = self._m[i] / bc1
            v_hat = self._v[i] / bc2
            p.value.data = p.value.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    # -- checkpoint support -------------------------------------------
    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": {p.name: m.copy() for p, m in zip(self.params, self._m)},
            "v": {p.name: v.copy() for p, v in zip(self.params, self._v)},
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for i, p in enumerate(self.params):
            if p.name in state["m"]:
                self._m[i] = np.asarray(state["m"][p.name]).reshape(self._m[i].shape).copy()
                self._v[i] = np.asarray(state["v"][p.name]).reshape(self._v[i].shape).copy()
