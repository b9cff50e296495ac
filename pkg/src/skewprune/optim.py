"""Adam optimizer over a name -> Tensor parameter mapping."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .autograd import DimensionError, Tensor


class Adam:
    """Adam with bias correction.

    Moments are kept per parameter name. Names are visited in sorted order
    so updates are deterministic regardless of mapping insertion order.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, Tensor]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in sorted(params):
            p = params[name]
            if p.grad is None:
                continue
            adam_update(p.data, p.grad, self._state(name, p), self.t, self.lr,
                        self.beta1, self.beta2, self.eps, self.weight_decay, c1, c2)

    def _state(self, name: str, p: Tensor) -> tuple[np.ndarray, np.ndarray]:
        m = self.m.get(name)
        if m is None or m.shape != p.shape:
            m = self.m[name] = np.zeros(p.shape, dtype=np.float64)
            self.v[name] = np.zeros(p.shape, dtype=np.float64)
        return m, self.v[name]

    def reset(self) -> None:
        self.t = 0
        self.m.clear()
        self.v.clear()


def adam_update(param: np.ndarray, grad: np.ndarray, state: tuple[np.ndarray, np.ndarray], t: int,
                lr: float, beta1: float, beta2: float, eps: float, weight_decay: float = 0.0,
                c1: float | None = None, c2: float | None = None) -> None:
    """In-place Adam update of ``param``; ``state`` is the (m, v) moment pair."""
    m, v = state
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise DimensionError(f"adam: param {param.shape}, grad {grad.shape}, state {m.shape}/{v.shape}")
    c1 = 1.0 - beta1 ** t if c1 is None else c1
    c2 = 1.0 - beta2 ** t if c2 is None else c2
    g = grad.astype(np.float64)
    if weight_decay:
        g = g + weight_decay * param
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
    param -= update.astype(param.dtype)
