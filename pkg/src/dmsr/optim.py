"""Adam with bias-corrected first/second moments."""

from __future__ import annotations

import numpy as np

from .tensor import NumericError


class Adam:
    """Standard Adam over a name -> Tensor parameter dict.

    update = lr * m_hat / (sqrt(v_hat) + eps) with
    m_hat = m/(1 - beta1^t), v_hat = v/(1 - beta2^t).  A non-finite
    gradient aborts the step, naming the offending parameter.
    """

    def __init__(self, params: dict, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericError(
                    f"non-finite gradient for parameter '{name}'")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2)
                                                     + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state_arrays(self, state: dict):
        self.t = int(state["t"])
        for name in self.params:
            self.m[name] = np.array(state["m"][name])
            self.v[name] = np.array(state["v"][name])
