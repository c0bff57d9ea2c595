"""Adam optimizer over named parameters."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgumentError
from .tensor import Parameter


class Adam:
    """Adam with bias correction; tracks state only for the parameters it owns.

    Frozen parameters are simply never handed to the optimizer, which keeps
    the freeze contract bitwise: nothing here ever touches them.
    """

    def __init__(self, params: list[tuple[str, Parameter]], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        names = [n for n, _ in params]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("duplicate parameter names passed to Adam")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            p.data = p.data - (self.lr * update).astype(p.data.dtype, copy=False)

    def state_dict(self) -> dict:
        out = {"t": np.asarray([self.t], dtype=np.int64)}
        for name in self.m:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        return out

    def load_state_dict(self, state: dict):
        self.t = int(np.ravel(state["t"])[0])
        for name in self.m:
            self.m[name] = np.array(state[f"m/{name}"])
            self.v[name] = np.array(state[f"v/{name}"])
