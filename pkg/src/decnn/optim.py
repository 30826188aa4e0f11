"""Adam with bias correction, updating a list of :class:`Param` in place."""

from __future__ import annotations

import numpy as np

from .errors import StateError
from .layers import Param

LR = 1e-5
BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class Adam:
    def __init__(self, params: list[Param], lr: float = LR, beta1: float = BETA1,
                 beta2: float = BETA2, eps: float = EPS):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}

    def step(self) -> None:
        if not any(p.filled for p in self.params):
            raise StateError("Adam.step() called before any gradient was accumulated")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            dt = p.value.dtype.type
            g = p.grad
            m, v = self.m[p.name], self.v[p.name]
            m *= dt(self.beta1)
            m += dt(1.0 - self.beta1) * g
            v *= dt(self.beta2)
            v += dt(1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / dt(bc2)) + dt(self.eps)
            p.value -= dt(self.lr / bc1) * m / denom
            p.version += 1
            p.zero_grad()

    def state_dict(self) -> dict:
        return {
            "t": self.t, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "m": {k: a.copy() for k, a in self.m.items()},
            "v": {k: a.copy() for k, a in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr, self.beta1 = state["lr"], state["beta1"]
        self.beta2, self.eps = state["beta2"], state["eps"]
        for name in self.m:
            self.m[name][...] = state["m"][name]
            self.v[name][...] = state["v"][name]


def step(state: Adam) -> None:
    state.step()
