"""Adaptive-moment gradient ascent/descent over parameter leaves."""

from __future__ import annotations

import numpy as np

from .tensor import GradientMap, Tensor


class Adam:
    """Standard bias-corrected adaptive-moment optimizer.

    Holds per-parameter first/second moment state; ``step`` applies one
    update in place from a GradientMap. Parameters absent from the map are
    left untouched (their state does not advance either, so an unused
    parameter stays bit-identical).
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {p.uid: np.zeros_like(p.data) for p in self.params}
        self._v = {p.uid: np.zeros_like(p.data) for p in self.params}
        self._t = {p.uid: 0 for p in self.params}

    def step(self, grads: GradientMap, maximize: bool = False) -> None:
        for p in self.params:
            g = grads.get(p)
            if g is None:
                continue
            garr = -g.data if maximize else g.data
            t = self._t[p.uid] + 1
            self._t[p.uid] = t
            m = self._m[p.uid]
            v = self._v[p.uid]
            m *= self.beta1
            m += (1.0 - self.beta1) * garr
            v *= self.beta2
            v += (1.0 - self.beta2) * garr * garr
            mhat = m / (1.0 - self.beta1**t)
            vhat = v / (1.0 - self.beta2**t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
