"""Adam-family optimizers over dicts of named numpy arrays.

Parameters are updated in place, so any object holding references to the
same arrays sees the updates.
"""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam with classic L2 weight decay (decay added to the gradient)."""

    decoupled = False

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ) -> None:
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}
        self._t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for key, param in self.params.items():
            g = grads[key]
            if self.weight_decay and not self.decoupled:
                g = g + self.weight_decay * param
            m = self._m[key]
            v = self._v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self._t)
            v_hat = v / (1.0 - b2**self._t)
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay and self.decoupled:
                update = update + self.weight_decay * param
            param -= self.lr * update


class AdamW(Adam):
    """Adam with decoupled weight decay applied directly to the parameters."""

    decoupled = True
