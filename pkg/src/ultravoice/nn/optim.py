"""RMSprop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RMSprop:
    """``v <- alpha v + (1 - alpha) g^2``; ``theta <- theta - lr g / (sqrt(v) + eps)``."""

    lr: float = 0.001
    alpha: float = 0.95
    eps: float = 1e-7
    batch_size: int = 128
    state: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    steps: int = 0

    def step(self, model) -> None:
        for name, layer in model.trainable_layers():
            for k, p in layer.params.items():
                g = layer.grads.get(k)
                if g is None:
                    continue
                key = f"{name}.{k}"
                v = self.state.get(key)
                if v is None:
                    v = np.zeros_like(p)
                v *= p.dtype.type(self.alpha)
                v += p.dtype.type(1 - self.alpha) * g * g
                self.state[key] = v
                if self.lr:
                    p -= p.dtype.type(self.lr) * g / (np.sqrt(v) + p.dtype.type(self.eps))
        self.steps += 1
