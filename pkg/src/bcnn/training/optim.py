"""Adam and the warmup + half-cosine learning-rate schedule."""

from __future__ import annotations

import math
from typing import Dict, Iterable, List, Tuple

import numpy as np


def lr_at(epoch: int, max_lr: float, warmup_epochs: int, decay_epochs: int,
          initial_scale: float = 0.01, final_scale: float = 0.001) -> float:
    """Learning rate for a 0-indexed epoch.

    Linear ramp from initial_scale*max_lr at epoch 0 to max_lr at epoch
    `warmup_epochs`, then the first half-period of a cosine down to
    final_scale*max_lr at epoch warmup_epochs + decay_epochs.
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < warmup_epochs:
        frac = epoch / warmup_epochs
        return max_lr * (initial_scale + (1.0 - initial_scale) * frac)
    t = min((epoch - warmup_epochs) / decay_epochs, 1.0)
    lo = max_lr * final_scale
    return lo + (max_lr - lo) * 0.5 * (1.0 + math.cos(math.pi * t))


class Adam:
    """Adam over named parameter arrays, updated in place.

    L2 weight decay is added to the raw gradient (classic Adam-with-L2)
    and only for parameters whose group is in `decay_groups`.
    """

    def __init__(self, params: Iterable[Tuple[str, np.ndarray, str]],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0, decay_groups: frozenset = frozenset()):
        self.params: List[Tuple[str, np.ndarray, str]] = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decay_groups = frozenset(decay_groups)
        self.t = 0
        self.m: Dict[str, np.ndarray] = {n: np.zeros_like(a) for n, a, _ in self.params}
        self.v: Dict[str, np.ndarray] = {n: np.zeros_like(a) for n, a, _ in self.params}

    def reset(self) -> None:
        """Drop all moment estimates (used between training cycles)."""
        self.t = 0
        for n, a, _ in self.params:
            self.m[n] = np.zeros_like(a)
            self.v[n] = np.zeros_like(a)

    def step(self, grads: Dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, arr, group in self.params:
            g = grads.get(name)
            if g is None:
                continue
            if self.weight_decay and group in self.decay_groups:
                g = g + self.weight_decay * arr
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            arr -= lr * mhat / (np.sqrt(vhat) + self.eps)
