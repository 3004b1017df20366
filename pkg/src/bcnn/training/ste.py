"""Straight-through estimator pieces.

The sign activation and the weight binarization are non-differentiable,
so the backward pass substitutes fixed surrogate derivatives.  Each
surrogate derivative is exactly the true derivative of a smooth
surrogate *forward* function, which is what makes finite-difference
checking possible: wiggle the input of the surrogate forward and the
measured slope must match the gain used in backprop.

Activation path (triangle gain / piecewise-quadratic forward):

    gain(x)      = 2 - 2|x|   for |x| <= 1, else 0
    surrogate(x) = -1                  x < -1
                   x^2 + 2x            -1 <= x < 0
                   -x^2 + 2x           0 <= x < 1
                   1                   x >= 1

Weight path (box gain / clip forward):

    gain(x)      = 1 for |x| <= 1, else 0
    surrogate(x) = clip(x, -1, 1)

The backward pass is identical whether the forward used sign() or the
surrogate; only the forward values differ between modes.
"""

from __future__ import annotations

import numpy as np


def act_backward_gain(x: np.ndarray) -> np.ndarray:
    """Derivative applied to upstream gradients crossing a sign activation."""
    ax = np.abs(x)
    return np.where(ax <= 1.0, 2.0 - 2.0 * ax, 0.0).astype(x.dtype)


def act_surrogate(x: np.ndarray) -> np.ndarray:
    """Smooth stand-in for sign(); its derivative is act_backward_gain."""
    neg = x * x + 2.0 * x
    pos = -x * x + 2.0 * x
    mid = np.where(x < 0, neg, pos)
    out = np.where(x < -1.0, -1.0, np.where(x >= 1.0, 1.0, mid))
    return out.astype(x.dtype)


def weight_backward_gain(x: np.ndarray) -> np.ndarray:
    """Derivative applied to upstream gradients crossing weight binarization."""
    return (np.abs(x) <= 1.0).astype(x.dtype)


def weight_surrogate(x: np.ndarray) -> np.ndarray:
    """Smooth stand-in for sign() on weights; derivative is the box gain."""
    return np.clip(x, -1.0, 1.0)
