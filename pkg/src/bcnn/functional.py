"""Shared real-valued array ops for the binary CNN datapath.

Everything here operates on batched ``(B, C, H, W)`` float arrays and is
used by both the inference path (:mod:`bcnn.blocks`) and the training
engine, so that the two produce bit-identical floating point results
wherever they overlap.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def sign_act(x: np.ndarray) -> np.ndarray:
    """Binarize with the sign(0) = +1 convention."""
    one = np.asarray(1.0, dtype=x.dtype)
    return np.where(x >= 0, one, -one)


def replicate_channels(x: np.ndarray, r: int) -> np.ndarray:
    """Grow channels by an integer factor; output channel j = input j mod C.

    Works on (..., C, H, W).  R=1 returns the input unchanged (same array).
    """
    if r < 1 or int(r) != r:
        raise ValueError(f"replication factor must be an integer >= 1, got {r}")
    if r == 1:
        return x
    reps = (1,) * (x.ndim - 3) + (r, 1, 1)
    return np.tile(x, reps)


def replicate_channels_backward(grad: np.ndarray, r: int, c: int) -> np.ndarray:
    """Fold the gradient of a replicated tensor back onto the C source channels."""
    if r == 1:
        return grad
    shape = grad.shape[:-3] + (r, c) + grad.shape[-2:]
    return grad.reshape(shape).sum(axis=-4)


def avgpool(x: np.ndarray, s: int) -> np.ndarray:
    """Non-overlapping S x S mean pooling on (..., C, H, W)."""
    if s == 1:
        return x
    h, w = x.shape[-2:]
    if h % s or w % s:
        raise ValueError(f"spatial dims {h}x{w} not divisible by pool stride {s}")
    shape = x.shape[:-2] + (h // s, s, w // s, s)
    return x.reshape(shape).mean(axis=(-3, -1))


def avgpool_backward(grad: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return grad
    g = grad / (s * s)
    g = np.repeat(np.repeat(g, s, axis=-2), s, axis=-1)
    return g


def dwconv3x3(x: np.ndarray, weights: np.ndarray, stride: int) -> np.ndarray:
    """Depthwise 3x3 correlation, zero padding 1, stride S, on (B, C, H, W).

    weights is (C, 3, 3); one filter per channel.
    """
    b, c, h, w = x.shape
    if h % stride or w % stride:
        raise ValueError(f"spatial dims {h}x{w} not divisible by stride {stride}")
    xp = np.zeros((b, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    ho, wo = h // stride, w // stride
    out = np.zeros((b, c, ho, wo), dtype=x.dtype)
    for u in range(3):
        for v in range(3):
            tap = xp[:, :, u : u + h : stride, v : v + w : stride]
            out += tap * weights[:, u, v][None, :, None, None]
    return out


def dwconv3x3_backward(grad: np.ndarray, x: np.ndarray, weights: np.ndarray,
                       stride: int) -> tuple:
    """Gradients of dwconv3x3 w.r.t. (input, weights)."""
    b, c, h, w = x.shape
    xp = np.zeros((b, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(weights)
    for u in range(3):
        for v in range(3):
            tap = xp[:, :, u : u + h : stride, v : v + w : stride]
            dw[:, u, v] = np.einsum("bchw,bchw->c", grad, tap)
            dxp[:, :, u : u + h : stride, v : v + w : stride] += (
                grad * weights[:, u, v][None, :, None, None]
            )
    return dxp[:, :, 1:-1, 1:-1], dw


def prelu(x: np.ndarray, slope: np.ndarray) -> np.ndarray:
    """Per-channel PReLU on (..., C, H, W)."""
    a = slope[..., :, None, None]
    return np.where(x > 0, x, x * a)


def prelu_backward(grad: np.ndarray, x: np.ndarray, slope: np.ndarray,
                   reduce_axes: tuple) -> tuple:
    a = slope[..., :, None, None]
    dx = np.where(x > 0, grad, grad * a)
    dslope = np.where(x > 0, np.asarray(0.0, dtype=x.dtype), grad * x).sum(axis=reduce_axes)
    return dx, dslope


def bn_fold(gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray,
            var: np.ndarray, eps: float = BN_EPS) -> tuple:
    """Fold batch-norm statistics into a per-channel (scale, shift) pair."""
    scale = gamma / np.sqrt(var + eps)
    shift = beta - mean * scale
    return scale, shift


def bn_eval(x: np.ndarray, gamma, beta, mean, var, eps: float = BN_EPS) -> np.ndarray:
    """Inference-mode batch norm via the folded scale/shift form."""
    scale, shift = bn_fold(gamma, beta, mean, var, eps)
    return x * scale[..., :, None, None] + shift[..., :, None, None]


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(..., C, H, W) -> (..., C) spatial mean."""
    return x.mean(axis=(-2, -1))


def fc_forward(feat: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(..., C) x (classes, C)^T + bias -> (..., classes)."""
    return feat @ weight.T + bias
