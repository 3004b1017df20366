"""Training-mode forward/backward for the full network.

The inference path in :mod:`bcnn.blocks` is stateless and uses running
BN statistics; training needs batch statistics, gradients, and the
straight-through substitutions, so this module implements an explicit
static-graph forward that records caches and a hand-written backward
that consumes them.

Three weight modes share one backward implementation:

* "real"  — step 1: the stored real weights multiply directly.
* "sign"  — step 2: sign(shadow) multiplies; gradients reach the shadow
  through the box gain (zero outside [-1, 1]).
* "clip"  — finite-difference mode: clip(shadow) multiplies; its true
  derivative *is* the box gain, so the backward is unchanged.

Similarly the activation mode "sign" vs "surrogate" only changes forward
values; the backward gain is the same triangle either way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..blocks import BuildingBlock, ConvModule1x1, DwConvModule3x3
from ..functional import (
    BN_EPS,
    avgpool,
    avgpool_backward,
    dwconv3x3,
    dwconv3x3_backward,
    replicate_channels,
    replicate_channels_backward,
    sign_act,
)
from ..network import Model
from .ste import act_backward_gain, act_surrogate, weight_backward_gain, weight_surrogate


@dataclass
class TrainMode:
    weight_mode: str = "real"      # "real" | "sign" | "clip"
    act_mode: str = "sign"         # "sign" | "surrogate"
    bn_mode: str = "batch"         # "batch" | "running"
    update_running: bool = True
    bn_momentum: float = 0.1


def _act(x: np.ndarray, mode: TrainMode) -> np.ndarray:
    return act_surrogate(x) if mode.act_mode == "surrogate" else sign_act(x)


def _w_eff(shadow: np.ndarray, mode: TrainMode) -> np.ndarray:
    if mode.weight_mode == "real":
        return shadow
    if mode.weight_mode == "sign":
        return sign_act(shadow)
    return weight_surrogate(shadow)


def _bn_forward(z: np.ndarray, gamma, beta, mean, var, mode: TrainMode,
                cache: dict) -> np.ndarray:
    if mode.bn_mode == "batch":
        mu = z.mean(axis=(0, 2, 3))
        centered = z - mu[None, :, None, None]
        v = np.mean(centered * centered, axis=(0, 2, 3))
        if mode.update_running:
            mom = mode.bn_momentum
            mean *= 1.0 - mom
            mean += mom * mu
            var *= 1.0 - mom
            var += mom * v
    else:
        mu, v = mean, var
        centered = z - mu[None, :, None, None]
    inv = 1.0 / np.sqrt(v + BN_EPS)
    xhat = centered * inv[None, :, None, None]
    cache["xhat"] = xhat
    cache["inv"] = inv
    cache["batch_stats"] = mode.bn_mode == "batch"
    return gamma[None, :, None, None] * xhat + beta[None, :, None, None]


def _bn_backward(dy: np.ndarray, gamma: np.ndarray, cache: dict):
    xhat, inv = cache["xhat"], cache["inv"]
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    if cache["batch_stats"]:
        mean_dxhat = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dx_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        dz = inv[None, :, None, None] * (dxhat - mean_dxhat - xhat * mean_dx_xhat)
    else:
        dz = dxhat * inv[None, :, None, None]
    return dz, dgamma, dbeta


def _prelu_forward(s: np.ndarray, slope: np.ndarray) -> np.ndarray:
    return np.where(s > 0, s, s * slope[None, :, None, None])


def _prelu_backward(dy: np.ndarray, s: np.ndarray, slope: np.ndarray):
    ds = np.where(s > 0, dy, dy * slope[None, :, None, None])
    dslope = (dy * np.minimum(s, 0)).sum(axis=(0, 2, 3))
    return ds, dslope


# ---------------------------------------------------------------------------
# 1x1 conv module
# ---------------------------------------------------------------------------

def conv_module_fwd(m: ConvModule1x1, x: np.ndarray, mode: TrainMode,
                    identity: Optional[np.ndarray] = None) -> tuple:
    b, c, h, w = x.shape
    if identity is None:
        identity = x
        own_identity = True
    else:
        own_identity = False
    acc = np.array(identity, copy=True)
    branches = []
    for br in m.branches:
        cache: dict = {}
        t = x + br.bias[None, :, None, None]
        a = _act(t, mode)
        w_eff = _w_eff(br.weights_real, mode)
        z = np.matmul(w_eff, a.reshape(b, c, h * w)).reshape(b, c, h, w)
        y = _bn_forward(z, br.bn_gamma, br.bn_beta, br.bn_mean, br.bn_var,
                        mode, cache)
        cache.update(t=t, a=a, w_eff=w_eff)
        branches.append(cache)
        acc += y
    cache_mod = {"branches": branches, "own_identity": own_identity, "x_shape": x.shape}
    if m.prelu_slope is not None:
        cache_mod["s"] = acc
        out = _prelu_forward(acc, m.prelu_slope)
    else:
        out = acc
    return out, cache_mod


def conv_module_bwd(m: ConvModule1x1, dout: np.ndarray, cache: dict,
                    mode: TrainMode, grads: Dict[str, np.ndarray],
                    prefix: str) -> tuple:
    """Returns (dx, didentity)."""
    if m.prelu_slope is not None:
        ds, dslope = _prelu_backward(dout, cache["s"], m.prelu_slope)
        grads[f"{prefix}.prelu"] = dslope
    else:
        ds = dout
    didentity = ds
    b, c, h, w = cache["x_shape"]
    dx = np.zeros(cache["x_shape"], dtype=ds.dtype)
    for p, (br, bc) in enumerate(zip(m.branches, cache["branches"])):
        dz, dgamma, dbeta = _bn_backward(ds, br.bn_gamma, bc)
        dzf = dz.reshape(b, c, h * w)
        af = bc["a"].reshape(b, c, h * w)
        dw_eff = np.matmul(dzf, af.transpose(0, 2, 1)).sum(axis=0)
        if mode.weight_mode == "real":
            dw = dw_eff
        else:
            dw = dw_eff * weight_backward_gain(br.weights_real)
        da = np.matmul(bc["w_eff"].T, dzf).reshape(b, c, h, w)
        dt = da * act_backward_gain(bc["t"])
        grads[f"{prefix}.b{p}.bias"] = dt.sum(axis=(0, 2, 3))
        grads[f"{prefix}.b{p}.weights"] = dw
        grads[f"{prefix}.b{p}.bn_gamma"] = dgamma
        grads[f"{prefix}.b{p}.bn_beta"] = dbeta
        dx += dt
    if cache["own_identity"]:
        dx += didentity
        didentity = None
    return dx, didentity


# ---------------------------------------------------------------------------
# depthwise module
# ---------------------------------------------------------------------------

def dw_module_fwd(m: DwConvModule3x3, x: np.ndarray, mode: TrainMode) -> tuple:
    cache: dict = {"x": x}
    z = dwconv3x3(x, m.weights, m.stride)
    y = _bn_forward(z, m.bn_gamma, m.bn_beta, m.bn_mean, m.bn_var, mode, cache)
    cache["s"] = y
    return _prelu_forward(y, m.prelu_slope), cache


def dw_module_bwd(m: DwConvModule3x3, dout: np.ndarray, cache: dict,
                  grads: Dict[str, np.ndarray], prefix: str) -> np.ndarray:
    ds, dslope = _prelu_backward(dout, cache["s"], m.prelu_slope)
    dz, dgamma, dbeta = _bn_backward(ds, m.bn_gamma, cache)
    dx, dw = dwconv3x3_backward(dz, cache["x"], m.weights, m.stride)
    grads[f"{prefix}.prelu"] = dslope
    grads[f"{prefix}.bn_gamma"] = dgamma
    grads[f"{prefix}.bn_beta"] = dbeta
    grads[f"{prefix}.weights"] = dw
    return dx


# ---------------------------------------------------------------------------
# block and full model
# ---------------------------------------------------------------------------

def block_fwd(blk: BuildingBlock, x: np.ndarray, mode: TrainMode) -> tuple:
    cache: dict = {"c_in": x.shape[1]}
    xr = replicate_channels(x, blk.replication)
    ya, cache["conv_a"] = conv_module_fwd(blk.conv_a, xr, mode)
    yd, cache["dw"] = dw_module_fwd(blk.dw, ya, mode)
    shortcut = xr
    if blk.stride > 1:
        shortcut = avgpool(shortcut, blk.stride)
    if blk.conv_id is not None:
        shortcut, cache["conv_id"] = conv_module_fwd(blk.conv_id, shortcut, mode)
    out, cache["conv_b"] = conv_module_fwd(blk.conv_b, yd, mode, identity=shortcut)
    return out, cache


def block_bwd(blk: BuildingBlock, dout: np.ndarray, cache: dict, mode: TrainMode,
              grads: Dict[str, np.ndarray], prefix: str) -> np.ndarray:
    d_yd, d_short = conv_module_bwd(blk.conv_b, dout, cache["conv_b"], mode,
                                    grads, f"{prefix}.conv_b")
    if blk.conv_id is not None:
        d_short, d_id_identity = conv_module_bwd(blk.conv_id, d_short,
                                                 cache["conv_id"], mode, grads,
                                                 f"{prefix}.conv_id")
        # conv_id uses its own input as identity, so d_id_identity is None
        assert d_id_identity is None
    if blk.stride > 1:
        d_short = avgpool_backward(d_short, blk.stride)
    d_ya = dw_module_bwd(blk.dw, d_yd, cache["dw"], grads, f"{prefix}.dw")
    d_xr, d_a_identity = conv_module_bwd(blk.conv_a, d_ya, cache["conv_a"], mode,
                                         grads, f"{prefix}.conv_a")
    assert d_a_identity is None
    d_xr += d_short
    return replicate_channels_backward(d_xr, blk.replication, cache["c_in"])


def forward_train(model: Model, x: np.ndarray, mode: TrainMode) -> tuple:
    """x is a preprocessed (B, 4, H, W) tensor; returns (logits, cache)."""
    caches = []
    for blk in model.blocks:
        x, c = block_fwd(blk, x, mode)
        caches.append(c)
    feat = x.mean(axis=(2, 3))
    logits = feat @ model.fc_weight.T + model.fc_bias
    return logits, {"blocks": caches, "feat": feat, "spatial": x.shape[2:]}


def backward_train(model: Model, dlogits: np.ndarray, cache: dict,
                   mode: TrainMode) -> Dict[str, np.ndarray]:
    grads: Dict[str, np.ndarray] = {}
    grads["fc.weight"] = dlogits.T @ cache["feat"]
    grads["fc.bias"] = dlogits.sum(axis=0)
    dfeat = dlogits @ model.fc_weight
    h, w = cache["spatial"]
    dx = np.broadcast_to(dfeat[:, :, None, None] / (h * w),
                         dfeat.shape + (h, w)).astype(dfeat.dtype)
    for i in range(len(model.blocks) - 1, -1, -1):
        dx = block_bwd(model.blocks[i], dx, cache["blocks"][i], mode, grads,
                       f"block{i}")
    return grads
