"""Binary convolution modules and the building block that composes them.

A 1x1 binary convolution module computes, for each of its P parallel
branches, ``BN_p(binconv_p(sign(x + bias_p)))`` and then adds the branch
outputs together plus an identity term before a final per-channel PReLU:

    y = PReLU( sum_p BN_p(W_p * sign(x + bias_p)) + identity )

The identity input of a module is its own input except where a block
routes its shortcut through instead (see ``block_forward``).

A building block is

    replicate(R) -> conv_a (1x1) -> depthwise 3x3 (stride S) -> conv_b (1x1)

where conv_b's identity input is the block shortcut: the replicated
input, average-pooled when S > 1 and passed through a dedicated 1x1
module (without PReLU) whenever the block changes geometry (R > 1 or
S > 1).

Inference supports two interchangeable engines for the 1x1 modules: a
float matmul on +-1 weights and an XNOR/popcount kernel on packed bits.
Both produce exact small integers before batch norm, so their outputs
are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import bitcore
from .functional import (
    BN_EPS,
    avgpool,
    bn_fold,
    dwconv3x3,
    prelu,
    replicate_channels,
    sign_act,
)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass
class Branch:
    """One parallel branch of a 1x1 binary conv module (C in, C out)."""

    bias: np.ndarray          # (C,)  added to the input before sign
    weights_real: np.ndarray  # (C_out, C_in) shadow weights; sign() is applied in binary mode
    bn_gamma: np.ndarray      # (C,)
    bn_beta: np.ndarray
    bn_mean: np.ndarray       # running statistics (inference)
    bn_var: np.ndarray

    @property
    def weights_bin(self) -> np.ndarray:
        """Packed sign(weights_real), one bit row per output channel."""
        return bitcore.pack_rows(self.weights_real)


@dataclass
class ConvModule1x1:
    """P-branch 1x1 binary convolution module."""

    branches: List[Branch]
    prelu_slope: Optional[np.ndarray]  # (C,), or None for shortcut modules
    weight_mode: str = "binary"        # "binary" | "real"
    # optional per-branch input shifts (dy, dx) for FxF emulation
    shifts: Optional[List[tuple]] = None

    @property
    def channels(self) -> int:
        return self.branches[0].weights_real.shape[0]


@dataclass
class DwConvModule3x3:
    """Depthwise real-valued 3x3 conv + BN + PReLU (no identity term)."""

    weights: np.ndarray       # (C, 3, 3)
    stride: int
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_mean: np.ndarray
    bn_var: np.ndarray
    prelu_slope: np.ndarray


@dataclass
class BuildingBlock:
    replication: int
    stride: int
    conv_a: ConvModule1x1
    dw: DwConvModule3x3
    conv_b: ConvModule1x1
    conv_id: Optional[ConvModule1x1] = None  # present iff replication > 1 or stride > 1

    @property
    def channels(self) -> int:
        return self.conv_a.channels


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------

def init_branch(c: int, rng: np.random.Generator, dtype=np.float32) -> Branch:
    return Branch(
        bias=np.zeros(c, dtype=dtype),
        weights_real=rng.uniform(-1.0, 1.0, size=(c, c)).astype(dtype),
        bn_gamma=np.ones(c, dtype=dtype),
        bn_beta=np.zeros(c, dtype=dtype),
        bn_mean=np.zeros(c, dtype=dtype),
        bn_var=np.ones(c, dtype=dtype),
    )


def init_conv_module(c: int, parallel: int, rng: np.random.Generator,
                     with_prelu: bool = True, dtype=np.float32) -> ConvModule1x1:
    branches = [init_branch(c, rng, dtype) for _ in range(parallel)]
    slope = np.full(c, 0.25, dtype=dtype) if with_prelu else None
    return ConvModule1x1(branches=branches, prelu_slope=slope)


def init_dw_module(c: int, stride: int, rng: np.random.Generator,
                   dtype=np.float32) -> DwConvModule3x3:
    return DwConvModule3x3(
        weights=rng.uniform(-1.0, 1.0, size=(c, 3, 3)).astype(dtype),
        stride=stride,
        bn_gamma=np.ones(c, dtype=dtype),
        bn_beta=np.zeros(c, dtype=dtype),
        bn_mean=np.zeros(c, dtype=dtype),
        bn_var=np.ones(c, dtype=dtype),
        prelu_slope=np.full(c, 0.25, dtype=dtype),
    )


def init_block(c_out: int, replication: int, stride: int, parallel: int,
               rng: np.random.Generator, dtype=np.float32) -> BuildingBlock:
    conv_id = None
    if replication > 1 or stride > 1:
        conv_id = init_conv_module(c_out, parallel, rng, with_prelu=False, dtype=dtype)
    return BuildingBlock(
        replication=replication,
        stride=stride,
        conv_a=init_conv_module(c_out, parallel, rng, dtype=dtype),
        dw=init_dw_module(c_out, stride, rng, dtype=dtype),
        conv_b=init_conv_module(c_out, parallel, rng, dtype=dtype),
        conv_id=conv_id,
    )


# ---------------------------------------------------------------------------
# forward (inference; running BN statistics)
# ---------------------------------------------------------------------------

def _binconv_float(w_eff: np.ndarray, a: np.ndarray) -> np.ndarray:
    # a: (B, C, H*W); w_eff: (C_out, C_in)
    return np.matmul(w_eff, a)


def _binconv_packed(branch: Branch, a: np.ndarray) -> np.ndarray:
    """XNOR/popcount path: a is (B, C, HW) +-1 floats.

    Every pixel is a C-vector dotted against every row of the weight
    matrix; counts come back as exact integers.
    """
    b, c, p = a.shape
    w_rows = branch.weights_bin                              # (C_out, W)
    cols = bitcore.pack_rows(a.transpose(0, 2, 1).reshape(b * p, c))  # (B*P, W)
    dots = bitcore.gemm_packed_nt(w_rows, cols, c)            # (C_out, B*P) int32
    return dots.astype(a.dtype).reshape(-1, b, p).transpose(1, 0, 2)  # (B, C_out, HW)


def conv_module_forward(m: ConvModule1x1, x: np.ndarray,
                        identity: Optional[np.ndarray] = None,
                        engine: str = "float") -> np.ndarray:
    """Run a 1x1 module on (B, C, H, W) input.

    identity defaults to the module's own input.  engine selects how the
    binary matmul is evaluated ("float" or "packed"); results agree
    bit-exactly.
    """
    b, c, h, w = x.shape
    if identity is None:
        identity = x
    acc = np.array(identity, copy=True)
    for p, br in enumerate(m.branches):
        xin = x
        if m.shifts is not None:
            dy, dx = m.shifts[p]
            if (dy, dx) != (0, 0):
                xin = shift_image(x, dy, dx)
        t = xin + br.bias[None, :, None, None]
        a = sign_act(t)
        if m.weight_mode == "real":
            w_eff = br.weights_real
            z = _binconv_float(w_eff, a.reshape(b, c, h * w))
        elif engine == "packed":
            z = _binconv_packed(br, a.reshape(b, c, h * w))
        else:
            w_eff = sign_act(br.weights_real)
            z = _binconv_float(w_eff, a.reshape(b, c, h * w))
        z = z.reshape(b, c, h, w)
        scale, shift = bn_fold(br.bn_gamma, br.bn_beta, br.bn_mean, br.bn_var, BN_EPS)
        acc += z * scale[None, :, None, None] + shift[None, :, None, None]
    if m.prelu_slope is not None:
        acc = prelu(acc, m.prelu_slope)
    return acc


def shift_image(x: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Shift (B, C, H, W) content by (dy, dx), zero-filling vacated positions.

    The shift happens on the real pre-sign map, so a zero-filled border
    binarizes as sign(0 + bias) once the branch bias is added downstream.
    """
    out = np.zeros_like(x)
    h, w = x.shape[-2:]
    ys = slice(max(dy, 0), min(h, h + dy))
    xs = slice(max(dx, 0), min(w, w + dx))
    ys_src = slice(max(-dy, 0), min(h, h - dy))
    xs_src = slice(max(-dx, 0), min(w, w - dx))
    out[..., ys, xs] = x[..., ys_src, xs_src]
    return out


def dw_module_forward(m: DwConvModule3x3, x: np.ndarray) -> np.ndarray:
    """Depthwise module: real conv (no binarization), BN, PReLU, no identity."""
    z = dwconv3x3(x, m.weights, m.stride)
    scale, shift = bn_fold(m.bn_gamma, m.bn_beta, m.bn_mean, m.bn_var, BN_EPS)
    z = z * scale[None, :, None, None] + shift[None, :, None, None]
    return prelu(z, m.prelu_slope)


def block_forward(blk: BuildingBlock, x: np.ndarray, engine: str = "float") -> np.ndarray:
    """Full building block on (B, C_in, H, W)."""
    xr = replicate_channels(x, blk.replication)
    ya = conv_module_forward(blk.conv_a, xr, engine=engine)
    yd = dw_module_forward(blk.dw, ya)
    shortcut = xr
    if blk.stride > 1:
        shortcut = avgpool(shortcut, blk.stride)
    if blk.conv_id is not None:
        shortcut = conv_module_forward(blk.conv_id, shortcut, engine=engine)
    return conv_module_forward(blk.conv_b, yd, identity=shortcut, engine=engine)


# ---------------------------------------------------------------------------
# FxF emulation via shifted 1x1 branches
# ---------------------------------------------------------------------------

def make_fxf_module(c: int, f: int, rng: np.random.Generator,
                    dtype=np.float32) -> ConvModule1x1:
    """Emulate an FxF binary conv (odd F) as F^2 shifted 1x1 branches.

    Branch (u, v) sees the input shifted so that its 1x1 weight plays the
    role of kernel tap (u, v); the shift zero-fills the vacated border of
    the real map, which binarizes as sign(bias) once the branch bias is
    added.
    """
    if f % 2 == 0 or f < 1:
        raise ValueError(f"kernel size must be odd and positive, got {f}")
    r = f // 2
    m = init_conv_module(c, f * f, rng, dtype=dtype)
    m.shifts = [(-(u - r), -(v - r)) for u in range(f) for v in range(f)]
    return m
