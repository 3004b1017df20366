"""Model file format.

Layout (all integers little-endian):

    "BCNN" | u16 version | config header | parameter payload

Config header: u16 input_channels, u32 input_size, u32 classes,
u16 parallel, u16 level count, then one row per stem+levels of
(u16 blocks, u16 stride, u16 replication, u32 channels), then
3 + 3 f32 normalization constants.

Payload walks the blocks in order.  Binary weight matrices are stored
packed, one bit per weight, each row padded to 64-bit words; all other
parameters (biases, BN gamma/beta and running mean/var, PReLU slopes,
classifier) are raw float32.  The file ends exactly at the last byte of
the classifier bias; trailing bytes are an error.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, List

import numpy as np

from . import bitcore
from .blocks import Branch, BuildingBlock, ConvModule1x1, DwConvModule3x3
from .network import LevelSpec, Model, NetworkConfig

MAGIC = b"BCNN"
VERSION = 1


class ModelIOError(Exception):
    """Base class for model file problems."""


class BadMagicError(ModelIOError):
    """File does not start with the expected magic bytes."""


class VersionError(ModelIOError):
    """File uses an unsupported format version."""


class TruncatedError(ModelIOError):
    """File ended before the expected payload was complete."""


class FormatError(ModelIOError):
    """Structurally valid read but inconsistent shapes or config values."""


# ---------------------------------------------------------------------------
# low-level helpers
# ---------------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f32s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype="<f4").astype(np.float32)

    def u64s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<u8").astype(np.uint64)

    def done(self) -> bool:
        return self.pos == len(self.data)


def _w_f32s(out: BinaryIO, arr: np.ndarray) -> None:
    out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _w_u64s(out: BinaryIO, arr: np.ndarray) -> None:
    out.write(np.ascontiguousarray(arr, dtype="<u8").tobytes())


# ---------------------------------------------------------------------------
# save
# ---------------------------------------------------------------------------

def _write_conv_module(out: BinaryIO, m: ConvModule1x1) -> None:
    for br in m.branches:
        _w_f32s(out, br.bias)
        _w_u64s(out, bitcore.pack_rows(br.weights_real))
        for arr in (br.bn_gamma, br.bn_beta, br.bn_mean, br.bn_var):
            _w_f32s(out, arr)
    if m.prelu_slope is not None:
        _w_f32s(out, m.prelu_slope)


def _write_dw_module(out: BinaryIO, m: DwConvModule3x3) -> None:
    _w_f32s(out, m.weights)
    for arr in (m.bn_gamma, m.bn_beta, m.bn_mean, m.bn_var):
        _w_f32s(out, arr)
    _w_f32s(out, m.prelu_slope)


def write_config(out: BinaryIO, cfg: NetworkConfig) -> None:
    rows = [cfg.stem] + list(cfg.levels)
    out.write(struct.pack("<HIIHH", cfg.input_channels, cfg.input_size,
                          cfg.classes, cfg.parallel, len(cfg.levels)))
    for lv in rows:
        out.write(struct.pack("<HHHI", lv.blocks, lv.stride, lv.replication,
                              lv.channels))
    _w_f32s(out, np.asarray(cfg.norm_mean, dtype=np.float32))
    _w_f32s(out, np.asarray(cfg.norm_std, dtype=np.float32))


def read_config(r: _Reader, origin: str = "file") -> NetworkConfig:
    in_ch, in_size, classes, parallel, n_levels = struct.unpack("<HIIHH", r.take(14))
    if n_levels > 64 or parallel < 1 or in_ch < 1 or classes < 1:
        raise FormatError(f"implausible header values in {origin}")
    rows = []
    for _ in range(n_levels + 1):
        rows.append(LevelSpec(*struct.unpack("<HHHI", r.take(10))))
    norm_mean = tuple(float(v) for v in r.f32s(3))
    norm_std = tuple(float(v) for v in r.f32s(3))
    cfg = NetworkConfig(input_channels=in_ch, input_size=in_size, classes=classes,
                        parallel=parallel, stem=rows[0], levels=rows[1:],
                        norm_mean=norm_mean, norm_std=norm_std)
    try:
        cfg.validate()
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return cfg


def block_specs(cfg: NetworkConfig) -> List[tuple]:
    """Flat (replication, stride, channels) list, stem first."""
    specs = [(cfg.stem.replication, cfg.stem.stride, cfg.stem.channels)]
    for lv in cfg.levels:
        specs.append((lv.replication, lv.stride, lv.channels))
        specs.extend((1, 1, lv.channels) for _ in range(lv.blocks - 1))
    return specs


def save_model(model: Model, path: str) -> None:
    """Write the model; binary weights are quantized to signs on disk."""
    cfg = model.config
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<H", VERSION))
        write_config(out, cfg)
        for blk in model.blocks:
            _write_conv_module(out, blk.conv_a)
            _write_dw_module(out, blk.dw)
            _write_conv_module(out, blk.conv_b)
            if blk.conv_id is not None:
                _write_conv_module(out, blk.conv_id)
        _w_f32s(out, model.fc_weight)
        _w_f32s(out, model.fc_bias)


# ---------------------------------------------------------------------------
# load
# ---------------------------------------------------------------------------

def _read_conv_module(r: _Reader, c: int, parallel: int,
                      with_prelu: bool) -> ConvModule1x1:
    words_per_row = bitcore.words_needed(c)
    branches = []
    for _ in range(parallel):
        bias = r.f32s(c)
        packed = r.u64s(c * words_per_row).reshape(c, words_per_row)
        weights = bitcore.unpack_rows(packed, c)
        gamma, beta, mean, var = (r.f32s(c) for _ in range(4))
        branches.append(Branch(bias=bias, weights_real=weights, bn_gamma=gamma,
                               bn_beta=beta, bn_mean=mean, bn_var=var))
    slope = r.f32s(c) if with_prelu else None
    return ConvModule1x1(branches=branches, prelu_slope=slope)


def _read_dw_module(r: _Reader, c: int, stride: int) -> DwConvModule3x3:
    weights = r.f32s(c * 9).reshape(c, 3, 3)
    gamma, beta, mean, var = (r.f32s(c) for _ in range(4))
    slope = r.f32s(c)
    return DwConvModule3x3(weights=weights, stride=stride, bn_gamma=gamma,
                           bn_beta=beta, bn_mean=mean, bn_var=var,
                           prelu_slope=slope)


def load_model(path: str) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagicError(f"{path!r} is not a model file (bad magic)")
    version = r.u16()
    if version != VERSION:
        raise VersionError(f"unsupported model format version {version}")
    cfg = read_config(r, origin=repr(path))
    parallel = cfg.parallel

    blocks: List[BuildingBlock] = []
    for rep, stride, c in block_specs(cfg):
        conv_a = _read_conv_module(r, c, parallel, with_prelu=True)
        dw = _read_dw_module(r, c, stride)
        conv_b = _read_conv_module(r, c, parallel, with_prelu=True)
        conv_id = None
        if rep > 1 or stride > 1:
            conv_id = _read_conv_module(r, c, parallel, with_prelu=False)
        blocks.append(BuildingBlock(replication=rep, stride=stride, conv_a=conv_a,
                                    dw=dw, conv_b=conv_b, conv_id=conv_id))
    c5 = cfg.final_channels
    fc_weight = r.f32s(cfg.classes * c5).reshape(cfg.classes, c5)
    fc_bias = r.f32s(cfg.classes)
    if not r.done():
        raise FormatError(f"{len(r.data) - r.pos} unexpected trailing bytes in {path!r}")
    return Model(config=cfg, blocks=blocks, fc_weight=fc_weight, fc_bias=fc_bias)


# ---------------------------------------------------------------------------
# size accounting
# ---------------------------------------------------------------------------

def header_size(config: NetworkConfig) -> int:
    return 4 + 2 + 14 + 10 * (len(config.levels) + 1) + 24


def file_size(config: NetworkConfig) -> int:
    """Exact on-disk size in bytes for a model with this configuration."""
    total = header_size(config)
    p = config.parallel
    for rep, stride, c in block_specs(config):
        conv_bytes = p * (4 * c + 8 * c * bitcore.words_needed(c) + 4 * 4 * c)
        total += conv_bytes + 4 * c          # conv_a + prelu
        total += 4 * (9 * c + 4 * c + c)     # dw
        total += conv_bytes + 4 * c          # conv_b + prelu
        if rep > 1 or stride > 1:
            total += conv_bytes              # conv_id, no prelu
    total += 4 * (config.classes * config.final_channels + config.classes)
    return total
