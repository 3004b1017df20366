"""Operation and parameter counting for the binary CNN.

Counting conventions (these determine every number this module emits):

* A binary 1x1 module with P branches on a C-channel HxW map costs
  P*C*C*H*W binary MACs.  Real side per branch: one bias add and one
  sign op per input element, one BN multiply and one BN add per output
  element.  Combining P branches costs (P-1) adds per output element,
  and the identity shortcut one more add.  PReLU is one op per output
  element; shortcut (conv_id) modules have no PReLU.
* The depthwise 3x3 conv is real arithmetic: 9 MACs per output element
  (counted as MACs, not split), plus its BN (1 mul + 1 add/elem) and
  PReLU.
* Average pooling with stride S costs S*S-1 adds per output element
  (the 1/S^2 scaling is folded and not counted); global average pooling
  costs H*W-1 adds per channel.
* The classifier is classes*C real MACs plus `classes` bias adds.
* Parameters: binary weight matrices count 1 bit each; real parameters
  are biases, BN gamma/beta (running statistics are buffers, excluded),
  PReLU slopes, and the classifier.

Normalizations: parameter megabytes = (binary_bits/8 + real_params)/1e6
(real parameters at one byte, i.e. 8-bit deployment quantization);
normalized mega-ops = (binary_macs/64 + real_macs + other_real_ops/2)/1e6,
i.e. 64 binary MACs or 2 non-MAC real ops cost one op unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .network import NetworkConfig


@dataclass
class OpCounts:
    binary_params: int = 0
    binary_macs: int = 0
    real_params: int = 0
    real_macs: int = 0
    real_adds: int = 0
    real_mults: int = 0
    sign_ops: int = 0
    prelu_ops: int = 0

    def __iadd__(self, other: "OpCounts") -> "OpCounts":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def conv_module_counts(c: int, hw: int, parallel: int, with_prelu: bool) -> OpCounts:
    """One 1x1 binary module on a C-channel map of hw spatial elements."""
    elems = c * hw
    return OpCounts(
        binary_params=parallel * c * c,
        binary_macs=parallel * c * c * hw,
        real_params=parallel * 3 * c + (c if with_prelu else 0),
        real_adds=parallel * 2 * elems + (parallel - 1) * elems + elems,
        real_mults=parallel * elems,
        sign_ops=parallel * elems,
        prelu_ops=elems if with_prelu else 0,
    )


def dw_module_counts(c: int, hw_out: int) -> OpCounts:
    elems = c * hw_out
    return OpCounts(
        real_params=9 * c + 2 * c + c,
        real_macs=9 * elems,
        real_adds=elems,
        real_mults=elems,
        prelu_ops=elems,
    )


def block_counts(c: int, replication: int, stride: int, size_in: int,
                 parallel: int) -> OpCounts:
    """One building block; size_in is the (square) input side length."""
    size_out = size_in // stride
    hw_in, hw_out = size_in * size_in, size_out * size_out
    total = OpCounts()
    total += conv_module_counts(c, hw_in, parallel, with_prelu=True)   # conv_a
    total += dw_module_counts(c, hw_out)
    if stride > 1:
        total += OpCounts(real_adds=(stride * stride - 1) * c * hw_out)
    if replication > 1 or stride > 1:
        total += conv_module_counts(c, hw_out, parallel, with_prelu=False)  # conv_id
    total += conv_module_counts(c, hw_out, parallel, with_prelu=True)  # conv_b
    return total


def count_ops(config: NetworkConfig) -> OpCounts:
    """Full-network operation and parameter counts for one input image."""
    config.validate()
    total = OpCounts()
    size = config.input_size
    total += block_counts(config.stem.channels, config.stem.replication,
                          config.stem.stride, size, config.parallel)
    size //= config.stem.stride
    for lv in config.levels:
        total += block_counts(lv.channels, lv.replication, lv.stride, size,
                              config.parallel)
        size //= lv.stride
        for _ in range(lv.blocks - 1):
            total += block_counts(lv.channels, 1, 1, size, config.parallel)
    c5 = config.final_channels
    total += OpCounts(real_adds=c5 * (size * size - 1))               # GAP
    total += OpCounts(real_params=config.classes * (c5 + 1),
                      real_macs=config.classes * c5,
                      real_adds=config.classes)                        # classifier
    return total


def decoder_real_params(config: NetworkConfig) -> int:
    return config.classes * (config.final_channels + 1)


def aggregate_real_ops(c: OpCounts) -> float:
    """Collapse the real-op rows to one number: MACs + half of everything else."""
    return c.real_macs + (c.real_adds + c.real_mults + c.sign_ops + c.prelu_ops) / 2.0


def param_megabytes(c: OpCounts) -> float:
    """Deployment size: one bit per binary weight, one byte per real parameter.

    The real side of the network is small enough to ship 8-bit quantized,
    which is the convention behind the published size figures (the model
    *file* in this package keeps real parameters at float32 and is
    therefore larger; see bcnn.model_io.file_size).
    """
    return (c.binary_params / 8.0 + c.real_params) / 1e6


def normalized_mops(c: OpCounts) -> float:
    """Mega-ops with binary MACs worth 1/64 and non-MAC real ops 1/2."""
    return (c.binary_macs / 64.0 + aggregate_real_ops(c)) / 1e6


def param_count_audit(model) -> dict:
    """Count parameters straight off a model's arrays (independent of config math)."""
    from .network import named_parameters

    binary_bits = 0
    real = 0
    for _, arr, group in named_parameters(model):
        if group == "conv":
            binary_bits += arr.size
        else:
            real += arr.size
    return {"binary_params": binary_bits, "real_params": real}


def report(config: NetworkConfig) -> dict:
    """All headline numbers for a config, ready for printing or CSV."""
    counts = count_ops(config)
    total_real = counts.real_params
    dec = decoder_real_params(config)
    return {
        **counts.as_dict(),
        "real_ops_aggregate": aggregate_real_ops(counts),
        "param_mb": param_megabytes(counts),
        "normalized_mops": normalized_mops(counts),
        "decoder_real_params": dec,
        "decoder_share": dec / total_real if total_real else 0.0,
    }
