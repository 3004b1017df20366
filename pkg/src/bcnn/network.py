"""Network assembly: configs, preprocessing, end-to-end forward.

The network follows a fixed recipe: an RGB image plus a derived
intensity channel enters a stem block that replicates 4 channels up to
the first working width, then a pyramid of levels each halving the
spatial size while doubling channels, then global average pooling and a
single real-valued fully connected classifier.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .blocks import BuildingBlock, block_forward, init_block
from .functional import fc_forward, global_avg_pool

# ImageNet-style per-channel normalization constants (RGB).
RGB_MEAN = (0.485, 0.456, 0.406)
RGB_STD = (0.229, 0.224, 0.225)


@dataclass
class LevelSpec:
    """One pyramid level: `blocks` blocks at width `channels`.

    The first block applies this level's stride and replication; any
    further blocks are normal (stride 1, replication 1).
    """

    blocks: int
    stride: int
    replication: int
    channels: int


@dataclass
class NetworkConfig:
    input_channels: int = 4
    input_size: int = 224
    classes: int = 1000
    parallel: int = 1
    stem: LevelSpec = field(default_factory=lambda: LevelSpec(1, 1, 8, 32))
    levels: List[LevelSpec] = field(default_factory=list)
    norm_mean: tuple = RGB_MEAN
    norm_std: tuple = RGB_STD

    def validate(self) -> None:
        if self.stem.channels != self.input_channels * self.stem.replication:
            raise ValueError(
                "stem must reach its width purely by replication: "
                f"{self.input_channels} * {self.stem.replication} != {self.stem.channels}"
            )
        c = self.stem.channels
        size = self.input_size
        for i, lv in enumerate(self.levels):
            if lv.channels != c * lv.replication:
                raise ValueError(
                    f"level {i + 1}: channels {lv.channels} != "
                    f"{c} * replication {lv.replication}"
                )
            if size % lv.stride:
                raise ValueError(f"level {i + 1}: size {size} not divisible by stride {lv.stride}")
            c = lv.channels
            size //= lv.stride
            if lv.blocks < 1:
                raise ValueError(f"level {i + 1}: needs at least one block")

    @property
    def final_channels(self) -> int:
        return self.levels[-1].channels if self.levels else self.stem.channels

    @property
    def final_size(self) -> int:
        size = self.input_size
        for lv in self.levels:
            size //= lv.stride
        return size


def config_imagenet_p1() -> NetworkConfig:
    return NetworkConfig(
        input_channels=4, input_size=224, classes=1000, parallel=1,
        stem=LevelSpec(1, 1, 8, 32),
        levels=[
            LevelSpec(1, 2, 2, 64),
            LevelSpec(1, 2, 2, 128),
            LevelSpec(2, 2, 2, 256),
            LevelSpec(6, 2, 2, 512),
            LevelSpec(2, 2, 2, 1024),
        ],
    )


def config_imagenet_p2() -> NetworkConfig:
    cfg = config_imagenet_p1()
    cfg.parallel = 2
    return cfg


def config_toy() -> NetworkConfig:
    """Small configuration for 32x32 inputs and 10 classes."""
    return NetworkConfig(
        input_channels=4, input_size=32, classes=10, parallel=1,
        stem=LevelSpec(1, 1, 8, 32),
        levels=[
            LevelSpec(1, 2, 1, 32),
            LevelSpec(1, 2, 2, 64),
            LevelSpec(1, 2, 2, 128),
        ],
    )


_PRESETS = {"p1": config_imagenet_p1, "p2": config_imagenet_p2, "toy": config_toy}


def config_preset(name: str) -> NetworkConfig:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None


def load_config_file(path: str) -> NetworkConfig:
    """Parse an INI-style network description.

    ```
    [network]
    input_size = 224
    classes = 1000
    parallel = 1

    [stem]
    replication = 8

    [level1]
    blocks = 1
    stride = 2
    replication = 2
    ```
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file {path!r}")
    try:
        net = parser["network"]
        cfg = NetworkConfig(
            input_channels=net.getint("input_channels", 4),
            input_size=net.getint("input_size", 224),
            classes=net.getint("classes", 1000),
            parallel=net.getint("parallel", 1),
        )
        stem_rep = parser["stem"].getint("replication", 8)
        cfg.stem = LevelSpec(1, 1, stem_rep, cfg.input_channels * stem_rep)
        levels = []
        c = cfg.stem.channels
        i = 1
        while parser.has_section(f"level{i}"):
            sec = parser[f"level{i}"]
            rep = sec.getint("replication", 2)
            c *= rep
            levels.append(LevelSpec(
                blocks=sec.getint("blocks", 1),
                stride=sec.getint("stride", 2),
                replication=rep,
                channels=c,
            ))
            i += 1
        cfg.levels = levels
    except (configparser.Error, ValueError) as exc:
        raise ValueError(f"bad config file {path!r}: {exc}") from exc
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class Model:
    config: NetworkConfig
    blocks: List[BuildingBlock]
    fc_weight: np.ndarray  # (classes, final_channels)
    fc_bias: np.ndarray    # (classes,)


def build_model(config: NetworkConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Build a freshly initialized model.

    Binary shadow weights and depthwise kernels start uniform in [-1, 1),
    biases and BN shifts at zero, BN scales at one; the same seed always
    produces the same parameters.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    blocks = [init_block(config.stem.channels, config.stem.replication,
                         config.stem.stride, config.parallel, rng, dtype)]
    for lv in config.levels:
        blocks.append(init_block(lv.channels, lv.replication, lv.stride,
                                 config.parallel, rng, dtype))
        for _ in range(lv.blocks - 1):
            blocks.append(init_block(lv.channels, 1, 1, config.parallel, rng, dtype))
    c5 = config.final_channels
    fc_weight = rng.uniform(-1.0, 1.0, size=(config.classes, c5)).astype(dtype)
    fc_bias = np.zeros(config.classes, dtype=dtype)
    return Model(config=config, blocks=blocks, fc_weight=fc_weight, fc_bias=fc_bias)


# ---------------------------------------------------------------------------
# preprocessing and forward
# ---------------------------------------------------------------------------

def preprocess(images: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """RGB [0, 1] images (B, 3, H, W) -> normalized (B, 4, H, W).

    The fourth channel is the mean of the raw R, G, B values, normalized
    with the averaged RGB constants.
    """
    images = np.asarray(images, dtype=np.float32)
    single = images.ndim == 3
    if single:
        images = images[None]
    if images.shape[1] != 3:
        raise ValueError(f"expected 3 input channels, got {images.shape[1]}")
    mean = np.asarray(config.norm_mean, dtype=np.float32)
    std = np.asarray(config.norm_std, dtype=np.float32)
    intensity = images.mean(axis=1, keepdims=True)
    m4 = np.concatenate([mean, [mean.mean()]]).astype(np.float32)
    s4 = np.concatenate([std, [std.mean()]]).astype(np.float32)
    x = np.concatenate([images, intensity], axis=1)
    x = (x - m4[None, :, None, None]) / s4[None, :, None, None]
    return x[0] if single else x


def forward(model: Model, x: np.ndarray, engine: str = "float",
            preprocessed: bool = False) -> np.ndarray:
    """Classify (B, 3, H, W) RGB [0, 1] images; returns (B, classes) logits.

    Pass ``preprocessed=True`` to feed 4-channel normalized tensors
    directly.  ``engine`` selects the binary matmul implementation
    ("float" or "packed"); the logits are identical either way.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    if not preprocessed:
        x = preprocess(x, model.config)
    h = x.shape[-1]
    if h != model.config.input_size:
        raise ValueError(f"expected {model.config.input_size}px input, got {h}px")
    for blk in model.blocks:
        x = block_forward(blk, x, engine=engine)
    feat = global_avg_pool(x)
    logits = fc_forward(feat, model.fc_weight, model.fc_bias)
    return logits[0] if single else logits


# ---------------------------------------------------------------------------
# parameter registry (canonical order, shared by IO / optimizer / audits)
# ---------------------------------------------------------------------------

def named_parameters(model: Model) -> List[tuple]:
    """All learnable parameters as (name, array, group) in canonical order.

    Groups: "conv" for binary shadow weight matrices, "dw" for depthwise
    kernels, "bias"/"bn"/"prelu" for the small real parameters, "fc" for
    the classifier.  Running BN statistics are buffers, not parameters
    (see named_buffers).
    """
    out = []
    for i, blk in enumerate(model.blocks):
        modules = [("conv_a", blk.conv_a), ("dw", blk.dw), ("conv_b", blk.conv_b)]
        if blk.conv_id is not None:
            modules.append(("conv_id", blk.conv_id))
        for mname, mod in modules:
            base = f"block{i}.{mname}"
            if mname == "dw":
                out.append((f"{base}.weights", mod.weights, "dw"))
                out.append((f"{base}.bn_gamma", mod.bn_gamma, "bn"))
                out.append((f"{base}.bn_beta", mod.bn_beta, "bn"))
                out.append((f"{base}.prelu", mod.prelu_slope, "prelu"))
            else:
                for p, br in enumerate(mod.branches):
                    out.append((f"{base}.b{p}.bias", br.bias, "bias"))
                    out.append((f"{base}.b{p}.weights", br.weights_real, "conv"))
                    out.append((f"{base}.b{p}.bn_gamma", br.bn_gamma, "bn"))
                    out.append((f"{base}.b{p}.bn_beta", br.bn_beta, "bn"))
                if mod.prelu_slope is not None:
                    out.append((f"{base}.prelu", mod.prelu_slope, "prelu"))
    out.append(("fc.weight", model.fc_weight, "fc"))
    out.append(("fc.bias", model.fc_bias, "fc"))
    return out


def named_buffers(model: Model) -> List[tuple]:
    """Running BN statistics as (name, array), canonical order."""
    out = []
    for i, blk in enumerate(model.blocks):
        modules = [("conv_a", blk.conv_a), ("dw", blk.dw), ("conv_b", blk.conv_b)]
        if blk.conv_id is not None:
            modules.append(("conv_id", blk.conv_id))
        for mname, mod in modules:
            base = f"block{i}.{mname}"
            if mname == "dw":
                out.append((f"{base}.bn_mean", mod.bn_mean))
                out.append((f"{base}.bn_var", mod.bn_var))
            else:
                for p, br in enumerate(mod.branches):
                    out.append((f"{base}.b{p}.bn_mean", br.bn_mean))
                    out.append((f"{base}.b{p}.bn_var", br.bn_var))
    return out


def set_parameter(model: Model, name: str, value: np.ndarray) -> None:
    """Overwrite one named parameter in place."""
    for pname, arr, _ in named_parameters(model):
        if pname == name:
            arr[...] = value
            return
    raise KeyError(name)
