"""Binary convolutional network toolkit.

Conventions used throughout:

* sign(0) = +1, everywhere a value is binarized;
* bit value 1 encodes +1 and bit 0 encodes -1;
* packed tensors place element i at bit (i mod 64) of 64-bit word
  (i div 64), little-endian; padding bits are zero.

Submodule attributes are resolved lazily so that thread-count
environment variables set by the CLI take effect before numpy loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "BitTensor": "bitcore",
    "pack": "bitcore",
    "unpack": "bitcore",
    "bin_dot": "bitcore",
    "bin_gemm": "bitcore",
    "NetworkConfig": "network",
    "LevelSpec": "network",
    "Model": "network",
    "build_model": "network",
    "forward": "network",
    "preprocess": "network",
    "config_imagenet_p1": "network",
    "config_imagenet_p2": "network",
    "config_toy": "network",
    "config_preset": "network",
    "save_model": "model_io",
    "load_model": "model_io",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        mod = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(mod, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
