"""Synthetic image datasets for desk-scale training runs.

Ten geometric texture classes (stripes, checkers, disks, rings, crosses,
gradients, dot grids, ...) rendered at 32x32 with per-sample random
colors, jitter, and noise.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import numpy as np

CLASS_NAMES = [
    "h_stripes", "v_stripes", "d_stripes", "checker", "disk",
    "ring", "cross", "gradient", "squares", "dots",
]


def _pattern(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Render one [0, 1] grayscale mask for a class."""
    ys, xs = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    freq = rng.integers(2, 5)
    phase = rng.uniform(0, 1)
    cx, cy = rng.uniform(0.4, 0.6, size=2)
    if cls == 0:
        m = np.sin(2 * np.pi * (freq * ys + phase)) > 0
    elif cls == 1:
        m = np.sin(2 * np.pi * (freq * xs + phase)) > 0
    elif cls == 2:
        m = np.sin(2 * np.pi * (freq * (xs + ys) + phase)) > 0
    elif cls == 3:
        m = (np.floor(freq * xs + phase) + np.floor(freq * ys + phase)) % 2 > 0
    elif cls == 4:
        r = rng.uniform(0.25, 0.4)
        m = (xs - cx) ** 2 + (ys - cy) ** 2 < r * r
    elif cls == 5:
        r = rng.uniform(0.28, 0.4)
        rad2 = (xs - cx) ** 2 + (ys - cy) ** 2
        m = (rad2 < r * r) & (rad2 > (r - 0.15) ** 2)
    elif cls == 6:
        w = rng.uniform(0.08, 0.15)
        m = (np.abs(xs - cx) < w) | (np.abs(ys - cy) < w)
    elif cls == 7:
        a, b = rng.uniform(0.5, 1.5, size=2)
        m = np.clip(a * xs + b * ys - (a + b - 1) * phase, 0, 1)
    elif cls == 8:
        m = np.floor(2 * freq * np.maximum(np.abs(xs - cx), np.abs(ys - cy)) + phase) % 2 > 0
    elif cls == 9:
        g = rng.integers(3, 6)
        m = ((xs * g) % 1 - 0.5) ** 2 + ((ys * g) % 1 - 0.5) ** 2 < 0.09
    else:
        raise ValueError(f"unknown class {cls}")
    return m.astype(np.float32)


def make_shapes(n: int, size: int = 32, classes: int = 10,
                seed: int = 12345) -> tuple:
    """n RGB images (n, 3, size, size) in [0, 1] plus int labels (n,)."""
    if classes > len(CLASS_NAMES):
        raise ValueError(f"at most {len(CLASS_NAMES)} classes available")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    labels = rng.permutation(labels)
    images = np.empty((n, 3, size, size), dtype=np.float32)
    for i, cls in enumerate(labels):
        mask = _pattern(int(cls), size, rng)
        fg = rng.uniform(0.55, 1.0, size=3).astype(np.float32)
        bg = rng.uniform(0.0, 0.45, size=3).astype(np.float32)
        img = bg[:, None, None] + (fg - bg)[:, None, None] * mask[None]
        img += rng.normal(0, 0.05, size=img.shape).astype(np.float32)
        images[i] = np.clip(img, 0.0, 1.0)
    return images, labels.astype(np.int64)


def make_two_blob(n: int, size: int = 16, seed: int = 7) -> tuple:
    """Two trivially separable classes: dark images vs bright images."""
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    base = np.where(labels == 0, 0.25, 0.75).astype(np.float32)
    images = base[:, None, None, None] + rng.normal(
        0, 0.08, size=(n, 3, size, size)).astype(np.float32)
    return np.clip(images, 0.0, 1.0), labels.astype(np.int64)
