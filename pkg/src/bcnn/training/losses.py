"""Classification losses; each returns (mean loss, d_loss/d_logits)."""

from __future__ import annotations

import numpy as np


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy against integer labels (B,)."""
    b = logits.shape[0]
    logp = _log_softmax(logits)
    loss = -logp[np.arange(b), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(b), labels] -= 1.0
    return float(loss), (dlogits / b).astype(logits.dtype)


def distributional_loss(logits: np.ndarray, teacher_pmf: np.ndarray):
    """Mean cross-entropy against teacher probability rows (B, K).

    Each teacher row must be a valid pmf (sum 1 within 1e-5); rows are
    float32 probabilities as a teacher network would emit them.
    """
    sums = teacher_pmf.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-5):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"teacher row {bad} sums to {sums[bad]:.6f}, not 1")
    if np.any(teacher_pmf < 0):
        raise ValueError("teacher pmf has negative entries")
    b = logits.shape[0]
    logp = _log_softmax(logits)
    loss = -(teacher_pmf * logp).sum(axis=1).mean()
    dlogits = (np.exp(logp) - teacher_pmf) / b
    return float(loss), dlogits.astype(logits.dtype)


def labels_to_pmf(labels: np.ndarray, classes: int) -> np.ndarray:
    """One-hot rows as float32 pmfs (a degenerate teacher)."""
    out = np.zeros((len(labels), classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def read_pmf_file(path: str, classes: int) -> np.ndarray:
    """Read teacher pmfs from a flat binary file of little-endian float32.

    The file holds one row of `classes` probabilities per sample index.
    Rows are validated at use time by distributional_loss, not here.
    """
    flat = np.fromfile(path, dtype="<f4")
    if flat.size % classes != 0:
        raise ValueError(
            f"{path}: {flat.size} floats is not a multiple of {classes} classes")
    return flat.reshape(-1, classes)
