"""Packed-bit tensors and XNOR/popcount linear algebra.

Sign vectors over {-1, +1} are stored one bit per element inside 64-bit
words.  The encoding everywhere in this package is:

* bit value ``1``  <->  ``+1``
* bit value ``0``  <->  ``-1``
* ``sign(0) == +1`` (zeros binarize to the ``1`` bit)
* element ``i`` of the flattened (row-major) tensor sits at bit ``i % 64``
  of word ``i // 64``, little-endian within the word
* padding bits past the last element are zero and never contribute to a
  popcount

With that encoding the dot product of two sign vectors of length K is

    dot(a, b) = K - 2 * popcount(a XOR b)

because XOR counts the positions where the signs disagree, each of which
contributes -1 instead of +1.

Real-valued tensors are plain ``float32`` ndarrays and integer tensors are
plain ``int32`` ndarrays; only the packed form gets a dedicated class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WORD = 64


def words_needed(nbits: int) -> int:
    return (nbits + _WORD - 1) // _WORD


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a flat boolean array into little-endian uint64 words."""
    nbits = bits.size
    pad = words_needed(nbits) * _WORD - nbits
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=bool)])
    return np.packbits(bits, bitorder="little").view("<u8")


def _unpack_bits(words: np.ndarray, nbits: int) -> np.ndarray:
    """Inverse of :func:`_pack_bits`; returns a flat boolean array."""
    raw = np.unpackbits(words.view(np.uint8), bitorder="little")
    return raw[:nbits].astype(bool)


def popcount(words: np.ndarray) -> np.ndarray:
    """Per-word population count, as int32."""
    return np.bitwise_count(words).astype(np.int32)


@dataclass
class BitTensor:
    """A sign tensor packed one bit per element.

    Attributes
    ----------
    shape : tuple of int
        Logical shape of the tensor.
    words : np.ndarray
        1-D uint64 array of ``ceil(prod(shape) / 64)`` words.
    """

    shape: tuple
    words: np.ndarray

    @property
    def nbits(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    def __post_init__(self):
        if self.words.dtype != np.uint64:
            raise TypeError("BitTensor words must be uint64")
        if self.words.size != words_needed(self.nbits):
            raise ValueError(
                f"word count {self.words.size} does not match shape {self.shape}"
            )


def pack(values: np.ndarray) -> BitTensor:
    """Binarize and pack a real tensor.

    Elements ``>= 0`` map to the ``+1`` bit, elements ``< 0`` to the ``-1``
    bit, so zero follows the sign(0) = +1 convention.
    """
    values = np.asarray(values)
    bits = (values >= 0).reshape(-1)
    return BitTensor(shape=tuple(values.shape), words=_pack_bits(bits))


def unpack(t: BitTensor) -> np.ndarray:
    """Expand a packed tensor back to a float32 tensor over {-1, +1}."""
    bits = _unpack_bits(t.words, t.nbits)
    out = np.where(bits, np.float32(1.0), np.float32(-1.0))
    return out.reshape(t.shape)


def pack_rows(mat: np.ndarray) -> np.ndarray:
    """Pack each row of a 2-D sign matrix separately.

    Returns a ``(rows, ceil(cols / 64))`` uint64 array.  Row-wise packing
    keeps each row word-aligned, which is what the GEMM kernel wants: a
    row of A against a row of B^T is then a pure word-wise XOR/popcount.
    """
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise ValueError("pack_rows expects a 2-D array")
    rows, cols = mat.shape
    bits = mat >= 0
    wpr = words_needed(cols)
    pad = wpr * _WORD - cols
    if pad:
        bits = np.concatenate([bits, np.zeros((rows, pad), dtype=bool)], axis=1)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return packed.view("<u8").reshape(rows, wpr)


def unpack_rows(words: np.ndarray, cols: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`; returns a float32 {-1,+1} matrix."""
    rows = words.shape[0]
    raw = np.unpackbits(words.reshape(rows, -1).view(np.uint8), axis=1, bitorder="little")
    return np.where(raw[:, :cols].astype(bool), np.float32(1.0), np.float32(-1.0))


def bin_dot(a: BitTensor, b: BitTensor) -> int:
    """Dot product of two packed sign vectors via XOR + popcount."""
    if len(a.shape) != 1 or len(b.shape) != 1:
        raise ValueError("bin_dot expects 1-D BitTensors")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    k = a.shape[0]
    mismatches = int(popcount(a.words ^ b.words).sum())
    return k - 2 * mismatches


def gemm_packed_nt(a_words: np.ndarray, b_words: np.ndarray, k: int,
                   block: int = 8192) -> np.ndarray:
    """C[m, n] = dot(row m of A, row n of B) for row-packed sign matrices.

    ``a_words`` is (M, W) and ``b_words`` is (N, W) with W = ceil(k / 64);
    both must share the same padding convention (pad bits zero).  Because
    the pad bits are equal in both operands they XOR to zero and drop out
    of the popcount.  Accumulation is exact integer arithmetic, so the
    result is independent of any traversal order.

    The N axis is processed in blocks to bound the size of the (M, block)
    XOR temporary.
    """
    m = a_words.shape[0]
    n = b_words.shape[0]
    w = a_words.shape[1]
    if b_words.shape[1] != w:
        raise ValueError("word-width mismatch between operands")
    out = np.empty((m, n), dtype=np.int32)
    for n0 in range(0, n, block):
        n1 = min(n0 + block, n)
        mism = np.zeros((m, n1 - n0), dtype=np.int32)
        for wi in range(w):
            mism += np.bitwise_count(a_words[:, wi, None] ^ b_words[None, n0:n1, wi]).astype(np.int32)
        out[:, n0:n1] = k - 2 * mism
    return out


def bin_gemm(a: BitTensor, b: BitTensor) -> np.ndarray:
    """Binary matrix multiply: (M, K) x (K, N) -> int32 (M, N).

    ``b`` is repacked column-major internally so that each of its columns
    becomes a contiguous packed row; the kernel is then a row-against-row
    XOR/popcount.  Every output entry equals the float GEMM of the
    unpacked +/-1 matrices exactly.
    """
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ValueError("bin_gemm expects 2-D BitTensors")
    m, ka = a.shape
    kb, n = b.shape
    if ka != kb:
        raise ValueError(f"inner dimension mismatch: {ka} vs {kb}")
    if ka % _WORD == 0:
        # Rows are already word-aligned inside the flat packing.
        a_rows = a.words.reshape(m, ka // _WORD)
    else:
        a_rows = pack_rows(unpack(a))
    # Repack B's columns as rows.
    b_cols = pack_rows(unpack(b).T)
    return gemm_packed_nt(a_rows, b_cols, ka)


def lower_conv1x1(x: BitTensor) -> BitTensor:
    """Reindex a packed (C, H, W) map into (H*W, C) pixel rows.

    A 1x1 convolution over channels is then a plain GEMM: each output
    pixel is the dot of a weight row with one row of the lowered matrix.
    Pure bijective reindexing; no bits are invented or dropped.
    """
    if len(x.shape) != 3:
        raise ValueError("lower_conv1x1 expects a (C, H, W) BitTensor")
    c, h, w = x.shape
    bits = _unpack_bits(x.words, x.nbits).reshape(c, h * w)
    lowered = np.ascontiguousarray(bits.T)
    return BitTensor(shape=(h * w, c), words=_pack_bits(lowered.reshape(-1)))


def raise_conv1x1(x: BitTensor, c: int, h: int, w: int) -> BitTensor:
    """Inverse reindex of :func:`lower_conv1x1`."""
    if len(x.shape) != 2 or x.shape != (h * w, c):
        raise ValueError(f"expected shape ({h * w}, {c}), got {x.shape}")
    bits = _unpack_bits(x.words, x.nbits).reshape(h * w, c)
    raised = np.ascontiguousarray(bits.T).reshape(c, h, w)
    return BitTensor(shape=(c, h, w), words=_pack_bits(raised.reshape(-1)))


def shift_pad(x: BitTensor, dy: int, dx: int) -> BitTensor:
    """Shift a packed (C, H, W) map spatially, padding with the -1 bit.

    Output position (y, x) takes input position (y - dy, x - dx); vacated
    positions are -1 (bit 0).  Shift magnitudes must be smaller than the
    map; anything larger is a degenerate all-pad map and is rejected.
    """
    if len(x.shape) != 3:
        raise ValueError("shift_pad expects a (C, H, W) BitTensor")
    c, h, w = x.shape
    if abs(dy) >= h or abs(dx) >= w:
        raise ValueError(f"shift ({dy}, {dx}) out of range for map {h}x{w}")
    bits = _unpack_bits(x.words, x.nbits).reshape(c, h, w)
    out = np.zeros_like(bits)
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ysrc = slice(max(-dy, 0), h + min(-dy, 0))
    xsrc = slice(max(-dx, 0), w + min(-dx, 0))
    out[:, ys, xs] = bits[:, ysrc, xsrc]
    return BitTensor(shape=(c, h, w), words=_pack_bits(out.reshape(-1)))
