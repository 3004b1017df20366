"""Three-layer binary universal function approximator.

Layer 1 places a pair of sign units at each grid rectangle edge; a
rectangle indicator is one more sign unit over the pair:

    rect(x) = sign( sign(x - left) - sign(x - right) - 1.5 )

All unit weights are +1 or -1; only the thresholds (left/right) are
real.  With the sign(0) = +1 convention the rectangle is exactly
half-open [left, right), so adjacent rectangles are never active
together.

Layer 2 replicates rectangle k into N_k = round(Q * (f(center_k) -
f_min)) sub-branches; layer 3 combines all +-1 sub-branch outputs s_j as

    out(x) = (sum_j s_j + sum_k N_k) / (2 Q) + f_min

which collapses to N_active/Q + f_min inside rectangle `active` and to
f_min in uncovered territory.  Replication is tracked as a counted
multiplicity rather than materialized units; the arithmetic is
identical.

The construction covers [x_min + d/2, x_max - d/2): the rectangle grid
is centered on multiples of d, which leaves a half-width gap at each
end of the domain (cover it explicitly via `end_values` if needed).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

MAX_SUBBRANCHES = 10_000_000
MAX_CELLS = 1_000_000


def _check_grid(d: float, q: int, span: float) -> int:
    if not (0.0 < d < span or np.isclose(d, span)):
        raise ValueError(f"grid width d={d} outside (0, {span})")
    n = span / d
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"domain width {span} is not an integer multiple of d={d}")
    if int(q) != q or q < 1:
        raise ValueError(f"quantization level Q must be a positive integer, got {q}")
    return int(round(n))


@dataclass
class UfaSpec:
    """Target description: grid width d, quantization Q, center samples."""

    d: float
    q: int
    f_samples: np.ndarray          # f at interior centers x_min + k*d, k = 1..n-1
    x_min: float = 0.0
    x_max: float = 1.0
    f_min: float = 0.0             # subtracted before quantization, added back at eval

    def validate(self) -> int:
        n = _check_grid(self.d, self.q, self.x_max - self.x_min)
        if len(self.f_samples) != n - 1:
            raise ValueError(
                f"need {n - 1} center samples for d={self.d}, got {len(self.f_samples)}"
            )
        if np.min(np.asarray(self.f_samples) - self.f_min) < -1e-12:
            raise ValueError("f_samples must be >= f_min (lift negative targets)")
        return n


def spec_from_function(f: Callable[[float], float], d: float, q: int,
                       x_min: float = 0.0, x_max: float = 1.0,
                       f_min: Optional[float] = None) -> UfaSpec:
    """Sample a callable at the interior grid centers; auto-lift if needed."""
    n = _check_grid(d, q, x_max - x_min)
    centers = x_min + d * np.arange(1, n)
    samples = np.array([f(c) for c in centers], dtype=float)
    if f_min is None:
        f_min = min(0.0, float(samples.min()))
    return UfaSpec(d=d, q=q, f_samples=samples, x_min=x_min, x_max=x_max, f_min=f_min)


@dataclass
class UfaNetwork:
    d: float
    q: int
    f_min: float
    x_min: float
    x_max: float
    lefts: np.ndarray    # rectangle left edges (thresholds of the first sign unit)
    rights: np.ndarray   # right edges (second unit); intervals are [left, right)
    counts: np.ndarray   # layer-2 multiplicities N_k, int64
    special_centers: List[float] = field(default_factory=list)

    @property
    def n_layer1_units(self) -> int:
        return 2 * len(self.lefts)

    @property
    def n_subbranches(self) -> int:
        return int(self.counts.sum())


def build_ufa(spec: UfaSpec, end_values: Optional[tuple] = None) -> UfaNetwork:
    """Construct the 3-layer approximator from a spec.

    end_values: optional (f(x_min), f(x_max)) pair; when given, the
    half-width end rectangles the default grid omits are added so the
    whole domain [x_min, x_max) is covered.
    """
    n = spec.validate()
    centers = spec.x_min + spec.d * np.arange(1, n)
    counts = np.round(spec.q * (np.asarray(spec.f_samples, dtype=float) - spec.f_min))
    counts = counts.astype(np.int64)
    lefts = centers - spec.d / 2.0
    rights = centers + spec.d / 2.0
    if end_values is not None:
        lo_val, hi_val = end_values
        cap_counts = np.round(
            spec.q * (np.asarray([lo_val, hi_val], dtype=float) - spec.f_min))
        if cap_counts.min() < 0:
            raise ValueError("end values must be >= f_min")
        lefts = np.concatenate(([spec.x_min], lefts, [spec.x_max - spec.d / 2.0]))
        rights = np.concatenate(([spec.x_min + spec.d / 2.0], rights, [spec.x_max]))
        counts = np.concatenate(([int(cap_counts[0])], counts, [int(cap_counts[1])]))
    if counts.sum() > MAX_SUBBRANCHES:
        raise ValueError(f"sub-branch count {counts.sum()} exceeds cap {MAX_SUBBRANCHES}")
    return UfaNetwork(
        d=spec.d, q=int(spec.q), f_min=spec.f_min,
        x_min=spec.x_min, x_max=spec.x_max,
        lefts=lefts,
        rights=rights,
        counts=counts,
    )


def _sign(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, 1.0, -1.0)


def rect_indicator(net: UfaNetwork, x) -> np.ndarray:
    """Layer-1/2 wiring: +-1 activation of every rectangle for input x.

    x can be scalar or (S,); returns (..., n_rects).
    """
    xv = np.asarray(x, dtype=float)[..., None]
    u1 = _sign(xv - net.lefts)
    u2 = _sign(xv - net.rights)
    return _sign(u1 - u2 - 1.5)


def eval_ufa(net: UfaNetwork, x):
    """Evaluate at scalar or array x using the layer-3 combination formula."""
    rect = rect_indicator(net, x)
    total = net.counts.sum()
    s_sum = rect @ net.counts.astype(float)
    out = (s_sum + total) / (2.0 * net.q) + net.f_min
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def sup_error(net: UfaNetwork, f_true: Callable, n_samples: int,
              include_ends: bool = False) -> float:
    """Max |net - f| over uniform samples.

    The half-width end gaps are excluded by default; pass
    include_ends=True when the network was built with end rectangles.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    lo = net.x_min if include_ends else net.x_min + net.d / 2.0
    hi = net.x_max if include_ends else net.x_max - net.d / 2.0
    xs = lo + (hi - lo) * (np.arange(n_samples) + 0.5) / n_samples
    approx = eval_ufa(net, xs)
    exact = np.array([f_true(v) for v in xs], dtype=float)
    return float(np.max(np.abs(approx - exact)))


def add_discontinuity_branch(net: UfaNetwork, x0: float, f_at_x0: float) -> UfaNetwork:
    """Center an extra rectangle at x0 so the error there is <= 1/(2Q).

    The new rectangle takes priority over whatever grid rectangles it
    overlaps: overlapped parts are carved away (a split grid rectangle
    keeps its multiplicity on each remaining piece, which leaves the
    single-active-rectangle arithmetic intact).  Adding the same x0
    twice is a no-op.
    """
    if not (net.x_min < x0 < net.x_max):
        raise ValueError(f"discontinuity {x0} outside domain ({net.x_min}, {net.x_max})")
    if any(x0 == s for s in net.special_centers):
        return net
    a, b = x0 - net.d / 2.0, x0 + net.d / 2.0
    new_l, new_r, new_n = [], [], []
    for l, r, n in zip(net.lefts, net.rights, net.counts):
        if r <= a or l >= b:          # untouched
            new_l.append(l); new_r.append(r); new_n.append(n)
            continue
        if l < a:                     # left remainder
            new_l.append(l); new_r.append(a); new_n.append(n)
        if r > b:                     # right remainder
            new_l.append(b); new_r.append(r); new_n.append(n)
    new_l.append(a)
    new_r.append(b)
    new_n.append(int(round(net.q * (f_at_x0 - net.f_min))))
    if new_n[-1] < 0:
        raise ValueError("discontinuity value below f_min")
    return UfaNetwork(
        d=net.d, q=net.q, f_min=net.f_min, x_min=net.x_min, x_max=net.x_max,
        lefts=np.array(new_l), rights=np.array(new_r),
        counts=np.array(new_n, dtype=np.int64),
        special_centers=net.special_centers + [x0],
    )


def audit_unit_weights(net: UfaNetwork) -> List[int]:
    """Materialize every unit weight in the construction; all must be +-1.

    Each rectangle contributes the input weights of its two edge units
    (+1 each), the combiner weights over the pair (+1, -1), and one +1
    per layer-2 sub-branch copy (capped for huge Q sweeps).
    """
    weights: List[int] = []
    for n in net.counts:
        weights.extend((1, 1, 1, -1))
        weights.extend([1] * int(min(n, 1000)))
    return weights


# ---------------------------------------------------------------------------
# vector inputs (K <= 3) and multiple outputs
# ---------------------------------------------------------------------------

@dataclass
class UfaVectorNetwork:
    k: int
    m: int
    q: int
    d: Sequence[float]
    x_min: Sequence[float]
    x_max: Sequence[float]
    f_min: np.ndarray              # (M,)
    dim_lefts: List[np.ndarray]    # per-dim rectangle edges
    dim_rights: List[np.ndarray]
    cell_counts: np.ndarray        # (M, n_cells) multiplicities, int64

    @property
    def n_cells(self) -> int:
        return self.cell_counts.shape[1]


def build_ufa_vector(f: Callable, d: Sequence[float], q: int,
                     x_min: Sequence[float], x_max: Sequence[float],
                     m: int = 1, f_min: Optional[Sequence[float]] = None) -> UfaVectorNetwork:
    """K-input / M-output approximator from a callable f(x_vec) -> (M,).

    K-dimensional cells are conjunctions of per-dimension rectangle
    indicators; each output keeps its own layer-2 multiplicities over the
    shared cells.
    """
    k = len(d)
    if k < 1 or k > 3:
        raise ValueError(f"vector inputs support 1 <= K <= 3 dims, got {k}")
    dims = []
    for di, lo, hi in zip(d, x_min, x_max):
        n = _check_grid(di, q, hi - lo)
        centers = lo + di * np.arange(1, n)
        dims.append(centers)
    n_cells = int(np.prod([len(c) for c in dims]))
    if n_cells > MAX_CELLS:
        raise ValueError(f"cell count {n_cells} exceeds cap {MAX_CELLS}")
    grids = np.meshgrid(*dims, indexing="ij")
    cell_centers = np.stack([g.ravel() for g in grids], axis=-1)  # (n_cells, K)
    samples = np.array([np.atleast_1d(f(c)) for c in cell_centers], dtype=float)  # (n_cells, M)
    if samples.shape[1] != m:
        raise ValueError(f"f returned {samples.shape[1]} outputs, expected {m}")
    if f_min is None:
        fmins = np.minimum(samples.min(axis=0), 0.0)
    else:
        fmins = np.asarray(f_min, dtype=float)
    if np.min(samples - fmins) < -1e-12:
        raise ValueError("f samples must be >= f_min in every output")
    counts = np.round(q * (samples - fmins)).astype(np.int64).T  # (M, n_cells)
    if counts.sum() > MAX_SUBBRANCHES:
        raise ValueError(f"sub-branch count {counts.sum()} exceeds cap {MAX_SUBBRANCHES}")
    return UfaVectorNetwork(
        k=k, m=m, q=int(q), d=list(d), x_min=list(x_min), x_max=list(x_max),
        f_min=fmins,
        dim_lefts=[c - di / 2.0 for c, di in zip(dims, d)],
        dim_rights=[c + di / 2.0 for c, di in zip(dims, d)],
        cell_counts=counts,
    )


def eval_ufa_vector(net: UfaVectorNetwork, x: Sequence[float]) -> np.ndarray:
    """Evaluate at one K-vector; returns (M,)."""
    per_dim = []
    for i in range(net.k):
        u1 = _sign(np.asarray(x[i]) - net.dim_lefts[i])
        u2 = _sign(np.asarray(x[i]) - net.dim_rights[i])
        per_dim.append(_sign(u1 - u2 - 1.5))
    grids = np.meshgrid(*per_dim, indexing="ij")
    conj = sum(grids) - (net.k - 0.5)
    cell = _sign(conj).ravel()                       # (n_cells,) +-1
    total = net.cell_counts.sum(axis=1)              # (M,)
    s_sum = net.cell_counts.astype(float) @ cell
    return (s_sum + total) / (2.0 * net.q) + net.f_min


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _atomic_write(path: str, write_rows) -> None:
    # Write to a sibling temp file and rename so re-runs replace atomically.
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        write_rows(csv.writer(fh))
    os.replace(tmp, path)


def write_curve_csv(net: UfaNetwork, f_true: Callable, path: str,
                    n_samples: int = 512) -> None:
    lo = net.x_min + net.d / 2.0
    hi = net.x_max - net.d / 2.0
    xs = lo + (hi - lo) * (np.arange(n_samples) + 0.5) / n_samples

    def rows(w):
        w.writerow(["x", "f(x)", "ufa(x)", "abs_error"])
        for x in xs:
            fx, ux = f_true(x), eval_ufa(net, x)
            w.writerow([f"{x:.8g}", f"{fx:.8g}", f"{ux:.8g}", f"{abs(ux - fx):.8g}"])

    _atomic_write(path, rows)


def write_sweep_csv(rows_in: List[tuple], path: str) -> None:
    def rows(w):
        w.writerow(["d", "Q", "sup_error"])
        for d, q, err in rows_in:
            w.writerow([f"{d:.8g}", q, f"{err:.8g}"])

    _atomic_write(path, rows)


def refinement_sweep(f: Callable, steps: int = 4, d0: float = 1.0 / 8, q0: int = 8,
                     n_samples: int = 10_000, x_min: float = 0.0,
                     x_max: float = 1.0) -> List[tuple]:
    """Halve d and double Q `steps` times; returns [(d, Q, sup_error), ...]."""
    rows = []
    d, q = d0, q0
    for _ in range(steps):
        net = build_ufa(spec_from_function(f, d, q, x_min, x_max))
        rows.append((d, q, sup_error(net, f, n_samples)))
        d, q = d / 2.0, q * 2
    return rows
