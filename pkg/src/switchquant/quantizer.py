"""Finite static quantizer over a rectangular partition of the state space.

Cells are axis-aligned boxes, each carrying one quantization point; a cell
whose closure contains the origin must quantize to zero.  Boundary
ownership follows a sign-consistent convention: the deadzone is closed,
positive bands are left-open/right-closed, negative bands mirrored, which
the generic lookup reproduces by resolving boundary ties toward the cell
nearest the origin.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageError, ParameterError, StructuralError


@dataclass(frozen=True)
class Cell:
    """Axis-aligned box ``[lower, upper]`` with quantization point ``q``."""

    id: int
    lower: np.ndarray
    upper: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        for name in ("lower", "upper", "q"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.lower.shape != self.upper.shape or self.q.shape != self.lower.shape:
            raise StructuralError(f"cell {self.id}: inconsistent vector shapes")
        if not np.all(self.lower < self.upper):
            raise StructuralError(f"cell {self.id}: needs lower < upper componentwise")
        if self.contains_origin and np.any(self.q != 0.0):
            raise StructuralError(
                f"cell {self.id}: closure contains the origin but q = {self.q} != 0")

    @property
    def contains_origin(self) -> bool:
        """Whether the closed box contains the origin."""
        return bool(np.all(self.lower <= 0.0) and np.all(self.upper >= 0.0))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class _LogAxes:
    """Per-axis geometric band structure for fast product lookup."""

    deadzone: float
    ratio: float
    levels: int
    edges: np.ndarray          # deadzone * ratio**k, k = 0..levels

    @property
    def bands_per_axis(self) -> int:
        return 2 * self.levels + 1

    def band_of(self, values: np.ndarray) -> np.ndarray:
        """Sorted-order band index per component (0 = most negative band,
        ``levels`` = deadzone).  Raises CoverageError beyond the last edge."""
        v = np.asarray(values, dtype=float)
        a = np.abs(v)
        if np.any(a > self.edges[-1]):
            raise CoverageError(
                f"component magnitude {a.max():.6g} exceeds coverage "
                f"{self.edges[-1]:.6g}; widen the partition or shrink the region")
        # band k on the positive side owns (edges[k], edges[k+1]]; mirrored
        # bands own [-edges[k+1], -edges[k]), so |v| classifies both signs.
        k = np.searchsorted(self.edges, a, side="left") - 1
        out = np.where(a <= self.deadzone, self.levels,
                       np.where(v > 0, self.levels + 1 + k, self.levels - 1 - k))
        return out.astype(int)


@dataclass(frozen=True)
class QuantizerPartition:
    """Finite list of cells tiling the ball of ``coverage_radius``."""

    cells: tuple
    coverage_radius: float

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise StructuralError("partition needs at least one cell")
        dim = self.cells[0].dim
        for c in self.cells:
            if c.dim != dim:
                raise StructuralError("cells have inconsistent dimensions")
        if not self.coverage_radius > 0:
            raise StructuralError("coverage radius must be positive")
        object.__setattr__(self, "_lower", np.array([c.lower for c in self.cells]))
        object.__setattr__(self, "_upper", np.array([c.upper for c in self.cells]))
        object.__setattr__(self, "_q", np.array([c.q for c in self.cells]))
        clamp = np.clip(0.0, self._lower, self._upper)
        object.__setattr__(self, "_min_norms", np.linalg.norm(clamp, axis=1))
        object.__setattr__(self, "_log_axes", None)

    @property
    def dim(self) -> int:
        return self.cells[0].dim

    @property
    def q_points(self) -> np.ndarray:
        return self._q

    @property
    def min_norms(self) -> np.ndarray:
        """Distance from the origin to each (closed) cell."""
        return self._min_norms


def build_log_quantizer(deadzone: float, ratio: float, levels_per_axis: int,
                        dim: int = 2) -> QuantizerPartition:
    """Logarithmic product quantizer.

    Each axis is split into a closed deadzone ``[-d, d]`` mapping to 0 and
    geometric bands ``(d r^k, d r^{k+1}]`` mapping to their midpoint
    ``d (r^k + r^{k+1}) / 2``, mirrored on the negative side as
    ``[-d r^{k+1}, -d r^k)``.  Cells are Cartesian products of bands and
    the partition covers the ball of radius ``d r^levels``.
    """
    if ratio <= 1:
        raise ParameterError(f"band ratio must exceed 1, got {ratio}")
    if deadzone <= 0:
        raise ParameterError(f"deadzone half-width must be positive, got {deadzone}")
    if levels_per_axis < 1:
        raise ParameterError("need at least one level per axis")
    if dim < 1:
        raise ParameterError("dimension must be at least 1")

    edges = deadzone * ratio ** np.arange(levels_per_axis + 1)
    mids = (edges[:-1] + edges[1:]) / 2.0
    lows = np.concatenate([-edges[:0:-1], [-deadzone], edges[:-1]])
    highs = np.concatenate([-edges[-2::-1], [deadzone], edges[1:]])
    qs = np.concatenate([-mids[::-1], [0.0], mids])
    bands = len(lows)

    cells = []
    for cid, combo in enumerate(itertools.product(range(bands), repeat=dim)):
        idx = np.array(combo)
        cells.append(Cell(id=cid, lower=lows[idx], upper=highs[idx], q=qs[idx]))
    partition = QuantizerPartition(cells=tuple(cells),
                                   coverage_radius=float(edges[-1]))
    axes = _LogAxes(deadzone=float(deadzone), ratio=float(ratio),
                    levels=int(levels_per_axis), edges=edges)
    object.__setattr__(partition, "_log_axes", axes)
    return partition


def quantize(partition: QuantizerPartition, x: np.ndarray):
    """Map a state to its quantization point.

    Returns ``(q, cell_id)`` for the unique cell owning ``x``.  Raises
    :class:`CoverageError` outside the covered ball, which signals a
    misconfigured coverage radius rather than a recoverable condition.
    """
    q, cid = quantize_batch(partition, np.asarray(x, dtype=float)[None, :])
    return q[0], int(cid[0])


def quantize_batch(partition: QuantizerPartition, X: np.ndarray):
    """Vectorized :func:`quantize` over rows of ``X``; returns ``(Q, ids)``."""
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > partition.coverage_radius * (1 + 1e-12)):
        worst = float(norms.max())
        raise CoverageError(
            f"state norm {worst:.6g} exceeds coverage radius "
            f"{partition.coverage_radius:.6g}")
    axes = partition._log_axes
    if axes is not None:
        bands = axes.band_of(X)               # (N, dim) sorted band indices
        ids = np.zeros(len(X), dtype=int)
        for d in range(partition.dim):
            ids = ids * axes.bands_per_axis + bands[:, d]
        return partition._q[ids], ids
    return _quantize_scan(partition, X)


def _quantize_scan(partition: QuantizerPartition, X: np.ndarray):
    """Generic membership scan with origin-ward tie-breaking on boundaries."""
    ids = np.empty(len(X), dtype=int)
    for i, x in enumerate(X):
        inside = np.all((partition._lower <= x) & (x <= partition._upper), axis=1)
        cand = np.flatnonzero(inside)
        if cand.size == 0:
            raise CoverageError(
                f"no cell owns state {x}; the partition does not tile its "
                f"declared coverage ball")
        if cand.size > 1:
            cand = cand[np.lexsort((cand, partition._min_norms[cand]))]
        ids[i] = cand[0]
    return partition._q[ids], ids


def cell_min_norm(cell: Cell) -> float:
    """Distance from the origin to the cell: clamp the origin into the box
    per axis and take the norm of the clamped point."""
    return float(np.linalg.norm(np.clip(0.0, cell.lower, cell.upper)))


def cell_max_deviation(cell: Cell) -> float:
    """Worst quantization error over the cell, attained at a vertex."""
    best = 0.0
    for combo in itertools.product((0, 1), repeat=cell.dim):
        v = np.where(np.array(combo) == 0, cell.lower, cell.upper)
        best = max(best, float(np.linalg.norm(cell.q - v)))
    return best


def cells_covering_ellipsoid(partition: QuantizerPartition, P: np.ndarray,
                             level: float) -> np.ndarray:
    """Ids of every cell meeting the ball that encloses ``{x: x'Px <= level}``.

    The enclosing ball has radius ``sqrt(level / lambda_min(P))``; the
    returned set is a superset of the exact ellipsoid cover, conservative
    by design.
    """
    P = np.asarray(P, dtype=float)
    if level < 0:
        raise ParameterError(f"level must be nonnegative, got {level}")
    lam_min = float(np.linalg.eigvalsh(P)[0])
    if lam_min <= 0:
        raise StructuralError("P must be positive definite")
    radius = float(np.sqrt(level / lam_min))
    if radius > partition.coverage_radius * (1 + 1e-12):
        raise CoverageError(
            f"ellipsoid enclosing radius {radius:.6g} exceeds coverage "
            f"{partition.coverage_radius:.6g}")
    return np.flatnonzero(partition.min_norms <= radius)


def quantization_bits(num_cells: int, num_modes: int) -> float:
    """Bits transmitted per sample: cell index plus active-mode index."""
    return float(np.log2(num_cells) + np.log2(num_modes))
