"""
Block-partition index algebra for chains of N subsystems.

Block indices are 1-based to match the usual chain notation: block ``i`` of a
partition ``(n_1, ..., n_N)`` occupies scalar coordinates
``[n_1 + ... + n_{i-1}, n_1 + ... + n_i)``.  The "up to i" range covers
blocks ``1..i`` and the "from i down" range covers blocks ``i..N``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from trilqg.errors import DimensionMismatch, IndexOutOfBounds


class BlockRange(NamedTuple):
    start: int
    end: int

    @property
    def slice(self) -> slice:
        return slice(self.start, self.end)

    def __len__(self) -> int:  # type: ignore[override]
        return self.end - self.start


@dataclass(frozen=True)
class Partition:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 1:
            raise ValueError("a partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_offsets", tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))

    @property
    def N(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return self._offsets[-1]

    # The helpers below accept the boundary indices 0 and N+1 (empty ranges),
    # which keeps the coupled-equation code free of special cases.
    def up(self, i: int) -> slice:
        """Blocks 1..i."""
        self._check(i, 0, self.N)
        return slice(0, self._offsets[i])

    def down(self, i: int) -> slice:
        """Blocks i..N."""
        self._check(i, 1, self.N + 1)
        return slice(self._offsets[i - 1], self.total)

    def block(self, i: int) -> slice:
        self._check(i, 1, self.N)
        return slice(self._offsets[i - 1], self._offsets[i])

    def size_up(self, i: int) -> int:
        return self._offsets[i]

    def size_down(self, i: int) -> int:
        return self.total - self._offsets[i - 1]

    def _check(self, i, lo, hi):
        if not lo <= i <= hi:
            raise IndexOutOfBounds(f"block index {i} outside [{lo}, {hi}]")

    def reversed(self) -> "Partition":
        return Partition(self.sizes[::-1])


def range_up(p: Partition, i: int) -> BlockRange:
    if not 1 <= i <= p.N:
        raise IndexOutOfBounds(f"block index {i} outside [1, {p.N}]")
    s = p.up(i)
    return BlockRange(s.start, s.stop)


def range_down(p: Partition, i: int) -> BlockRange:
    if not 1 <= i <= p.N:
        raise IndexOutOfBounds(f"block index {i} outside [1, {p.N}]")
    s = p.down(i)
    return BlockRange(s.start, s.stop)


def sub(M: np.ndarray, rows: BlockRange, cols: BlockRange) -> np.ndarray:
    M = np.asarray(M)
    for r, dim in ((rows, M.shape[0]), (cols, M.shape[1])):
        if not 0 <= r.start <= r.end <= dim:
            raise IndexOutOfBounds(f"range {tuple(r)} outside dimension {dim}")
    return M[rows.start:rows.end, cols.start:cols.end]


def selector(p: Partition, rng: slice | BlockRange, rows: bool = False) -> np.ndarray:
    """
    Materialized 0/1 selector, e.g. ``selector(p, p.down(i))`` is the matrix
    of the last columns of the identity; ``rows=True`` gives its transpose.
    """
    if isinstance(rng, BlockRange):
        rng = rng.slice
    E = np.eye(p.total)[:, rng]
    return E.T if rows else E


def is_lbt(M, rowp: Partition, colp: Partition, tol: float | None = None) -> bool:
    """True iff every block strictly above the block diagonal is (numerically) zero."""
    return lbt_defect(M, rowp, colp) <= (default_lbt_tol(M) if tol is None else tol)


def default_lbt_tol(M) -> float:
    M = np.asarray(M)
    return 1e-9 * (1 + (np.abs(M).max() if M.size else 0.0))


def lbt_defect(M, rowp: Partition, colp: Partition) -> float:
    """Largest absolute entry in the strictly-upper blocks."""
    M = np.asarray(M)
    if rowp.N != colp.N:
        raise DimensionMismatch(f"partitions have {rowp.N} and {colp.N} blocks")
    if M.shape != (rowp.total, colp.total):
        raise DimensionMismatch(f"matrix {M.shape} vs partitions {(rowp.total, colp.total)}")
    worst = 0.0
    for i in range(1, rowp.N):
        blk = M[rowp.block(i), colp.down(i + 1)]
        if blk.size:
            worst = max(worst, float(np.abs(blk).max()))
    return worst


def _incidence(n: int, nblocks: int):
    if n < 1 or nblocks < 1:
        raise ValueError("n and N must be positive")
    ones = np.tril(np.ones((nblocks, nblocks)))
    inv = np.eye(nblocks) - np.eye(nblocks, k=-1)
    I = np.eye(n)
    return np.kron(ones, I), np.kron(inv, I)


def incidence_zeta_mu(n: int, N: int):
    """Block lower-triangular matrix of identities and its unipotent inverse (size nN)."""
    return _incidence(n, N)


def incidence_bar(n: int, N: int):
    """The same pattern at size n(N+1), used on closed-loop coordinates."""
    return _incidence(n, N + 1)
