"""Neighbour sets as integer bit masks.

Bit ``i`` (0-based) set means neighbour ``i + 1`` is in the set.  The same
mask indexes a tile of the serving area and a knowledge state, so all of
the chain machinery works on plain ``int`` values and numpy index arrays.
"""
from __future__ import annotations

from collections.abc import Iterable, Iterator

import numpy as np


def from_members(members: Iterable[int]) -> int:
    """Mask for a set of 1-based neighbour labels."""
    value = 0
    for m in members:
        if m < 1:
            raise ValueError(f"neighbour labels are 1-based, got {m}")
        value |= 1 << (m - 1)
    return value


def members(mask: int) -> list[int]:
    """1-based neighbour labels contained in ``mask``."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def full(n: int) -> int:
    return (1 << n) - 1


def cardinality(mask: int) -> int:
    return bin(mask).count("1")


def is_subset(a: int, b: int) -> bool:
    return a & ~b == 0


def complement(mask: int, n: int) -> int:
    return full(n) & ~mask


def iter_subsets(mask: int) -> Iterator[int]:
    """All submasks of ``mask``, including 0 and ``mask`` itself."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def iter_supersets(mask: int, n: int) -> Iterator[int]:
    """All supersets of ``mask`` within ``n`` bits."""
    free = complement(mask, n)
    for extra in iter_subsets(free):
        yield mask | extra


def popcounts(n: int) -> np.ndarray:
    """Cardinality of every mask ``0 .. 2**n - 1``."""
    counts = np.zeros(1 << n, dtype=np.int64)
    for bit in range(n):
        step = 1 << bit
        counts.reshape(-1, 2 * step)[:, step:] += 1
    return counts


def state_order(n: int) -> np.ndarray:
    """Masks sorted by cardinality, then lexicographically by member labels.

    For ``n = 3``: ∅, {1}, {2}, {3}, {1,2}, {1,3}, {2,3}, {1,2,3}.  Any
    superset appears after all of its subsets, so the kernel written in this
    order is upper triangular.
    """
    keys = [(cardinality(m), members(m)) for m in range(1 << n)]
    return np.array(sorted(range(1 << n), key=keys.__getitem__), dtype=np.int64)


def subset_sums(values: np.ndarray) -> np.ndarray:
    """Sum-over-subsets (zeta) transform: ``out[k] = sum(values[l] for l ⊆ k)``."""
    out = np.array(values, dtype=float, copy=True)
    size = out.shape[0]
    n = size.bit_length() - 1
    if 1 << n != size:
        raise ValueError("length must be a power of two")
    for bit in range(n):
        step = 1 << bit
        view = out.reshape(-1, 2 * step)
        view[:, step:] += view[:, :step]
    return out
