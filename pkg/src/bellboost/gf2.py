"""Small dense linear algebra over GF(2) on uint8 matrices."""

from __future__ import annotations

import numpy as np


def as_gf2(m) -> np.ndarray:
    a = np.array(m, dtype=np.uint8)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a & 1


def rref(m) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form without column swaps; returns (matrix, pivot columns)."""
    a = as_gf2(m).copy()
    rows, cols = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hit = np.flatnonzero(a[r:, c])
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        mask = a[:, c].astype(bool)
        mask[r] = False
        a[mask] ^= a[r]
        pivots.append(c)
        r += 1
    return a, pivots


def rank(m) -> int:
    a = as_gf2(m)
    if a.size == 0:
        return 0
    return len(rref(a)[1])


def same_row_space(a, b) -> bool:
    a, b = as_gf2(a), as_gf2(b)
    ra = rank(a)
    return ra == rank(b) and rank(np.vstack([a, b])) == ra


def in_row_space(m, v) -> bool:
    m = as_gf2(m)
    if m.shape[0] == 0:
        return not np.any(as_gf2(v))
    return rank(np.vstack([m, as_gf2(v)])) == rank(m)
