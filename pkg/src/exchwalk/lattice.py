"""Lattice geometry: direction indexing, Euclidean balls and norm crowns.

Directions are indexed by the signed set (-d, ..., -1, 1, ..., d) with
e_{-i} = -e_i.  The canonical storage order for anything indexed by
direction is exactly that tuple, negatives first.  Balls are Euclidean
(L2); membership tests use integer squared norms so radius boundaries
are exact.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


def direction_indices(d: int) -> tuple[int, ...]:
    """Signed direction indices in canonical order (-d..-1, 1..d)."""
    return tuple(range(-d, 0)) + tuple(range(1, d + 1))


def direction_slot(j: int, d: int) -> int:
    """Position of direction j in the canonical order."""
    if j == 0 or abs(j) > d:
        raise ValueError(f"direction {j} not in +-1..{d}")
    return d + j if j < 0 else d + j - 1


def slot_direction(slot: int, d: int) -> int:
    if not 0 <= slot < 2 * d:
        raise ValueError(f"slot {slot} out of range for d={d}")
    return slot - d if slot < d else slot - d + 1


def unit_vector(j: int, d: int) -> np.ndarray:
    """e_j as an integer vector, e_{-i} = -e_i."""
    v = np.zeros(d, dtype=np.int64)
    v[abs(j) - 1] = 1 if j > 0 else -1
    return v


def direction_matrix(d: int) -> np.ndarray:
    """(2d, d) array whose rows are e_j in canonical order."""
    return np.stack([unit_vector(j, d) for j in direction_indices(d)])


@lru_cache(maxsize=None)
def ball_offsets(d: int, radius: int) -> np.ndarray:
    """All z in Z^d with ||z||_2 <= radius, sorted lexicographically.

    Returned as an (n, d) int64 array; cached per (d, radius).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    r2 = radius * radius
    pts = [
        z
        for z in itertools.product(range(-radius, radius + 1), repeat=d)
        if sum(c * c for c in z) <= r2
    ]
    return np.array(sorted(pts), dtype=np.int64).reshape(len(pts), d)


def ball_size(d: int, radius: int) -> int:
    return len(ball_offsets(d, radius))


def crown_index(z) -> int:
    """Index n of the crown (n-1, n] containing z, by exact integer arithmetic.

    The origin sits in crown 0; otherwise n is the smallest integer with
    ||z|| <= n, i.e. n = ceil(||z||).
    """
    q = int(sum(int(c) * int(c) for c in z))
    if q == 0:
        return 0
    return math.isqrt(q - 1) + 1


def crown_indices_of(points: np.ndarray) -> np.ndarray:
    """Vectorised crown_index over an (n, d) integer array."""
    q = np.sum(points.astype(np.int64) ** 2, axis=1)
    out = np.zeros(len(q), dtype=np.int64)
    nz = q > 0
    out[nz] = np.floor(np.sqrt((q[nz] - 1).astype(np.float64))).astype(np.int64) + 1
    # float sqrt can land one off near perfect squares; fix up exactly
    bad_hi = nz & (out * out < q)
    while np.any(bad_hi):
        out[bad_hi] += 1
        bad_hi = nz & (out * out < q)
    bad_lo = nz & ((out - 1) ** 2 >= q)
    while np.any(bad_lo):
        out[bad_lo] -= 1
        bad_lo = nz & ((out - 1) ** 2 >= q)
    return out


@lru_cache(maxsize=None)
def crown_members(d: int, n: int) -> np.ndarray:
    """Lattice points z with n-1 < ||z|| <= n, sorted lexicographically."""
    if n < 0:
        raise ValueError("crown index must be >= 0")
    if n == 0:
        return np.zeros((1, d), dtype=np.int64)
    lo2, hi2 = (n - 1) * (n - 1), n * n
    pts = [
        z
        for z in itertools.product(range(-n, n + 1), repeat=d)
        if lo2 < sum(c * c for c in z) <= hi2
    ]
    return np.array(sorted(pts), dtype=np.int64).reshape(len(pts), d)


def box_shape(d: int, half: int) -> tuple[int, ...]:
    return (2 * half + 1,) * d


def box_site_count(d: int, half: int) -> int:
    return (2 * half + 1) ** d


def box_coords(d: int, half: int) -> np.ndarray:
    """(n, d) coordinates of the box |x|_inf <= half in row-major order."""
    axes = [np.arange(-half, half + 1)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
