"""Independent cross-check routes for the kernel and buffer numerics.

Nothing here shares code with kernel.py: the uniformization series mixes
discrete-walk step distributions with Poisson weights, the generator route
exponentiates the truncated jump matrix, and the Poisson tail is summed
term by term.  These exist purely to catch bugs in the primary formulas.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln, logsumexp

from .lattice import box_coords


def kernel_1d_uniformization(gamma: float, t: float, k: int, extra_terms: int = 60) -> float:
    """P(coordinate walk at k) as a Poisson(2 gamma t) mixture of simple-walk steps.

    Conditioned on n total jumps the coordinate is a lazy-free simple random
    walk, P(S_n = k) = C(n, (n+k)/2) 2^{-n} for n = k mod 2.  Summed in log
    space against the Poisson weights.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    lam = 2.0 * gamma * t
    k = abs(int(k))
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    n_hi = int(lam + 12.0 * math.sqrt(lam) + extra_terms)
    n = np.arange(k, n_hi + 1, 2, dtype=np.float64)
    if n.size == 0:
        return 0.0
    log_pois = -lam + n * math.log(lam) - gammaln(n + 1.0)
    log_binom = gammaln(n + 1.0) - gammaln((n + k) / 2.0 + 1.0) - gammaln((n - k) / 2.0 + 1.0)
    log_terms = log_pois + log_binom - n * math.log(2.0)
    return float(np.exp(logsumexp(log_terms)))


def kernel_box_generator_expm(d: int, gamma: float, t: float, half: int) -> np.ndarray:
    """Kernel on a box via the exponential of the truncated generator.

    The generator keeps the full exit rate 2 d gamma on the diagonal and
    drops jumps leaving the box, so the result is a lower bound on the
    infinite-lattice kernel, accurate to the probability of touching the
    boundary by time t.  Returns the (2 half + 1,)*d array started from 0.
    """
    coords = box_coords(d, half)
    side = 2 * half + 1
    n = len(coords)
    strides = np.array([side ** (d - 1 - a) for a in range(d)], dtype=np.int64)
    rows, cols, vals = [], [], []
    idx = np.arange(n, dtype=np.int64)
    for a in range(d):
        for sgn in (1, -1):
            ok = np.abs(coords[:, a] + sgn) <= half
            rows.append(idx[ok] + sgn * strides[a])
            cols.append(idx[ok])
            vals.append(np.full(ok.sum(), gamma))
    rows.append(idx)
    cols.append(idx)
    vals.append(np.full(n, -2.0 * d * gamma))
    q = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    start = np.zeros(n)
    start[(n - 1) // 2] = 1.0
    out = expm_multiply(q * t, start)
    return out.reshape((side,) * d)


def poisson_tail_direct(lam: float, w: int, tol: float = 1e-300) -> float:
    """P(Poisson(lam) > w) by direct summation of the pmf above w."""
    if lam == 0.0:
        return 0.0
    total = 0.0
    log_p = -lam + (w + 1) * math.log(lam) - math.lgamma(w + 2)
    j = w + 1
    while True:
        p = math.exp(log_p)
        total += p
        j += 1
        log_p += math.log(lam) - math.log(j)
        if p < tol and j > lam:
            break
    return total


def gaussian_riemann_mass(d: int, gamma: float, t: float, half_width: float, step: float) -> float:
    """Riemann sum of the Gaussian comparison kernel over a grid, for mass checks."""
    ax = np.arange(-half_width, half_width + step / 2, step)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    q = sum(g * g for g in grids)
    vals = np.exp(-q / (2.0 * gamma * t)) / (2.0 * math.pi * gamma * t) ** (d / 2.0)
    return float(vals.sum() * step**d)


__all__ = [
    "kernel_1d_uniformization",
    "kernel_box_generator_expm",
    "poisson_tail_direct",
    "gaussian_riemann_mass",
]
