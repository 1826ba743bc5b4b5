"""Lattice heat kernel for the stirred environment and its derived objects.

A tagged mark moves across each incident edge at rate gamma, so each
coordinate is an independent one-dimensional walk jumping +-1 at rate gamma
each way.  The one-dimensional kernel is the exponentially scaled modified
Bessel value e^{-2 gamma t} I_k(2 gamma t); the d-dimensional kernel is the
product across coordinates.  Everything here is deterministic numerics:
tabulation, ball averages, crown extremes, monotonicity checks, Gaussian
comparison, and the exact-mean formula used as the Monte Carlo oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.special import ive

from .env import EnvironmentWindow, TypeIndex, WindowTruncationError
from .lattice import ball_offsets, box_coords, crown_indices_of, crown_members

DEFAULT_AXIS_TAIL = 1e-14


def kernel_1d(gamma: float, t: float, k) -> float | np.ndarray:
    """One-dimensional kernel e^{-2 gamma t} I_|k|(2 gamma t).

    Evaluated in exponentially scaled form (never I then scale), so large
    gamma t cannot overflow.  Vectorised over k.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    x = 2.0 * gamma * t
    k = np.abs(np.asarray(k))
    if x == 0.0:
        out = np.where(k == 0, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out
    out = ive(k, x)
    return float(out) if np.ndim(out) == 0 else out


def axis_kernel(gamma: float, t: float, radius: int) -> np.ndarray:
    """kernel_1d on -radius..radius as a dense vector."""
    return np.asarray(kernel_1d(gamma, t, np.arange(-radius, radius + 1)))


def axis_tail_bound(gamma: float, t: float, radius: int) -> float:
    """Certified bound on P(|one coordinate| > radius) at time t.

    Chernoff bound for the rate-gamma-each-way coordinate walk:
    E[exp(theta S_t)] = exp(2 gamma t (cosh theta - 1)), optimised at
    theta = asinh(radius / (2 gamma t)).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    x = 2.0 * gamma * t
    if x == 0.0:
        return 0.0
    dd = radius + 1  # tail beyond radius means |S| >= radius + 1
    r = dd / x
    expo = x * (math.sqrt(1.0 + r * r) - 1.0) - dd * math.asinh(r)
    return min(1.0, 2.0 * math.exp(expo))


def excursion_tail_bound(gamma: float, t: float, radius: int) -> float:
    """Bound on P(max_{s<=t} |one coordinate| > radius); reflection doubles the tail."""
    return min(1.0, 2.0 * axis_tail_bound(gamma, t, radius))


def truncation_radius(gamma: float, t: float, axis_tail: float = DEFAULT_AXIS_TAIL) -> int:
    """Smallest radius whose certified per-axis tail is below axis_tail."""
    if axis_tail <= 0:
        raise ValueError("axis_tail must be positive")
    x = 2.0 * gamma * t
    r = int(x)  # tail at the mean is O(1); walk outward from there
    while axis_tail_bound(gamma, t, r) > axis_tail:
        r = max(2 * r, r + 8)
    lo = 0
    while lo < r:
        mid = (lo + r) // 2
        if axis_tail_bound(gamma, t, mid) <= axis_tail:
            r = mid
        else:
            lo = mid + 1
    return r


@dataclass(frozen=True)
class KernelTable:
    """Tabulated kernel on the box |x|_inf <= r_trunc with its error budget."""

    gamma: float
    t: float
    d: int
    r_trunc: int
    values: np.ndarray  # shape (2 r_trunc + 1,) * d
    mass_deficit: float
    certified_deficit: float

    def value_at(self, x) -> float:
        idx = tuple(int(c) + self.r_trunc for c in x)
        if any(not 0 <= c <= 2 * self.r_trunc for c in idx):
            raise ValueError(f"{tuple(x)} outside tabulated box")
        return float(self.values[idx])


def build_table(
    d: int, gamma: float, t: float, axis_tail: float = DEFAULT_AXIS_TAIL, r_trunc: int | None = None
) -> KernelTable:
    if r_trunc is None:
        r_trunc = truncation_radius(gamma, t, axis_tail)
    ax = axis_kernel(gamma, t, r_trunc)
    values = reduce(np.multiply.outer, [ax] * d)
    deficit = max(0.0, 1.0 - float(values.sum()))
    certified = min(1.0, d * axis_tail_bound(gamma, t, r_trunc))
    return KernelTable(gamma, t, d, r_trunc, values, deficit, certified)


def kernel(gamma: float, t: float, x) -> float:
    """Product-form kernel at lattice point x."""
    x = np.atleast_1d(np.asarray(x))
    return float(np.prod([kernel_1d(gamma, t, int(c)) for c in x]))


def kernel_points(gamma: float, t: float, pts: np.ndarray) -> np.ndarray:
    """Kernel at an (n, d) array of lattice points."""
    pts = np.asarray(pts)
    r = int(np.abs(pts).max()) if pts.size else 0
    ax = axis_kernel(gamma, t, r)
    return np.prod(ax[pts + r], axis=1)


def ball_kernel(gamma: float, t: float, x, M: int) -> float:
    """Average of the kernel over the Euclidean ball of radius M around x."""
    if M < 0:
        raise ValueError("M must be >= 0")
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    offs = ball_offsets(len(x), M)
    return float(kernel_points(gamma, t, x[None, :] + offs).mean())


def _paired_offsets(d: int, M: int) -> list[np.ndarray]:
    """Ball offsets grouped as [0, +y1, -y1, +y2, -y2, ...], pairs lex-ordered.

    Summing each (+y, -y) pair before accumulating keeps every point-symmetric
    pair of outputs bitwise equal, so reflection symmetries hold exactly.
    """
    offs = ball_offsets(d, M)
    pos = [y for y in offs if tuple(y) > tuple(-y)]
    return [np.zeros(d, dtype=np.int64)] + pos


def ball_average_table(
    d: int, gamma: float, t: float, M: int, radius: int
) -> np.ndarray:
    """Ball-averaged kernel on the box |z|_inf <= radius (exact shift-and-add)."""
    big = radius + M
    ax = axis_kernel(gamma, t, big)
    full = reduce(np.multiply.outer, [ax] * d)
    side = 2 * radius + 1

    def shifted(y):
        sl = tuple(slice(M + int(c), M + int(c) + side) for c in y)
        return full[sl]

    groups = _paired_offsets(d, M)
    out = shifted(groups[0]).copy()
    for y in groups[1:]:
        out += shifted(y) + shifted(-y)
    out /= len(ball_offsets(d, M))
    return out


def _crown_group_extremes(table: np.ndarray, d: int, radius: int, n_max: int):
    """(p_plus, p_minus) arrays over crowns 0..n_max from a ball-average table."""
    coords = box_coords(d, radius)
    crowns = crown_indices_of(coords)
    vals = table.ravel()
    keep = crowns <= n_max
    crowns, vals = crowns[keep], vals[keep]
    p_plus = np.full(n_max + 1, -np.inf)
    p_minus = np.full(n_max + 1, np.inf)
    np.maximum.at(p_plus, crowns, vals)
    np.minimum.at(p_minus, crowns, vals)
    return p_plus, p_minus


def crown_extremes(d: int, gamma: float, t: float, M: int, n: int):
    """Extreme ball-averaged values over crown n.

    Returns (x_hat, p_plus, x_check, p_minus, spread) where x_hat/x_check are
    the lexicographically first argmax/argmin among the crown members.
    """
    members = crown_members(d, n)
    if members.size == 0:
        raise ValueError(f"crown {n} is empty in d={d}")
    groups = _paired_offsets(d, M)
    vals = kernel_points(gamma, t, members + groups[0])
    for y in groups[1:]:
        vals = vals + (kernel_points(gamma, t, members + y) + kernel_points(gamma, t, members - y))
    vals /= len(ball_offsets(d, M))
    i_hi = int(np.argmax(vals))  # members are lex-sorted; first max is lex-smallest
    i_lo = int(np.argmin(vals))
    return (
        tuple(int(c) for c in members[i_hi]),
        float(vals[i_hi]),
        tuple(int(c) for c in members[i_lo]),
        float(vals[i_lo]),
        float(vals[i_hi] - vals[i_lo]),
    )


def check_monotonicity(d: int, gamma: float, t: float, M: int, r_check: int) -> float:
    """Worst violation of radial monotonicity of the ball-averaged kernel.

    Over all y with ||y|| <= r_check and directions e with <y, e> > 0, returns
    max of p_M(t, y+e) - p_M(t, y); a correct kernel keeps this <= numerical noise.
    """
    table = ball_average_table(d, gamma, t, M, r_check + 1)
    radius = r_check + 1
    coords = box_coords(d, radius)
    vals = table.ravel()
    norms2 = np.sum(coords * coords, axis=1)
    inner = norms2 <= r_check * r_check
    worst = -np.inf
    side = 2 * radius + 1
    strides = np.array([side ** (d - 1 - a) for a in range(d)])
    flat = np.arange(len(coords))
    for a in range(d):
        for sgn in (1, -1):
            sel = inner & (sgn * coords[:, a] > 0)
            if not np.any(sel):
                continue
            nb = flat[sel] + sgn * strides[a]
            viol = vals[nb] - vals[sel]
            worst = max(worst, float(viol.max()))
    return worst


def check_crown_ordering(d: int, gamma: float, t: float, M: int, n_max: int) -> float:
    """Worst signed violation of p+/p- being nonincreasing in the crown index."""
    table = ball_average_table(d, gamma, t, M, n_max)
    p_plus, p_minus = _crown_group_extremes(table, d, n_max, n_max)
    worst = max(float(np.diff(p_plus).max()), float(np.diff(p_minus).max()))
    return worst


def gaussian_kernel(gamma: float, t: float, z) -> float:
    """Closed-form Gaussian comparison kernel with per-coordinate variance gamma t."""
    if t <= 0:
        raise ValueError("t must be > 0")
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    d = z.size
    return float(math.exp(-float(z @ z) / (2.0 * gamma * t)) / (2.0 * math.pi * gamma * t) ** (d / 2.0))


def gaussian_ball_average(gamma: float, t: float, x, M: int) -> float:
    """Gaussian kernel averaged over the same ball offsets as the lattice version."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    offs = ball_offsets(len(x), M)
    pts = x[None, :] + offs
    q = np.sum(pts * pts, axis=1)
    d = len(x)
    return float(np.mean(np.exp(-q / (2.0 * gamma * t))) / (2.0 * math.pi * gamma * t) ** (d / 2.0))


@dataclass(frozen=True)
class LcltReport:
    sup_error: float
    scaled: float  # sup_error * (gamma t)^(d/2 + 1)
    argmax: tuple[int, ...]


def lclt_error(d: int, gamma: float, t: float, r_check: int) -> LcltReport:
    """sup_z |p(t,z) - Gaussian(z)| over ||z|| <= r_check, plus the scaled ratio.

    The comparison Gaussian carries the walk's true per-coordinate variance
    2 gamma t, i.e. the density of N(0, 2 gamma t Id) -- the local CLT limit
    of this kernel.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    table = build_table(d, gamma, t, r_trunc=r_check)
    coords = box_coords(d, r_check)
    keep = np.sum(coords * coords, axis=1) <= r_check * r_check
    pts = coords[keep]
    p = table.values.ravel()[keep]
    q = np.sum(pts * pts, axis=1).astype(np.float64)
    # per-coordinate variance of the walk is 2 gamma t
    var = 2.0 * gamma * t
    g = np.exp(-q / (2.0 * var)) / (2.0 * math.pi * var) ** (d / 2.0)
    err = np.abs(p - g)
    i = int(np.argmax(err))
    sup = float(err[i])
    return LcltReport(sup, sup * (gamma * t) ** (d / 2.0 + 1.0), tuple(int(c) for c in pts[i]))


@dataclass(frozen=True)
class NeighborDecayReport:
    sup_diff: float
    scaled: float  # sup_diff * (gamma t)^((d+1)/2)
    argmax: tuple[int, ...]


def neighbor_difference_decay(d: int, gamma: float, t: float) -> NeighborDecayReport:
    """sup over z and unit directions of |p(t,z) - p(t,z+e)| on the certified support."""
    table = build_table(d, gamma, t)
    sup = -np.inf
    arg = (0,) * d
    for a in range(d):
        diff = np.abs(np.diff(table.values, axis=a))
        i = np.unravel_index(int(np.argmax(diff)), diff.shape)
        if float(diff[i]) > sup:
            sup = float(diff[i])
            arg = tuple(int(c) - table.r_trunc for c in i)
    return NeighborDecayReport(sup, sup * (gamma * t) ** ((d + 1) / 2.0), arg)


@dataclass(frozen=True)
class CrownErrorSums:
    """Crown spread sums split at the diffusive scale around M."""

    h1: float
    h2: float
    h3: float
    total: float  # sum_{n >= L} E_M(t,n) |C_n| up to n_max, tail certified
    boundary: float  # E_M(t,L) |B_{L-1}|
    scaled_total: float  # total * (gamma t)^(1/2 - eps d)
    scaled_boundary: float  # boundary * (gamma t)^((d+1)/2) / L^d
    m_minus: int
    m_plus: int
    n_max: int
    tail_bound: float


def crown_error_sums(
    d: int,
    gamma: float,
    t: float,
    M: int,
    L: int,
    epsilon_exponent: float = 0.05,
    n_max: int | None = None,
) -> CrownErrorSums:
    """Evaluate the crown spread sums and their scale-invariant ratios.

    The split points are m_minus = floor(M - (gamma t)^(1/2+eps)) v L and
    m_plus = floor(M + (gamma t)^(1/2+eps)) v L; h1/h2/h3 are the partial
    sums below, between and above them.
    """
    gt = gamma * t
    if gt <= 0:
        raise ValueError("gamma * t must be > 0")
    if L < 1:
        raise ValueError("L must be >= 1")
    r_ax = truncation_radius(gamma, t)
    if n_max is None:
        # generous margin so the certified tail is negligible, not merely small
        n_max = r_ax + M + max(10, r_ax // 2)
    spread = (gt) ** (0.5 + epsilon_exponent)
    m_minus = max(int(math.floor(M - spread)), L)
    m_plus = max(int(math.floor(M + spread)), L)

    table = ball_average_table(d, gamma, t, M, n_max)
    p_plus, p_minus = _crown_group_extremes(table, d, n_max, n_max)
    coords = box_coords(d, n_max)
    crowns = crown_indices_of(coords)
    sizes = np.bincount(crowns[crowns <= n_max], minlength=n_max + 1)
    err = (p_plus - p_minus) * sizes

    def part(lo, hi):  # sum over n in [lo, hi)
        lo, hi = max(lo, L), min(hi, n_max + 1)
        return float(err[lo:hi].sum()) if hi > lo else 0.0

    h1 = part(L, m_minus)
    h2 = part(m_minus, m_plus)
    h3 = part(m_plus, n_max + 1)
    total = float(err[L:].sum())
    ball_m1 = len(ball_offsets(d, L - 1))
    boundary = float((p_plus[L] - p_minus[L]) * ball_m1)

    # certified tail beyond n_max: spreads bounded by the max ball-average,
    # itself at most P(some coordinate >= (n-1-M)/sqrt(d)) / |B_M|
    ball_m = len(ball_offsets(d, M))
    tail = 0.0
    n = n_max + 1
    while True:
        u = max(int((n - 1 - M) / math.sqrt(d)), 0)
        term = (2 * n + 1) ** d * d * axis_tail_bound(gamma, t, u) / ball_m
        tail += term
        if term < 1e-30 or n > n_max + 400:
            break
        n += 1

    return CrownErrorSums(
        h1=h1,
        h2=h2,
        h3=h3,
        total=total,
        boundary=boundary,
        scaled_total=total * gt ** (0.5 - epsilon_exponent * d),
        scaled_boundary=boundary * gt ** ((d + 1) / 2.0) / L**d,
        m_minus=m_minus,
        m_plus=m_plus,
        n_max=n_max,
        tail_bound=tail,
    )


@dataclass(frozen=True)
class ExactMean:
    """Expected type-k density in B_L(center) at time t, given the start."""

    value: float
    outside_mass: float


def exact_mean(
    env: EnvironmentWindow,
    gamma: float,
    t: float,
    L: int,
    k: TypeIndex,
    center=None,
    mass_budget: float = 1e-9,
) -> ExactMean:
    """Exact expectation of the ball density from the start configuration.

    value = sum_z pbar_L(t, z - center) 1{type(eta_z) = k} over window sites,
    where pbar_L is the ball-averaged kernel.  The kernel mass assigned to
    sites beyond the window is reported and must stay within mass_budget.
    """
    d = env.d
    if center is None:
        center = (0,) * d
    if not env.contains_ball(center, L):
        raise WindowTruncationError("ball does not fit inside the window")
    half = env.half
    # per-axis kernel on the displacement range of (site - center) + ball offset
    reach = half + max(abs(int(center[a]) - env.origin[a]) for a in range(d)) + L
    ax = axis_kernel(gamma, t, reach)
    offs = ball_offsets(d, L)
    side = 2 * half + 1
    axis_rel = [
        np.arange(-half, half + 1) + env.origin[a] - int(center[a]) for a in range(d)
    ]
    table = np.zeros((side,) * d)
    for y in offs:
        table += reduce(np.multiply.outer, [ax[axis_rel[a] + int(y[a]) + reach] for a in range(d)])
    table /= len(offs)
    inside = float(table.sum())
    outside = max(0.0, 1.0 - inside)
    if outside > mass_budget:
        need = truncation_radius(gamma, t) + L
        raise WindowTruncationError(
            f"kernel mass {outside:.3e} outside window exceeds budget {mass_budget:.1e}; "
            f"need window half-width around {need}"
        )
    scale = 1 << k.resolution
    top = scale - 1
    cells = np.minimum(np.floor(env.marks * scale).astype(np.int64), top)
    hits = np.all(cells == np.asarray(k.coords, dtype=np.int64), axis=1)
    value = float(table.ravel() @ hits.astype(np.float64))
    return ExactMean(value=value, outside_mass=outside)


__all__ = [
    "DEFAULT_AXIS_TAIL",
    "KernelTable",
    "LcltReport",
    "NeighborDecayReport",
    "CrownErrorSums",
    "ExactMean",
    "kernel_1d",
    "axis_kernel",
    "axis_tail_bound",
    "excursion_tail_bound",
    "truncation_radius",
    "build_table",
    "kernel",
    "kernel_points",
    "ball_kernel",
    "ball_average_table",
    "crown_extremes",
    "check_monotonicity",
    "check_crown_ordering",
    "gaussian_kernel",
    "gaussian_ball_average",
    "lclt_error",
    "neighbor_difference_decay",
    "crown_error_sums",
    "exact_mean",
]
