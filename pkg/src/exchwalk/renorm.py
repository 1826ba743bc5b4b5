"""Scalar dominating laws and doubling-time schedules.

These are the bookkeeping objects behind the velocity bound: an i.i.d.
scalar law that stochastically dominates (from below or above) the
projected step of the walker on a good environment, and the squared-time
ladder with its slowly drifting speed targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import MuDistribution
from .walker import ProjectionFrame

_FSUM = math.fsum


class InadmissibleDeltaError(ValueError):
    """The requested correction mass has no admissible value (resolution too small)."""


@dataclass(frozen=True)
class DominatingLaw:
    """Law on the projected step values with one corrected extreme index.

    values[i] is the projected displacement of the direction at canonical
    slot i; probs[i] its mass.  The slot at corrected_slot carries the
    +(2d-1)*delta correction (minus delta per zeroed slot, when some mean
    component vanishes and its mass is dropped instead of going negative).
    """

    values: np.ndarray
    probs: np.ndarray
    delta: float
    corrected_slot: int
    kind: str  # "lower" or "upper"
    zeroed_slots: tuple[int, ...] = ()

    def __post_init__(self):
        if np.any(self.probs < 0):
            raise ValueError("negative probability in dominating law")
        if abs(_FSUM(self.probs.tolist()) - 1.0) > 1e-12:
            raise ValueError("dominating law probabilities must sum to 1")

    @property
    def mean(self) -> float:
        return _FSUM((self.values * self.probs).tolist())


def mean_components(mu: MuDistribution) -> np.ndarray:
    """E[s_j] per canonical direction slot, compensated."""
    if not mu.is_atomic:
        raise ValueError("mean components need an atomic law")
    mat = mu.atom_matrix()
    w = np.asarray(mu.weights)
    return np.array([_FSUM((w * mat[:, s]).tolist()) for s in range(mat.shape[1])])


def admissible_delta_interval(mu: MuDistribution, resolution: int) -> tuple[float, float]:
    """Open interval (2^{-(N-1)} d, min positive mean component) for delta."""
    comps = mean_components(mu)
    d = len(comps) // 2
    lo = 2.0 ** (-(resolution - 1)) * d
    positive = comps[comps > 0]
    if positive.size == 0:
        raise ValueError("all mean components vanish; no admissible delta")
    return lo, float(positive.min())


def build_dominating_law(
    mu: MuDistribution,
    frame: ProjectionFrame,
    delta: float,
    which: str = "lower",
    resolution: int | None = None,
    epsilon: float | None = None,
) -> DominatingLaw:
    """Shift delta of mass from every direction onto one extreme component.

    which="lower" feeds the most negative projected direction (the law sits
    below the walker's good-environment step); which="upper" feeds the most
    positive one.  With no vanishing components the mean obeys the exact
    identity mean = v -+ 2 d v_max delta.  When epsilon is given, the mean
    is checked against v -+ epsilon/2.
    """
    if which not in ("lower", "upper"):
        raise ValueError("which must be 'lower' or 'upper'")
    comps = mean_components(mu)
    twod = len(comps)
    d = twod // 2
    if resolution is not None:
        lo, hi = admissible_delta_interval(mu, resolution)
        if lo >= hi:
            raise InadmissibleDeltaError(
                f"admissible interval ({lo:.3g}, {hi:.3g}) is empty; "
                f"resolution {resolution} is too small for this law"
            )
        if not lo < delta < hi:
            raise InadmissibleDeltaError(
                f"delta={delta} outside the admissible interval ({lo:.3g}, {hi:.3g})"
            )
    v_j = np.asarray(frame.components, dtype=np.float64)
    slot_max = int(np.argmax(v_j))
    # the mirrored direction of slot s sits at 2d-1-s in canonical order
    slot_min = twod - 1 - slot_max
    target = slot_min if which == "lower" else slot_max
    probs = comps.copy()
    zeroed = []
    moved = 0
    for s in range(twod):
        if s == target:
            continue
        if comps[s] == 0.0:
            zeroed.append(s)
            continue
        if comps[s] - delta < 0:
            raise InadmissibleDeltaError(
                f"delta={delta} exceeds the mean component {comps[s]:.3g} at slot {s}"
            )
        probs[s] = comps[s] - delta
        moved += 1
    probs[target] = comps[target] + moved * delta
    law = DominatingLaw(
        values=v_j,
        probs=probs,
        delta=delta,
        corrected_slot=target,
        kind=which,
        zeroed_slots=tuple(zeroed),
    )
    if epsilon is not None:
        v = frame.v
        if which == "lower" and not law.mean > v - epsilon / 2:
            raise ValueError(
                f"lower law mean {law.mean:.6g} fails to exceed v - eps/2 = {v - epsilon / 2:.6g}"
            )
        if which == "upper" and not law.mean < v + epsilon / 2:
            raise ValueError(
                f"upper law mean {law.mean:.6g} fails to stay below v + eps/2 = {v + epsilon / 2:.6g}"
            )
    return law


@dataclass(frozen=True)
class RenormSchedule:
    """Squared-time ladder t_0 < t_1 < ... = t with drifting speed targets.

    c_lower decreases from v towards v (1 - eps/2); c_upper increases from v
    towards v (1 + eps/2).
    """

    T: int
    t: int
    epsilon: float
    v: float
    times: tuple[int, ...]
    c_lower: tuple[float, ...]
    c_upper: tuple[float, ...]

    def __post_init__(self):
        T, times = self.T, self.times
        if not times or times[-1] != self.t:
            raise ValueError("schedule must end at t")
        if times[0] ** 3 < T or times[0] > T:
            raise ValueError(f"t_0={times[0]} outside [T^(1/3), T] for T={T}")
        for a, b in zip(times, times[1:]):
            if not a * a <= b <= (a + 1) * (a + 1):
                raise ValueError(f"consecutive times {a}, {b} violate the squaring band")
        if any(x >= y for x, y in zip(self.c_lower[1:], self.c_lower[:-1])):
            raise ValueError("c_lower must be decreasing")

    @property
    def depth(self) -> int:
        return len(self.times) - 1


def _speed_targets(epsilon: float, v: float, depth: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    r = epsilon / (1.0 + epsilon)
    lower, upper, acc = [], [], 0.0
    for n in range(depth + 1):
        acc += r**n
        lower.append(0.5 * (3.0 - acc) * v)
        upper.append(0.5 * (1.0 + acc) * v)
    return tuple(lower), tuple(upper)


def build_schedule(T: int, t: int, epsilon: float, v: float) -> RenormSchedule:
    """Chain down from t by floored square roots until landing in [T^(1/3), T]."""
    if not 2 <= T <= t:
        raise ValueError("need t >= T >= 2")
    if epsilon <= 0 or v <= 0:
        raise ValueError("epsilon and v must be positive")
    chain = [int(t)]
    while chain[-1] > T:
        nxt = math.isqrt(chain[-1])
        if nxt >= chain[-1]:
            break
        chain.append(nxt)
    t0 = chain[-1]
    if t0 ** 3 < T or t0 > T:
        raise ValueError(
            f"square-root chain from t={t} lands at {t0}, outside [T^(1/3), T] for T={T}; "
            "the pair (T, t) is inconsistent"
        )
    times = tuple(reversed(chain))
    c_lower, c_upper = _speed_targets(epsilon, v, len(times) - 1)
    return RenormSchedule(T, t, epsilon, v, times, c_lower, c_upper)


@dataclass(frozen=True)
class TwoPointLaw:
    """Coarse step law for one ladder rung: hit the target or lose a rung."""

    values: tuple[float, float]
    probs: tuple[float, float]

    @property
    def mean(self) -> float:
        return self.values[0] * self.probs[0] + self.values[1] * self.probs[1]


def zk_law(t_n: int, c_n: float, phi: float, kind: str = "lower") -> TwoPointLaw:
    """Two-point law {c_n t_n, -+t_n} with failure mass exp(-phi^(1/4))."""
    if t_n < 1:
        raise ValueError("t_n must be >= 1")
    if phi <= 0:
        raise ValueError("phi must be positive")
    q = math.exp(-(phi ** 0.25))
    fallback = -float(t_n) if kind == "lower" else float(t_n)
    return TwoPointLaw(values=(c_n * t_n, fallback), probs=(1.0 - q, q))


@dataclass(frozen=True)
class RungReport:
    """Direct evaluation of the rung inequality c_{n+1} t_n - E[Z] <= -t_n^(3/4)."""

    t_n: int
    c_next: float
    law_mean: float
    lhs: float
    rhs: float
    passes: bool


def rung_inequality(t_n: int, c_next: float, law: TwoPointLaw) -> RungReport:
    lhs = c_next * t_n - law.mean
    rhs = -(t_n ** 0.75)
    return RungReport(t_n, c_next, law.mean, lhs, rhs, lhs <= rhs)


__all__ = [
    "InadmissibleDeltaError",
    "DominatingLaw",
    "RenormSchedule",
    "TwoPointLaw",
    "RungReport",
    "mean_components",
    "admissible_delta_interval",
    "build_dominating_law",
    "build_schedule",
    "zk_law",
    "rung_inequality",
]
