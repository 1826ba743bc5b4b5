"""Graphical-construction simulator of the stirring dynamics on a finite box.

Every undirected edge inside the box carries an exponential clock of rate
gamma (so a tracked mark leaves its site at total rate 2 d gamma); when a
clock rings, the two endpoint marks swap.  Clocks exist only on edges with
both endpoints inside the box (reflecting boundary); fidelity to the
infinite system is bought with a buffer margin, never with a torus.

Schedules are deterministic functions of (seed, geometry, gamma, horizon).
The canonical sampler keys an independent counter-based stream to every
edge, so the schedule does not depend on enumeration order; a pooled
sampler draws the merged stream directly (same law, one stream) for
Monte Carlo loops where per-edge keying would dominate the runtime.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from heapq import heappop, heappush

import numpy as np
from scipy.stats import poisson

from .drivers import STATUS_OK, apply_swaps, stir_dense
from .env import EnvironmentWindow
from .kernel import excursion_tail_bound
from .lattice import direction_indices

SNAPSHOT_MAGIC = b"XWSNAP01"


class ScheduleTooLargeError(MemoryError):
    """Expected event count above the cap; use stream_events instead."""


class StirBreachError(RuntimeError):
    """A tracked mark left the certified simulation region."""


@dataclass(frozen=True)
class BoxGeometry:
    """Axis-aligned box of lattice sites, closed at both ends."""

    d: int
    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != self.d or len(self.hi) != self.d:
            raise ValueError("lo/hi must have one entry per axis")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ValueError("empty box")

    @property
    def sides(self) -> tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.sides))

    @property
    def strides(self) -> np.ndarray:
        s = np.ones(self.d, dtype=np.int64)
        sides = self.sides
        for a in range(self.d - 2, -1, -1):
            s[a] = s[a + 1] * sides[a + 1]
        return s

    def site_flat(self, x) -> int:
        idx = 0
        for a in range(self.d):
            c = int(x[a]) - self.lo[a]
            if not 0 <= c < self.sides[a]:
                raise ValueError(f"site {tuple(x)} outside box")
            idx = idx * self.sides[a] + c
        return idx

    def flat_coords(self, flat: int) -> tuple[int, ...]:
        out = []
        for a in range(self.d - 1, -1, -1):
            side = self.sides[a]
            out.append(flat % side + self.lo[a])
            flat //= side
        return tuple(reversed(out))

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lower_flat, higher_flat, axis) for every in-box edge, canonical order.

        Canonical order is lexicographic in (lower site, axis); ranks into
        these arrays are the tie-break order for simultaneous events.
        """
        sides = self.sides
        strides = self.strides
        lows, highs, axes = [], [], []
        for axis in range(self.d):
            if sides[axis] < 2:
                continue
            keep_shape = tuple(
                s - 1 if a == axis else s for a, s in enumerate(sides)
            )
            grids = np.meshgrid(*[np.arange(n) for n in keep_shape], indexing="ij")
            rel = np.stack([g.ravel() for g in grids], axis=1)
            flat = rel @ strides
            lows.append(flat)
            highs.append(flat + strides[axis])
            axes.append(np.full(len(flat), axis, dtype=np.int8))
        if not lows:
            return (
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.int8),
            )
        low = np.concatenate(lows)
        high = np.concatenate(highs)
        axis_arr = np.concatenate(axes)
        order = np.lexsort((axis_arr, low))
        return low[order], high[order], axis_arr[order]

    @property
    def n_edges(self) -> int:
        return len(self.edges[0])


def window_geometry(env: EnvironmentWindow) -> BoxGeometry:
    half = env.half
    return BoxGeometry(
        env.d,
        tuple(o - half for o in env.origin),
        tuple(o + half for o in env.origin),
    )


@dataclass(frozen=True)
class SwapEvent:
    time: float
    edge: tuple[tuple[int, ...], tuple[int, ...]]


@dataclass(frozen=True)
class EventSchedule:
    """Time-sorted swap events for one box, plus everything needed to replay."""

    geometry: BoxGeometry
    gamma: float
    horizon: float
    seed: int
    times: np.ndarray  # float64, sorted
    a_flat: np.ndarray  # int64 lower endpoint
    b_flat: np.ndarray  # int64 higher endpoint
    sampler: str = "edge-keyed"

    @property
    def n_events(self) -> int:
        return len(self.times)

    def events(self) -> list[SwapEvent]:
        g = self.geometry
        return [
            SwapEvent(float(t), (g.flat_coords(int(a)), g.flat_coords(int(b))))
            for t, a, b in zip(self.times, self.a_flat, self.b_flat)
        ]

    def count_upto(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right"))


def _edge_stream_seed(seed: int, coords: tuple[int, ...], axis: int) -> list[int]:
    base = int(seed) & (2**64 - 1)
    return [base, axis] + [int(c) + 2**31 for c in coords]


def _edge_arrivals(rng: np.random.Generator, gamma: float, t_max: float) -> np.ndarray:
    block = max(4, int(gamma * t_max + 6.0 * math.sqrt(gamma * t_max) + 6))
    gaps = rng.exponential(1.0 / gamma, size=block)
    times = np.cumsum(gaps)
    while times[-1] <= t_max:
        gaps = rng.exponential(1.0 / gamma, size=block)
        times = np.concatenate([times, times[-1] + np.cumsum(gaps)])
    return times[times <= t_max]


def sample_schedule(
    geometry: BoxGeometry,
    gamma: float,
    t_max: float,
    seed: int,
    max_events: float = 5e7,
) -> EventSchedule:
    """Edge-keyed schedule: one counter-based stream per edge, merged and sorted."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    low, high, axis = geometry.edges
    expected = gamma * len(low) * t_max
    if expected > max_events:
        raise ScheduleTooLargeError(
            f"expected {expected:.2e} events exceeds cap {max_events:.2e}; "
            "generate lazily with stream_events"
        )
    all_times, all_a, all_b, all_rank = [], [], [], []
    if t_max > 0:
        for rank in range(len(low)):
            coords = geometry.flat_coords(int(low[rank]))
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(_edge_stream_seed(seed, coords, int(axis[rank]))))
            )
            times = _edge_arrivals(rng, gamma, t_max)
            if len(times):
                all_times.append(times)
                all_a.append(np.full(len(times), low[rank]))
                all_b.append(np.full(len(times), high[rank]))
                all_rank.append(np.full(len(times), rank))
    if all_times:
        times = np.concatenate(all_times)
        a = np.concatenate(all_a)
        b = np.concatenate(all_b)
        ranks = np.concatenate(all_rank)
        order = np.lexsort((ranks, times))
        times, a, b = times[order], a[order], b[order]
    else:
        times = np.empty(0)
        a = np.empty(0, dtype=np.int64)
        b = np.empty(0, dtype=np.int64)
    return EventSchedule(geometry, gamma, t_max, int(seed), times, a, b)


def stream_events(geometry: BoxGeometry, gamma: float, t_max: float, seed: int):
    """Yield the same events as sample_schedule lazily, in time order.

    Memory stays proportional to the live edge count; per-edge streams are
    identical to the batch sampler, so the merged sequence is bit-identical.
    """
    low, high, axis = geometry.edges
    heap = []
    streams = []
    for rank in range(len(low)):
        coords = geometry.flat_coords(int(low[rank]))
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(_edge_stream_seed(seed, coords, int(axis[rank]))))
        )
        streams.append(rng)
        t = rng.exponential(1.0 / gamma)
        if t <= t_max:
            heappush(heap, (t, rank))
    while heap:
        t, rank = heappop(heap)
        yield SwapEvent(
            float(t),
            (geometry.flat_coords(int(low[rank])), geometry.flat_coords(int(high[rank]))),
        )
        t_next = t + streams[rank].exponential(1.0 / gamma)
        if t_next <= t_max:
            heappush(heap, (t_next, rank))


def sample_schedule_pooled(
    geometry: BoxGeometry, gamma: float, t_max: float, seed: int
) -> EventSchedule:
    """Merged-stream sampler: Poisson total count, uniform times, uniform edges.

    Equal in law to the edge-keyed sampler (superposition of the per-edge
    Poisson streams) but a single vectorised draw; preferred inside replica
    loops.  Not bitwise comparable with the edge-keyed sampler.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    low, high, _ = geometry.edges
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    n = int(rng.poisson(gamma * len(low) * t_max)) if t_max > 0 else 0
    times = np.sort(rng.random(n)) * t_max
    ranks = rng.integers(0, len(low), size=n)
    return EventSchedule(
        geometry, gamma, t_max, int(seed), times, low[ranks], high[ranks], sampler="pooled"
    )


def evolve_perm(schedule: EventSchedule, perm: np.ndarray, applied: int, t: float) -> int:
    """Advance the site permutation through events in (applied, count_upto(t)]."""
    stop = schedule.count_upto(t)
    if stop > applied:
        apply_swaps(perm, schedule.a_flat, schedule.b_flat, applied, stop)
    return stop


def evolve(env: EnvironmentWindow, schedule: EventSchedule, t: float) -> EnvironmentWindow:
    """Configuration at time t: all swaps with time <= t applied in order."""
    if t < 0 or t > schedule.horizon:
        raise ValueError(f"t={t} outside [0, horizon={schedule.horizon}]")
    if schedule.geometry != window_geometry(env):
        raise ValueError("schedule geometry does not match the window")
    perm = np.arange(env.n_sites, dtype=np.int64)
    evolve_perm(schedule, perm, 0, t)
    ids = None if env.atom_ids is None else env.atom_ids[perm]
    return EnvironmentWindow(env.d, env.radius, env.buffer, env.marks[perm], env.origin, ids)


def snapshot_series(
    env: EnvironmentWindow, schedule: EventSchedule, times
) -> list[EnvironmentWindow]:
    """Windows at the requested times, evolved incrementally."""
    times = list(times)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("times must be sorted")
    if times and (times[0] < 0 or times[-1] > schedule.horizon):
        raise ValueError("times outside schedule horizon")
    if schedule.geometry != window_geometry(env):
        raise ValueError("schedule geometry does not match the window")
    perm = np.arange(env.n_sites, dtype=np.int64)
    out = []
    applied = 0
    for t in times:
        applied = evolve_perm(schedule, perm, applied, t)
        ids = None if env.atom_ids is None else env.atom_ids[perm]
        out.append(
            EnvironmentWindow(env.d, env.radius, env.buffer, env.marks[perm], env.origin, ids)
        )
    return out


def required_buffer(d: int, R: int, gamma: float, t_max: float, delta_trunc: float) -> int:
    """Smallest W with P(Poisson(2 d gamma t_max) > W) <= delta_trunc.

    A mark makes Poisson(2 d gamma t_max) jumps in [0, t_max], so a mark
    starting outside the box of radius R + W cannot reach the box of radius
    R unless its jump count exceeds W; the restriction of the finite run to
    the inner box then matches the infinite system except on an event of
    probability at most (site count) * delta_trunc.
    """
    if not 0 < delta_trunc < 1:
        raise ValueError("delta_trunc must be in (0, 1)")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    lam = 2.0 * d * gamma * t_max
    if lam == 0.0:
        return 0
    w = max(0, int(poisson.ppf(1.0 - delta_trunc, lam)) - 2)
    while poisson.sf(w, lam) > delta_trunc:
        w += 1
    while w > 0 and poisson.sf(w - 1, lam) <= delta_trunc:
        w -= 1
    return w


def _padded_occupancy(sides: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat int32 occupancy with a guard ring, plus per-axis padded strides."""
    padded = tuple(int(s) + 2 for s in sides)
    occ = np.full(padded, -1, dtype=np.int32)
    for a in range(len(padded)):
        sl_lo = tuple(slice(None) if b != a else 0 for b in range(len(padded)))
        sl_hi = tuple(slice(None) if b != a else padded[a] - 1 for b in range(len(padded)))
        occ[sl_lo] = -2
        occ[sl_hi] = -2
    strides = np.ones(len(padded), dtype=np.int64)
    for a in range(len(padded) - 2, -1, -1):
        strides[a] = strides[a + 1] * padded[a + 1]
    return occ.ravel(), strides


def direction_strides(d: int, axis_strides: np.ndarray) -> np.ndarray:
    """Signed flat strides in canonical direction order (-d..-1, 1..d)."""
    out = np.empty(2 * d, dtype=np.int64)
    for slot, j in enumerate(direction_indices(d)):
        out[slot] = (1 if j > 0 else -1) * axis_strides[abs(j) - 1]
    return out


def stir_margin(d: int, gamma: float, t: float, n_marks: int, delta: float = 1e-12) -> int:
    """Certified per-axis travel margin: all n_marks stay within it w.p. >= 1 - delta."""
    budget = delta / max(1, n_marks * d)
    r = 1
    while excursion_tail_bound(gamma, t, r) > budget:
        r = max(2 * r, r + 8)
    lo = 0
    while lo < r:
        mid = (lo + r) // 2
        if excursion_tail_bound(gamma, t, mid) <= budget:
            r = mid
        else:
            lo = mid + 1
    return r


def stir_sites(
    sites: np.ndarray, gamma: float, t: float, seed: int, delta: float = 1e-12
) -> np.ndarray:
    """Exact joint motion of the marks initially on the given sites.

    Under the stirring dynamics each tracked content moves across every
    incident edge at rate gamma, swapping when it hits another tracked one.
    Reversing time turns this into the law of where the marks now at these
    sites came from, which is how the experiments sample a configuration at
    a single late time without simulating the whole box.
    """
    sites = np.asarray(sites, dtype=np.int64)
    n, d = sites.shape
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0 or n == 0:
        return sites.copy()
    margin = stir_margin(d, gamma, t, n, delta)
    lo = sites.min(axis=0) - margin
    hi = sites.max(axis=0) + margin
    sides = hi - lo + 1
    occ, padded_strides = _padded_occupancy(sides)
    dir_strides = direction_strides(d, padded_strides)
    rel = sites - lo + 1  # +1 for the guard ring
    flat = rel @ padded_strides
    pos = flat.astype(np.int64).copy()
    status = stir_dense(occ, pos, dir_strides, float(gamma), float(t), _numba_seed(seed))
    if status != STATUS_OK:
        raise StirBreachError(
            f"a mark crossed the certified margin {margin} (budget {delta:.1e}); "
            "retry with a smaller delta"
        )
    out = np.empty_like(sites)
    rem = pos.copy()
    for a in range(d - 1, -1, -1):
        side = sides[a] + 2
        out[:, a] = rem % side - 1 + lo[a]
        rem //= side
    return out


def _numba_seed(seed: int) -> int:
    return int(seed) & 0x7FFFFFFF


def tracked_paths(schedule: EventSchedule, sites, t: float) -> dict[tuple[int, ...], list]:
    """Space-time paths of the marks starting on the given sites, up to time t.

    Returns, per start site, the list [(0.0, site), (t1, site1), ...] of its
    mark's position after every swap that moved it.  Replay-level tool for
    validating buffer margins; cost is one pass over the schedule.
    """
    geom = schedule.geometry
    start = {geom.site_flat(s): tuple(int(c) for c in s) for s in sites}
    pos_of = dict(start)  # current flat position -> start site key
    paths = {key: [(0.0, key)] for key in start.values()}
    stop = schedule.count_upto(t)
    for i in range(stop):
        a = int(schedule.a_flat[i])
        b = int(schedule.b_flat[i])
        ka = pos_of.pop(a, None)
        kb = pos_of.pop(b, None)
        when = float(schedule.times[i])
        if ka is not None:
            pos_of[b] = ka
            paths[ka].append((when, geom.flat_coords(b)))
        if kb is not None:
            pos_of[a] = kb
            paths[kb].append((when, geom.flat_coords(a)))
    return paths


def dump_snapshot(
    env: EnvironmentWindow, path, resolution: int, gamma: float, t: float
) -> None:
    """Binary snapshot for golden tests and debugging.

    Layout, all little-endian: 8-byte magic, header of int32 {d, R, W, N}
    followed by float64 {gamma, t}, then the site marks as float64 rows in
    row-major site order.
    """
    header = struct.pack(
        "<iiii", env.d, env.radius, env.buffer, resolution
    ) + struct.pack("<dd", float(gamma), float(t))
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(env.marks, dtype="<f8").tobytes())


def load_snapshot(path) -> tuple[EnvironmentWindow, int, float, float]:
    """Inverse of dump_snapshot; returns (window, N, gamma, t)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError("not a snapshot file")
        d, radius, buffer_, resolution = struct.unpack("<iiii", fh.read(16))
        gamma, t = struct.unpack("<dd", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f8")
    n = (2 * (radius + buffer_) + 1) ** d
    marks = data.reshape(n, 2 * d).astype(np.float64)
    return EnvironmentWindow(d, radius, buffer_, marks), resolution, gamma, t


__all__ = [
    "BoxGeometry",
    "SwapEvent",
    "EventSchedule",
    "ScheduleTooLargeError",
    "StirBreachError",
    "window_geometry",
    "sample_schedule",
    "sample_schedule_pooled",
    "stream_events",
    "evolve",
    "evolve_perm",
    "snapshot_series",
    "required_buffer",
    "stir_sites",
    "stir_margin",
    "direction_strides",
    "tracked_paths",
    "dump_snapshot",
    "load_snapshot",
]
