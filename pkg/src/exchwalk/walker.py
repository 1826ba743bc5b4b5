"""Discrete-time walker on top of the evolving environment.

The walker reads the transition vector under its feet at integer times,
draws a direction by inverse CDF in the canonical order (-d..-1, 1..d),
and the environment stirs during the open interval to the next read.

Two exact drivers produce annealed samples.  The windowed driver draws a
buffered box of fresh marks and replays a full event schedule -- the
literal construction, priced at gamma * edges * T events.  The lazy driver
tracks only the marks the walker has actually read (unread sites stay
exchangeable fresh draws) and stirs that set, pricing a run at
O(gamma * d * T^2) events independent of any box, which is what makes the
large-gamma velocity experiments affordable.  Both are deterministic in
their seeds; they agree in law, not bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import drivers
from .env import EnvironmentWindow, MuDistribution, TransitionVector, window_from_iid
from .interchange import (
    BoxGeometry,
    EventSchedule,
    direction_strides,
    required_buffer,
    sample_schedule,
    stir_margin,
    window_geometry,
    _numba_seed,
    _padded_occupancy,
)
from .lattice import direction_indices, direction_matrix, slot_direction

DEFAULT_DELTA_TRUNC = 1e-9
DEFAULT_SITE_CAP = 1 << 26  # dense occupancy cells the lazy driver may allocate


class BufferBreachError(RuntimeError):
    """The walker or a tracked mark left the certified region."""


class ResourceCapError(MemoryError):
    """A run would allocate more than the configured cap."""


@dataclass(frozen=True)
class WalkSeeds:
    environment: int
    step: int


@dataclass(frozen=True)
class ProjectionFrame:
    """Unit direction, its annealed speed, and per-direction components."""

    direction: np.ndarray  # unit vector, shape (d,)
    v: float  # <annealed drift, direction>
    components: np.ndarray  # <direction, e_j> in canonical order, shape (2d,)

    def __post_init__(self):
        vec = np.asarray(self.direction, dtype=np.float64)
        if abs(float(vec @ vec) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector (1e-12)")
        vec.setflags(write=False)
        self.components.setflags(write=False)
        object.__setattr__(self, "direction", vec)

    @property
    def has_tied_components(self) -> bool:
        c = np.sort(self.components)
        return bool(np.any(np.diff(c) == 0))


def projection_frame(mu: MuDistribution, direction) -> ProjectionFrame:
    from .env import annealed_drift

    vec = np.asarray(direction, dtype=np.float64)
    d = vec.size
    comps = direction_matrix(d).astype(np.float64) @ vec
    return ProjectionFrame(vec, float(annealed_drift(mu) @ vec), comps)


@dataclass(frozen=True)
class WalkSample:
    """One trajectory: positions at integer times, plus its provenance."""

    positions: np.ndarray  # (T+1, d) int64, row 0 is the origin
    environment_seed: int
    step_seed: int
    gamma: float  # math.inf for the refresh-every-step baseline
    T: int
    driver: str = "window"
    tracked_marks: Optional[int] = None
    max_excursion: Optional[int] = None

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.positions, axis=0)


def step(env_at_k: EnvironmentWindow, x, u: float) -> int:
    """Direction index for uniform u, by inverse CDF over the canonical order."""
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    probs = env_at_k.marks[env_at_k.site_index(x)]
    cdf = np.cumsum(probs)
    slot = int(np.searchsorted(cdf, u, side="right"))
    slot = min(slot, 2 * env_at_k.d - 1)
    return slot_direction(slot, env_at_k.d)


def _marks_cdf(marks: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(marks, axis=1)
    cdf[:, -1] = 1.0  # guard against sums a hair under 1
    return cdf


def _direction_arrays(d: int) -> tuple[np.ndarray, np.ndarray]:
    axis_of = np.empty(2 * d, dtype=np.int64)
    sign_of = np.empty(2 * d, dtype=np.int64)
    for slot, j in enumerate(direction_indices(d)):
        axis_of[slot] = abs(j) - 1
        sign_of[slot] = 1 if j > 0 else -1
    return axis_of, sign_of


def run_quenched(
    env0: EnvironmentWindow,
    gamma: float,
    T: int,
    seeds: WalkSeeds,
    schedule: EventSchedule | None = None,
) -> WalkSample:
    """Walk T steps on the given start configuration (windowed, exact).

    Environment randomness comes from the schedule (seeded by
    seeds.environment); step randomness is an independent stream.  Reads
    happen at integer times before any event of the following interval.
    """
    if any(o != 0 for o in env0.origin):
        raise ValueError("quenched runs assume the window is centred at the origin")
    if schedule is None:
        schedule = sample_schedule(window_geometry(env0), gamma, float(T), seeds.environment)
    elif schedule.horizon < T:
        raise ValueError("schedule horizon shorter than the run")
    ev_upto = np.array([schedule.count_upto(float(k)) for k in range(T)], dtype=np.int64)
    perm = np.arange(env0.n_sites, dtype=np.int64)
    axis_of, sign_of = _direction_arrays(env0.d)
    path, max_exc, status = drivers.quenched_window_walk(
        _marks_cdf(env0.marks),
        perm,
        schedule.a_flat,
        schedule.b_flat,
        ev_upto,
        T,
        env0.half,
        axis_of,
        sign_of,
        _numba_seed(seeds.step),
    )
    if status != drivers.STATUS_OK:
        done = len(path) - 1
        need = required_buffer(env0.d, T, gamma, float(T), DEFAULT_DELTA_TRUNC)
        raise BufferBreachError(
            f"walker left the window after {done} steps (max excursion {max_exc}, "
            f"half-width {env0.half}); size the window with radius {T} plus buffer {need}"
        )
    return WalkSample(
        positions=path,
        environment_seed=seeds.environment,
        step_seed=seeds.step,
        gamma=gamma,
        T=T,
        driver="window",
        max_excursion=int(max_exc),
    )


def annealed_window(
    mu: MuDistribution,
    d: int,
    T: int,
    gamma: float,
    seed: int,
    delta_trunc: float = DEFAULT_DELTA_TRUNC,
    radius: int | None = None,
    buffer: int | None = None,
) -> EnvironmentWindow:
    """Fresh product-law window sized for a T-step quenched run."""
    r = T if radius is None else radius
    w = required_buffer(d, r, gamma, float(T), delta_trunc) if buffer is None else buffer
    return window_from_iid(mu, d, r, w, seed)


def run_annealed(
    mu: MuDistribution,
    d: int,
    gamma: float,
    T: int,
    seeds: WalkSeeds,
    driver: str = "window",
    delta_trunc: float = DEFAULT_DELTA_TRUNC,
    radius: int | None = None,
    buffer: int | None = None,
    site_cap: int = DEFAULT_SITE_CAP,
) -> WalkSample:
    """Walk on a fresh product-law environment.

    driver="window" draws the buffered box and delegates to run_quenched;
    driver="lazy" reveals marks on demand and stirs only the revealed set.
    """
    if driver == "window":
        env0 = window_from_iid(mu, d, radius if radius is not None else T,
                               buffer if buffer is not None else
                               required_buffer(d, T, gamma, float(T), delta_trunc),
                               seeds.environment)
        return run_quenched(env0, gamma, T, seeds)
    if driver != "lazy":
        raise ValueError(f"unknown driver {driver!r}")
    return _run_annealed_lazy(mu, d, gamma, T, seeds, delta_trunc, site_cap)


def _run_annealed_lazy(
    mu: MuDistribution,
    d: int,
    gamma: float,
    T: int,
    seeds: WalkSeeds,
    delta_trunc: float,
    site_cap: int,
) -> WalkSample:
    if not mu.is_atomic:
        raise ValueError("the lazy driver needs an atomic law")
    margin = stir_margin(d, gamma, float(T), T + 1, delta_trunc)
    cap = T + margin
    sides = np.full(d, 2 * cap + 1, dtype=np.int64)
    n_cells = int(np.prod(sides + 2))
    if n_cells > site_cap:
        raise ResourceCapError(
            f"lazy driver needs {n_cells:.3e} occupancy cells (> cap {site_cap:.3e}); "
            "lower T or delta_trunc, or raise site_cap"
        )
    occ, padded_strides = _padded_occupancy(sides)
    dir_strides = direction_strides(d, padded_strides)
    start = int(np.full(d, cap + 1, dtype=np.int64) @ padded_strides)
    atom_cdf = np.cumsum(np.asarray(mu.weights))
    atom_cdf[-1] = 1.0
    dir_cdf = _marks_cdf(mu.atom_matrix())
    # one jitted stream serves reveals, steps and stirring; fold both seeds in
    folded = np.random.SeedSequence(
        [int(seeds.environment) & (2**64 - 1), int(seeds.step) & (2**64 - 1)]
    ).generate_state(1)[0]
    path_flat, m, status = drivers.lazy_annealed_walk(
        occ, T, float(gamma), atom_cdf, dir_cdf, dir_strides, start, _numba_seed(int(folded))
    )
    if status != drivers.STATUS_OK:
        raise BufferBreachError(
            f"certified travel margin {margin} breached (status {status}); "
            "this has probability below delta_trunc -- rerun with a smaller delta_trunc"
        )
    rem = path_flat.copy()
    coords = np.empty((len(path_flat), d), dtype=np.int64)
    for a in range(d - 1, -1, -1):
        side = int(sides[a]) + 2
        coords[:, a] = rem % side - 1 - cap
        rem //= side
    return WalkSample(
        positions=coords,
        environment_seed=seeds.environment,
        step_seed=seeds.step,
        gamma=gamma,
        T=T,
        driver="lazy",
        tracked_marks=int(m),
    )


def run_infinite_gamma(mu: MuDistribution, d: int, T: int, seed: int) -> WalkSample:
    """Baseline with a fresh vector every step (environment refreshed)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    if mu.is_atomic:
        ids = rng.choice(len(mu.atoms), size=T, p=np.asarray(mu.weights))
        rows = _marks_cdf(mu.atom_matrix())[ids]
    else:
        rows = _marks_cdf(mu.sample_vectors(rng, T))
    u = rng.random(T)
    slots = np.sum(rows <= u[:, None], axis=1)
    np.minimum(slots, 2 * d - 1, out=slots)
    steps = direction_matrix(d)[slots]
    positions = np.vstack([np.zeros(d, dtype=np.int64), np.cumsum(steps, axis=0)])
    return WalkSample(
        positions=positions,
        environment_seed=int(seed),
        step_seed=int(seed),
        gamma=math.inf,
        T=T,
        driver="iid",
    )


def project(sample: WalkSample, frame: ProjectionFrame) -> np.ndarray:
    """Scalar path <X_k, direction> for k = 0..T."""
    return sample.positions @ frame.direction


__all__ = [
    "DEFAULT_DELTA_TRUNC",
    "DEFAULT_SITE_CAP",
    "BufferBreachError",
    "ResourceCapError",
    "WalkSeeds",
    "ProjectionFrame",
    "WalkSample",
    "projection_frame",
    "step",
    "run_quenched",
    "run_annealed",
    "annealed_window",
    "run_infinite_gamma",
    "project",
]
