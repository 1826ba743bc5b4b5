"""Static environment domain: transition vectors, their law, types, densities.

A transition vector assigns a jump probability to each of the 2d signed
lattice directions.  The environment is one vector per site; the law mu of
a single vector is atomic (list of weighted vectors) or, optionally, given
by a sampler.  Types are the dyadic discretisation of vectors at a chosen
resolution; all density bookkeeping runs on types.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .lattice import ball_offsets, box_site_count, crown_indices_of, direction_indices

SIMPLEX_TOL = 1e-12

MU_SPEC_SCHEMA_VERSION = 1


class InvalidSimplexError(ValueError):
    """Entries outside [0,1] or sum away from 1 beyond tolerance."""


class WindowTruncationError(RuntimeError):
    """A ball or kernel support does not fit inside the window."""


@dataclass(frozen=True)
class TransitionVector:
    """Point of the 2d-simplex, stored in canonical direction order.

    probs[slot] is the probability of stepping along the direction at
    that slot of (-d..-1, 1..d).
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)  # own copy; frozen below
        if p.ndim != 1 or p.size % 2 != 0 or p.size == 0:
            raise InvalidSimplexError(f"need a flat array of 2d entries, got shape {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise InvalidSimplexError("entries must lie in [0, 1]")
        s = math.fsum(p.tolist())
        if abs(s - 1.0) > SIMPLEX_TOL:
            raise InvalidSimplexError(f"entries sum to {s!r}, not 1 within {SIMPLEX_TOL}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def d(self) -> int:
        return self.probs.size // 2

    def prob(self, j: int) -> float:
        """Probability of direction j in (-d..-1, 1..d)."""
        d = self.d
        slot = d + j if j < 0 else d + j - 1
        if j == 0 or not 0 <= slot < 2 * d:
            raise ValueError(f"direction {j} invalid for d={d}")
        return float(self.probs[slot])

    @staticmethod
    def from_direction_probs(d: int, mapping: dict[int, float]) -> "TransitionVector":
        p = np.zeros(2 * d)
        for j, q in mapping.items():
            slot = d + j if j < 0 else d + j - 1
            p[slot] = q
        return TransitionVector(p)

    @staticmethod
    def point_mass(j: int, d: int) -> "TransitionVector":
        return TransitionVector.from_direction_probs(d, {j: 1.0})


def renormalized(probs: np.ndarray) -> TransitionVector:
    """Explicitly rescale nonnegative weights onto the simplex."""
    p = np.asarray(probs, dtype=np.float64)
    s = p.sum()
    if s <= 0:
        raise InvalidSimplexError("cannot renormalize nonpositive mass")
    return TransitionVector(p / s)


def drift(s: TransitionVector) -> np.ndarray:
    """Expected one-step displacement sum_j s_j e_j; coordinate a is s_a - s_{-a}."""
    d = s.d
    pos = s.probs[d:]
    neg = s.probs[:d][::-1]  # slot d-1 is direction -1
    return pos - neg


@dataclass(frozen=True)
class MuDistribution:
    """Law of a single transition vector.

    Atomic form: vectors with positive weights summing to 1.  A continuous
    law is carried as a named sampler; everything that needs exact type
    probabilities then has to be given an explicit sample budget.
    """

    atoms: tuple[TransitionVector, ...] = ()
    weights: tuple[float, ...] = ()
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    sampler_tag: str = ""

    def __post_init__(self):
        if self.is_atomic:
            if len(self.atoms) != len(self.weights) or not self.atoms:
                raise ValueError("atoms and weights must be nonempty and aligned")
            if any(w <= 0 for w in self.weights):
                raise ValueError("weights must be positive")
            s = math.fsum(self.weights)
            if abs(s - 1.0) > SIMPLEX_TOL:
                raise ValueError(f"weights sum to {s!r}, not 1 within {SIMPLEX_TOL}")
            d = self.atoms[0].d
            if any(a.d != d for a in self.atoms):
                raise ValueError("all atoms must share the same dimension")
        elif self.sampler is None:
            raise ValueError("need atoms or a sampler")

    @property
    def is_atomic(self) -> bool:
        return len(self.atoms) > 0

    @property
    def d(self) -> int:
        if self.is_atomic:
            return self.atoms[0].d
        raise ValueError("dimension of a sampler-backed law is not stored; ask the sampler")

    def atom_matrix(self) -> np.ndarray:
        """(n_atoms, 2d) array of atom probabilities."""
        return np.stack([a.probs for a in self.atoms])

    def sample_vectors(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """(n, 2d) array of fresh vectors."""
        if self.is_atomic:
            idx = rng.choice(len(self.atoms), size=n, p=np.asarray(self.weights))
            return self.atom_matrix()[idx]
        return self.sampler(rng, n)

    def sample_atom_ids(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if not self.is_atomic:
            raise ValueError("atom ids only exist for atomic laws")
        return rng.choice(len(self.atoms), size=n, p=np.asarray(self.weights)).astype(np.int32)


def two_atom_mu(p_right_a: float, p_right_b: float, w_a: float) -> MuDistribution:
    """Convenience d=1 two-atom law; atom x steps right with prob p_right_x."""
    a = TransitionVector(np.array([1.0 - p_right_a, p_right_a]))
    b = TransitionVector(np.array([1.0 - p_right_b, p_right_b]))
    return MuDistribution(atoms=(a, b), weights=(w_a, 1.0 - w_a))


def annealed_drift(mu: MuDistribution) -> np.ndarray:
    """Weight-averaged drift of an atomic law, compensated per coordinate."""
    if not mu.is_atomic:
        raise ValueError("annealed_drift needs an atomic law; use annealed_drift_estimate")
    d = mu.d
    out = np.empty(d)
    for a in range(d):
        out[a] = math.fsum(w * float(drift(atom)[a]) for atom, w in zip(mu.atoms, mu.weights))
    return out


def annealed_drift_estimate(
    mu: MuDistribution, n_samples: int, seed: int, z: float = 2.5758293035489004
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo drift estimate with a CI halfwidth, for sampler-backed laws."""
    rng = np.random.default_rng(seed)
    vecs = mu.sample_vectors(rng, n_samples)
    d = vecs.shape[1] // 2
    drifts = vecs[:, d:] - vecs[:, :d][:, ::-1]
    mean = drifts.mean(axis=0)
    half = z * drifts.std(axis=0, ddof=1) / math.sqrt(n_samples)
    return mean, half


@dataclass(frozen=True)
class TypeIndex:
    """Dyadic cell of a transition vector at resolution N."""

    coords: tuple[int, ...]
    resolution: int

    def __post_init__(self):
        top = (1 << self.resolution) - 1
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if any(not 0 <= c <= top for c in self.coords):
            raise ValueError(f"type coordinates must lie in 0..{top}")

    def coarsen(self) -> "TypeIndex":
        """The type at resolution N-1 determined by this one (indices halve)."""
        if self.resolution == 1:
            raise ValueError("cannot coarsen below resolution 1")
        return TypeIndex(tuple(c >> 1 for c in self.coords), self.resolution - 1)


def type_coords(probs: np.ndarray, resolution: int) -> tuple[int, ...]:
    scale = 1 << resolution
    top = scale - 1
    return tuple(min(int(math.floor(p * scale)), top) for p in probs)


def type_of(s: TransitionVector, resolution: int) -> TypeIndex:
    """Per-coordinate floor of 2^N s_i, with s_i = 1 landing on the top cell."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    return TypeIndex(type_coords(s.probs, resolution), resolution)


def type_probabilities(mu: MuDistribution, resolution: int) -> dict[tuple[int, ...], float]:
    """Exact mass per type for an atomic law; values sum to 1."""
    if not mu.is_atomic:
        raise ValueError("exact type probabilities need an atomic law")
    buckets: dict[tuple[int, ...], list[float]] = {}
    for atom, w in zip(mu.atoms, mu.weights):
        buckets.setdefault(type_coords(atom.probs, resolution), []).append(w)
    return {k: math.fsum(ws) for k, ws in sorted(buckets.items())}


def type_probabilities_estimate(
    mu: MuDistribution, resolution: int, n_samples: int, seed: int
) -> dict[tuple[int, ...], float]:
    """Sampled type frequencies with a declared budget, for sampler-backed laws."""
    rng = np.random.default_rng(seed)
    vecs = mu.sample_vectors(rng, n_samples)
    buckets: dict[tuple[int, ...], int] = {}
    for row in vecs:
        k = type_coords(row, resolution)
        buckets[k] = buckets.get(k, 0) + 1
    return {k: c / n_samples for k, c in sorted(buckets.items())}


@dataclass
class ToleranceSchedule:
    """Density tolerance per radius and acceptable-trap scale per radius."""

    @staticmethod
    def epsilon(L: int) -> float:
        if L < 1:
            raise ValueError("radius must be >= 1")
        return 1.0 / (1.0 + math.log(L))

    @staticmethod
    def phi(L: float) -> float:
        if L < 1:
            raise ValueError("scale must be >= 1")
        return L ** (1.0 / 100.0)


class SiteClass(Enum):
    GOOD = "good"
    BAD = "bad"
    WINDOW_TRUNCATED = "window-truncated"


@dataclass(frozen=True)
class EnvironmentWindow:
    """Finite box of per-site transition vectors around an origin offset.

    The box has L-inf radius radius + buffer around origin; sites are stored
    row-major.  atom_ids mirrors marks when the law is atomic (-1 otherwise)
    so simulators can move small integers instead of rows.
    """

    d: int
    radius: int
    buffer: int
    marks: np.ndarray  # (n_sites, 2d) float64
    origin: tuple[int, ...] = None  # type: ignore[assignment]
    atom_ids: Optional[np.ndarray] = None  # (n_sites,) int32

    def __post_init__(self):
        if self.origin is None:
            object.__setattr__(self, "origin", (0,) * self.d)
        n = box_site_count(self.d, self.half)
        if self.marks.shape != (n, 2 * self.d):
            raise ValueError(
                f"marks shape {self.marks.shape} does not match box ({n}, {2 * self.d})"
            )
        if self.atom_ids is not None and self.atom_ids.shape != (n,):
            raise ValueError("atom_ids must have one entry per site")
        self.marks.setflags(write=False)
        if self.atom_ids is not None:
            self.atom_ids.setflags(write=False)

    @property
    def half(self) -> int:
        return self.radius + self.buffer

    @property
    def n_sites(self) -> int:
        return self.marks.shape[0]

    @property
    def side(self) -> int:
        return 2 * self.half + 1

    def site_index(self, x) -> int:
        """Row-major flat index of absolute site x; raises if outside."""
        idx = 0
        for a in range(self.d):
            c = int(x[a]) - self.origin[a] + self.half
            if not 0 <= c < self.side:
                raise WindowTruncationError(f"site {tuple(x)} outside window")
            idx = idx * self.side + c
        return idx

    def site_indices(self, xs: np.ndarray) -> np.ndarray:
        """Vectorised site_index over an (n, d) array of absolute sites."""
        rel = xs - np.asarray(self.origin) + self.half
        if np.any(rel < 0) or np.any(rel >= self.side):
            raise WindowTruncationError("some sites fall outside the window")
        flat = np.zeros(len(rel), dtype=np.int64)
        for a in range(self.d):
            flat = flat * self.side + rel[:, a]
        return flat

    def vector_at(self, x) -> TransitionVector:
        return TransitionVector(self.marks[self.site_index(x)].copy())

    def contains_ball(self, x, L: int) -> bool:
        return all(
            abs(int(x[a]) - self.origin[a]) + L <= self.half for a in range(self.d)
        )

    def content_hash(self) -> str:
        """Hash of the multiset of marks; invariant under any swap."""
        order = np.lexsort(self.marks.T[::-1])
        return hashlib.sha256(np.ascontiguousarray(self.marks[order]).tobytes()).hexdigest()

    def type_ids(self, resolution: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
        """Dense per-site type codes plus the legend of type coordinates."""
        scaled = np.floor(self.marks * (1 << resolution)).astype(np.int64)
        np.minimum(scaled, (1 << resolution) - 1, out=scaled)
        legend_arr, codes = np.unique(scaled, axis=0, return_inverse=True)
        legend = [tuple(int(c) for c in row) for row in legend_arr]
        return codes.astype(np.int64), legend


def window_from_iid(
    mu: MuDistribution,
    d: int,
    radius: int,
    buffer: int,
    seed,
    origin: tuple[int, ...] | None = None,
) -> EnvironmentWindow:
    """Fresh window with independent mu marks on every site."""
    rng = np.random.default_rng(seed)
    n = box_site_count(d, radius + buffer)
    if mu.is_atomic:
        ids = mu.sample_atom_ids(rng, n)
        marks = mu.atom_matrix()[ids]
        return EnvironmentWindow(d, radius, buffer, marks, origin, ids)
    return EnvironmentWindow(d, radius, buffer, mu.sample_vectors(rng, n), origin)


def window_from_vectors(
    d: int, radius: int, buffer: int, vectors, origin=None, atom_ids=None
) -> EnvironmentWindow:
    marks = np.array([np.asarray(v.probs if isinstance(v, TransitionVector) else v) for v in vectors])
    ids = None if atom_ids is None else np.asarray(atom_ids, dtype=np.int32)
    return EnvironmentWindow(d, radius, buffer, marks, origin, ids)


def empirical_density(env: EnvironmentWindow, x, L: int, k: TypeIndex) -> float:
    """Fraction of sites of type k in the Euclidean ball of radius L around x."""
    if not env.contains_ball(x, L):
        raise WindowTruncationError(
            f"ball of radius {L} around {tuple(x)} exits the window; enlarge the buffer"
        )
    offs = ball_offsets(env.d, L)
    sites = env.site_indices(np.asarray(x, dtype=np.int64) + offs)
    scale = 1 << k.resolution
    top = scale - 1
    cells = np.minimum(np.floor(env.marks[sites] * scale).astype(np.int64), top)
    hits = np.all(cells == np.asarray(k.coords, dtype=np.int64), axis=1)
    return float(np.count_nonzero(hits)) / len(offs)


def _density_profile(env, x, L, L_max, resolution):
    """Counts per type code for every ball radius L..L_max around x (incremental)."""
    offs = ball_offsets(env.d, L_max)
    crowns = crown_indices_of(offs)
    sites = env.site_indices(np.asarray(x, dtype=np.int64) + offs)
    codes, legend = env.type_ids(resolution)
    site_codes = codes[sites]
    n_types = len(legend)
    counts = np.zeros(n_types, dtype=np.int64)
    inner = crowns <= L
    np.add.at(counts, site_codes[inner], 1)
    size = int(np.count_nonzero(inner))
    yield L, size, counts, legend
    for Lp in range(L + 1, L_max + 1):
        ring = crowns == Lp
        np.add.at(counts, site_codes[ring], 1)
        size += int(np.count_nonzero(ring))
        yield Lp, size, counts, legend


def is_good(
    env: EnvironmentWindow,
    x,
    L: int,
    L_max: int,
    resolution: int,
    pk: dict[tuple[int, ...], float],
    tolerance: float | None = None,
) -> SiteClass:
    """Classify x against the density tolerance at scale L.

    Good means every ball radius in [L, L_max] has all type densities within
    epsilon(L) of their theoretical mass (tolerance overrides epsilon(L) when
    given; enlarging it never turns good into bad).  A definite violation
    inside the feasible radius is BAD even if L_max itself does not fit; if
    every feasible check passes but L_max exceeds the window, the verdict is
    WINDOW_TRUNCATED.
    """
    if L < 1 or L_max < L:
        raise ValueError("need 1 <= L <= L_max")
    feasible = L_max
    while feasible >= L and not env.contains_ball(x, feasible):
        feasible -= 1
    if feasible < L:
        return SiteClass.WINDOW_TRUNCATED
    eps = ToleranceSchedule.epsilon(L) if tolerance is None else tolerance
    verdict = SiteClass.GOOD if feasible == L_max else SiteClass.WINDOW_TRUNCATED
    for _, size, counts, legend in _density_profile(env, x, L, feasible, resolution):
        dens = counts / size
        seen = dict(zip(legend, dens))
        for k in set(seen) | set(pk):
            if abs(seen.get(k, 0.0) - pk.get(k, 0.0)) > eps:
                return SiteClass.BAD
    return verdict


def load_mu_spec(path) -> tuple[MuDistribution, int, int]:
    """Read a mu specification file; returns (mu, d, resolution).

    Schema (version 1): {"schema_version": 1, "d": int, "N": int,
    "atoms": [{"probs": [2d reals], "weight": real}, ...]}.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != MU_SPEC_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported mu spec schema_version {doc.get('schema_version')!r}; "
            f"expected {MU_SPEC_SCHEMA_VERSION}"
        )
    extra = set(doc) - {"schema_version", "d", "N", "atoms"}
    if extra:
        raise ValueError(f"unknown keys in mu spec: {sorted(extra)}")
    d = int(doc["d"])
    atoms, weights = [], []
    for entry in doc["atoms"]:
        bad = set(entry) - {"probs", "weight"}
        if bad:
            raise ValueError(f"unknown keys in mu atom: {sorted(bad)}")
        probs = np.asarray(entry["probs"], dtype=np.float64)
        if probs.size != 2 * d:
            raise ValueError(f"atom has {probs.size} entries, expected {2 * d}")
        atoms.append(TransitionVector(probs))
        weights.append(float(entry["weight"]))
    mu = MuDistribution(atoms=tuple(atoms), weights=tuple(weights))
    return mu, d, int(doc["N"])


def dump_mu_spec(mu: MuDistribution, d: int, resolution: int, path) -> None:
    doc = {
        "schema_version": MU_SPEC_SCHEMA_VERSION,
        "d": d,
        "N": resolution,
        "atoms": [
            {"probs": [float(p) for p in a.probs], "weight": float(w)}
            for a, w in zip(mu.atoms, mu.weights)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = [
    "SIMPLEX_TOL",
    "InvalidSimplexError",
    "WindowTruncationError",
    "TransitionVector",
    "MuDistribution",
    "TypeIndex",
    "ToleranceSchedule",
    "SiteClass",
    "EnvironmentWindow",
    "drift",
    "annealed_drift",
    "annealed_drift_estimate",
    "type_of",
    "type_probabilities",
    "type_probabilities_estimate",
    "empirical_density",
    "is_good",
    "two_atom_mu",
    "renormalized",
    "window_from_iid",
    "window_from_vectors",
    "load_mu_spec",
    "dump_mu_spec",
]
