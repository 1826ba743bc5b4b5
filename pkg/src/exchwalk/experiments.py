"""Experiment drivers: velocity sweeps, concentration tails, good-site persistence.

Every experiment is a pure function of (config, master seed): replica seeds
are derived from the master seed and cell/replica indices, replicas may run
in a process pool, and aggregation only ever sees the replica-indexed
arrays, so the emitted CSV/JSON bytes are reproducible run to run.
"""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .env import (
    EnvironmentWindow,
    MuDistribution,
    SiteClass,
    TransitionVector,
    TypeIndex,
    annealed_drift,
    is_good,
    type_of,
    type_probabilities,
    window_from_iid,
)
from .interchange import (
    BoxGeometry,
    evolve_perm,
    required_buffer,
    sample_schedule_pooled,
    stir_sites,
)
from .kernel import exact_mean, truncation_radius
from .lattice import ball_offsets, box_coords
from .results import Cell, ExperimentResult, Stat, Z99, normal_ci, wilson_interval
from .walker import WalkSeeds, project, projection_frame, run_annealed, run_infinite_gamma

_M64 = 2**64 - 1


class ConfigError(ValueError):
    """Config rejected by strict parsing or validation."""


def derive_seeds(master: int, *tags: int, n: int = 2) -> list[int]:
    ss = np.random.SeedSequence([int(master) & _M64] + [int(t) & _M64 for t in tags])
    return [int(x) for x in ss.generate_state(n, dtype=np.uint64)]


def _mu_from_doc(doc) -> MuDistribution:
    if not isinstance(doc, dict) or set(doc) != {"atoms"}:
        raise ConfigError('mu must be {"atoms": [{"probs": [...], "weight": w}, ...]}')
    atoms, weights = [], []
    for entry in doc["atoms"]:
        if set(entry) != {"probs", "weight"}:
            raise ConfigError(f"unknown keys in mu atom: {sorted(set(entry) - {'probs', 'weight'})}")
        atoms.append(TransitionVector(np.asarray(entry["probs"], dtype=np.float64)))
        weights.append(float(entry["weight"]))
    return MuDistribution(atoms=tuple(atoms), weights=tuple(weights))


def _mu_to_doc(mu: MuDistribution) -> dict:
    return {
        "atoms": [
            {"probs": [float(p) for p in a.probs], "weight": float(w)}
            for a, w in zip(mu.atoms, mu.weights)
        ]
    }


def _from_dict(cls, doc: dict, kind: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown keys in {kind} config: {sorted(extra)}")
    missing = {
        f.name
        for f in dataclasses.fields(cls)
        if f.default is dataclasses.MISSING
        and f.default_factory is dataclasses.MISSING
        and f.name not in doc
    }
    if missing:
        raise ConfigError(f"missing keys in {kind} config: {sorted(missing)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} config: {exc}") from exc


@dataclass(frozen=True)
class VelocityConfig:
    d: int
    mu: dict
    T: int
    replicas: int
    gammas: tuple[float, ...]
    seed: int = 0
    resolution: int = 8
    include_infinite: bool = True
    epsilon: float = 0.05
    direction: tuple[float, ...] | None = None
    driver: str = "lazy"
    delta_trunc: float = 1e-9
    workers: int = 0

    def mu_dist(self) -> MuDistribution:
        return _mu_from_doc(self.mu)

    def validate(self) -> None:
        if self.T < 1 or self.replicas < 1:
            raise ConfigError("T and replicas must be >= 1")
        if not self.gammas and not self.include_infinite:
            raise ConfigError("need at least one gamma or the infinite baseline")
        if any(g <= 0 for g in self.gammas):
            raise ConfigError("gammas must be positive")
        if self.driver not in ("lazy", "window"):
            raise ConfigError(f"unknown driver {self.driver!r}")
        mu = self.mu_dist()
        if mu.d != self.d:
            raise ConfigError("mu dimension does not match d")
        if float(np.linalg.norm(annealed_drift(mu))) == 0.0:
            raise ConfigError(
                "annealed drift is zero; these experiments assume a nonzero drift"
            )


@dataclass(frozen=True)
class ConcentrationConfig:
    d: int
    mu: dict
    gamma: float
    t: float
    radii: tuple[int, ...]
    thresholds: tuple[float, ...]
    replicas: int
    seed: int = 0
    resolution: int = 8
    type_coords: tuple[int, ...] | None = None
    delta_trunc: float = 1e-9
    workers: int = 0

    def mu_dist(self) -> MuDistribution:
        return _mu_from_doc(self.mu)

    def validate(self) -> None:
        if self.gamma <= 0 or self.t < 0:
            raise ConfigError("gamma must be positive and t >= 0")
        if not self.radii or any(L < 1 for L in self.radii):
            raise ConfigError("radii must be >= 1")
        if any(a < 0 for a in self.thresholds):
            raise ConfigError("thresholds must be >= 0")
        if self.mu_dist().d != self.d:
            raise ConfigError("mu dimension does not match d")

    def type_index(self) -> TypeIndex:
        if self.type_coords is not None:
            return TypeIndex(tuple(int(c) for c in self.type_coords), self.resolution)
        return type_of(self.mu_dist().atoms[0], self.resolution)


@dataclass(frozen=True)
class PersistenceConfig:
    d: int
    mu: dict
    gamma: float
    t: float
    L: int
    J_grid: tuple[int, ...]
    replicas: int
    seed: int = 0
    resolution: int = 4
    L_max: int | None = None
    rejection_cap: int = 100_000
    workers: int = 0

    def mu_dist(self) -> MuDistribution:
        return _mu_from_doc(self.mu)

    @property
    def check_radius(self) -> int:
        return self.L_max if self.L_max is not None else 2 * self.L

    def validate(self) -> None:
        if self.gamma * self.t <= float(self.L) ** 3:
            raise ConfigError(
                f"gamma*t = {self.gamma * self.t:g} must exceed L^3 = {self.L ** 3}"
            )
        if not self.J_grid or max(self.J_grid) >= self.L:
            raise ConfigError("every J must satisfy J < L")
        if min(self.J_grid) < 1:
            raise ConfigError("J must be >= 1")
        if self.check_radius < self.L:
            raise ConfigError("L_max must be >= L")
        if self.mu_dist().d != self.d:
            raise ConfigError("mu dimension does not match d")


CONFIG_KINDS = {
    "velocity": VelocityConfig,
    "concentration": ConcentrationConfig,
    "persistence": PersistenceConfig,
}


def parse_experiment_config(doc: dict):
    """Strictly parse {"kind": ..., **fields}; returns (kind, config)."""
    if "kind" not in doc:
        raise ConfigError('config needs a "kind" key')
    kind = doc["kind"]
    if kind not in CONFIG_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {sorted(CONFIG_KINDS)}")
    body = {k: v for k, v in doc.items() if k != "kind"}
    for key in ("gammas", "radii", "thresholds", "J_grid", "direction", "type_coords"):
        if key in body and isinstance(body[key], list):
            body[key] = tuple(body[key])
    cfg = _from_dict(CONFIG_KINDS[kind], body, kind)
    cfg.validate()
    return kind, cfg


def config_echo(kind: str, cfg) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["kind"] = kind
    return doc


def _map_jobs(fn, jobs, workers: int):
    if workers and workers > 1 and len(jobs) > 1:
        chunk = max(1, len(jobs) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs, chunksize=chunk))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------------------
# velocity sweep


def _velocity_replica(job):
    (mu, d, gamma, T, env_seed, step_seed, driver, delta_trunc, drift_vec, direction) = job
    if math.isinf(gamma):
        sample = run_infinite_gamma(mu, d, T, env_seed)
    else:
        sample = run_annealed(
            mu, d, gamma, T, WalkSeeds(env_seed, step_seed), driver=driver, delta_trunc=delta_trunc
        )
    v_T = sample.positions[-1] / T
    dist = float(np.linalg.norm(v_T - drift_vec))
    proj = float(v_T @ direction)
    tracked = sample.tracked_marks if sample.tracked_marks is not None else -1
    return proj, dist, tracked


def velocity_sweep(cfg: VelocityConfig) -> ExperimentResult:
    """Empirical velocity against the annealed drift, per swap rate.

    Every cell reports the replica mean and 99% CI of the projected velocity
    X_T^v / T, of the distance ||X_T/T - drift||, and the frequency of
    landing inside the epsilon-ball around the drift.
    """
    cfg.validate()
    t0 = time.monotonic()
    mu = cfg.mu_dist()
    drift_vec = annealed_drift(mu)
    direction = (
        np.asarray(cfg.direction, dtype=np.float64)
        if cfg.direction is not None
        else drift_vec / np.linalg.norm(drift_vec)
    )
    frame = projection_frame(mu, direction)
    gammas: list[float] = list(cfg.gammas) + ([math.inf] if cfg.include_infinite else [])
    cells = [
        Cell(
            labels={},
            stats=(
                Stat("annealed_drift_proj", frame.v),
                Stat("annealed_drift_norm", float(np.linalg.norm(drift_vec))),
                Stat("tied_components", float(frame.has_tied_components)),
            ),
        )
    ]
    for ci, gamma in enumerate(gammas):
        jobs = []
        for r in range(cfg.replicas):
            env_seed, step_seed = derive_seeds(cfg.seed, 1, ci, r)
            jobs.append(
                (mu, cfg.d, gamma, cfg.T, env_seed, step_seed, cfg.driver, cfg.delta_trunc,
                 drift_vec, direction)
            )
        out = _map_jobs(_velocity_replica, jobs, cfg.workers)
        proj = np.array([o[0] for o in out])
        dist = np.array([o[1] for o in out])
        tracked = np.array([o[2] for o in out], dtype=np.float64)
        n = len(out)
        in_ball = int(np.count_nonzero(dist <= cfg.epsilon))
        w_lo, w_hi = wilson_interval(in_ball, n)
        p_lo, p_hi = normal_ci(proj.mean(), proj.std(ddof=1) if n > 1 else 0.0, n)
        d_lo, d_hi = normal_ci(dist.mean(), dist.std(ddof=1) if n > 1 else 0.0, n)
        stats = [
            Stat("proj_mean", float(proj.mean()), p_lo, p_hi, n),
            Stat("proj_sd", float(proj.std(ddof=1)) if n > 1 else 0.0, n=n),
            Stat("dist_mean", float(dist.mean()), d_lo, d_hi, n),
            Stat("dist_sd", float(dist.std(ddof=1)) if n > 1 else 0.0, n=n),
            Stat("in_ball_freq", in_ball / n, w_lo, w_hi, n),
        ]
        if np.all(tracked >= 0):
            stats.append(Stat("tracked_mean", float(tracked.mean()), n=n))
        cells.append(Cell(labels={"gamma": gamma}, stats=tuple(stats)))
    return ExperimentResult(
        kind="velocity",
        config=config_echo("velocity", cfg),
        seed=cfg.seed,
        cells=cells,
        wall_clock=time.monotonic() - t0,
    )


# ---------------------------------------------------------------------------
# concentration tail


def _concentration_chunk(job):
    (d, half, indicator, sites_per_L, gamma, t, seeds, exact_values) = job
    geom = BoxGeometry(d, (-half,) * d, (half,) * d)
    n_sites = geom.n_sites
    devs = np.empty((len(seeds), len(sites_per_L)))
    for i, seed in enumerate(seeds):
        sched = sample_schedule_pooled(geom, gamma, t, seed)
        perm = np.arange(n_sites, dtype=np.int64)
        evolve_perm(sched, perm, 0, t)
        for j, sites in enumerate(sites_per_L):
            devs[i, j] = abs(float(indicator[perm[sites]].mean()) - exact_values[j])
    return devs


def concentration_tail(cfg: ConcentrationConfig) -> ExperimentResult:
    """Tail of the ball density around its exact expectation, per (L, a).

    One fixed start configuration per run; replicas are independent stirring
    histories.  Exceedance counts share one sample set across the threshold
    grid, so the estimated tail is monotone in a by construction.
    """
    cfg.validate()
    t0 = time.monotonic()
    mu = cfg.mu_dist()
    k = cfg.type_index()
    L_max = max(cfg.radii)
    w_dyn = required_buffer(cfg.d, L_max, cfg.gamma, cfg.t, cfg.delta_trunc)
    w_mass = truncation_radius(cfg.gamma, cfg.t, 1e-10)
    half = L_max + max(w_dyn, w_mass)
    env_seed = derive_seeds(cfg.seed, 2, 0, n=1)[0]
    env = window_from_iid(mu, cfg.d, L_max, half - L_max, env_seed)
    atom_types = [type_of(a, cfg.resolution).coords for a in mu.atoms]
    indicator = np.array([1.0 if atom_types[i] == k.coords else 0.0 for i in env.atom_ids.astype(int)])
    exact_values = []
    sites_per_L = []
    for L in cfg.radii:
        exact_values.append(exact_mean(env, cfg.gamma, cfg.t, L, k).value)
        sites_per_L.append(env.site_indices(ball_offsets(cfg.d, L)))
    seeds = [derive_seeds(cfg.seed, 2, 1 + r, n=1)[0] for r in range(cfg.replicas)]
    n_chunks = max(1, (cfg.workers or 1) * 4) if cfg.workers else 1
    chunk_size = max(1, math.ceil(len(seeds) / n_chunks))
    jobs = [
        (
            cfg.d,
            env.half,
            indicator,
            sites_per_L,
            cfg.gamma,
            cfg.t,
            seeds[i : i + chunk_size],
            exact_values,
        )
        for i in range(0, len(seeds), chunk_size)
    ]
    devs = np.vstack(_map_jobs(_concentration_chunk, jobs, cfg.workers))
    cells = []
    xs, ys = [], []
    for j, L in enumerate(cfg.radii):
        n = devs.shape[0]
        cells.append(
            Cell(
                labels={"L": L, "t": cfg.t, "gamma": cfg.gamma},
                stats=(
                    Stat("exact_mean", exact_values[j]),
                    Stat("mc_mean_abs_dev", float(devs[:, j].mean()), n=n),
                    Stat("mc_sd", float(devs[:, j].std(ddof=1)), n=n),
                ),
            )
        )
        for a in cfg.thresholds:
            exceed = int(np.count_nonzero(devs[:, j] >= a))
            lo, hi = wilson_interval(exceed, n)
            stats = [Stat("exceed_freq", exceed / n, lo, hi, n)]
            if exceed == 0:
                stats.append(Stat("exceed_upper99", hi, n=n))
            elif a > 0:  # a = 0 is out of model (the bound is vacuous there)
                xs.append(a * a * L**cfg.d)
                ys.append(math.log(exceed / n))
            cells.append(Cell(labels={"L": L, "a": a, "t": cfg.t, "gamma": cfg.gamma}, stats=tuple(stats)))
    if xs:
        x = np.asarray(xs)
        y = np.asarray(ys)
        # one-parameter fit log p = log 2 - c_hat * a^2 L^d
        resid0 = math.log(2.0) - y
        c_hat = float((x @ resid0) / (x @ x)) if float(x @ x) > 0 else math.nan
        pred = math.log(2.0) - c_hat * x
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
        cells.append(
            Cell(
                labels={"gamma": cfg.gamma, "t": cfg.t},
                stats=(
                    Stat("fitted_c", c_hat, n=len(xs)),
                    Stat("fit_r2", r2, n=len(xs)),
                ),
            )
        )
    return ExperimentResult(
        kind="concentration",
        config=config_echo("concentration", cfg),
        seed=cfg.seed,
        cells=cells,
        wall_clock=time.monotonic() - t0,
    )


# ---------------------------------------------------------------------------
# good-site persistence


def _persistence_replica(job):
    (mu, cfg_d, resolution, L, check_radius, gamma, t, pk, rejection_cap, seed) = job
    rng = np.random.default_rng(np.random.SeedSequence([seed & _M64, 11]))
    env = None
    attempts = 0
    while attempts < rejection_cap:
        attempts += 1
        env = window_from_iid(mu, cfg_d, check_radius, 0, rng)
        if is_good(env, (0,) * cfg_d, L, check_radius, resolution, pk) is SiteClass.GOOD:
            break
        env = None
    if env is None:
        return None, attempts
    coords = box_coords(cfg_d, check_radius)
    origins = stir_sites(coords, gamma, t, seed=int(rng.integers(0, 2**31)))
    half = check_radius
    inside = np.all(np.abs(origins) <= half, axis=1)
    marks_t = np.empty_like(env.marks)
    if np.any(inside):
        flat = env.site_indices(origins[inside])
        marks_t[inside] = env.marks[flat]
    n_out = int(np.count_nonzero(~inside))
    if n_out:
        marks_t[~inside] = mu.sample_vectors(rng, n_out)
    env_t = EnvironmentWindow(cfg_d, check_radius, 0, marks_t)
    return env_t, attempts


def goodsite_persistence(cfg: PersistenceConfig) -> ExperimentResult:
    """Does a good origin stay good?  Frequency of turning J-bad after time t.

    Start configurations are product-law draws conditioned (by rejection) on
    the origin being L-good up to the check radius; the configuration at time
    t is sampled exactly by tracing each needed site back through the
    stirring.  Goodness at both ends is capped at the same check radius.
    """
    cfg.validate()
    t0 = time.monotonic()
    mu = cfg.mu_dist()
    pk = type_probabilities(mu, cfg.resolution)
    jobs = [
        (
            mu,
            cfg.d,
            cfg.resolution,
            cfg.L,
            cfg.check_radius,
            cfg.gamma,
            cfg.t,
            pk,
            cfg.rejection_cap,
            derive_seeds(cfg.seed, 3, r, n=1)[0],
        )
        for r in range(cfg.replicas)
    ]
    out = _map_jobs(_persistence_replica, jobs, cfg.workers)
    attempts = np.array([o[1] for o in out])
    envs = [o[0] for o in out]
    infeasible = sum(1 for e in envs if e is None)
    cells = [
        Cell(
            labels={"gamma": cfg.gamma, "t": cfg.t, "L": cfg.L},
            stats=(
                Stat("rejection_attempts_mean", float(attempts.mean()), n=len(attempts)),
                Stat("rejection_infeasible", float(infeasible), n=len(envs)),
            ),
        )
    ]
    usable = [e for e in envs if e is not None]
    for J in cfg.J_grid:
        if not usable:
            cells.append(
                Cell(labels={"J": J, "gamma": cfg.gamma, "t": cfg.t, "L": cfg.L},
                     stats=(Stat("cell_infeasible", 1.0),))
            )
            continue
        bad = sum(
            1
            for e in usable
            if is_good(e, (0,) * cfg.d, J, cfg.check_radius, cfg.resolution, pk) is SiteClass.BAD
        )
        n = len(usable)
        lo, hi = wilson_interval(bad, n)
        cells.append(
            Cell(
                labels={"J": J, "gamma": cfg.gamma, "t": cfg.t, "L": cfg.L},
                stats=(Stat("bad_freq", bad / n, lo, hi, n),),
            )
        )
    return ExperimentResult(
        kind="persistence",
        config=config_echo("persistence", cfg),
        seed=cfg.seed,
        cells=cells,
        wall_clock=time.monotonic() - t0,
    )


def run_experiment(kind: str, cfg) -> ExperimentResult:
    if kind == "velocity":
        return velocity_sweep(cfg)
    if kind == "concentration":
        return concentration_tail(cfg)
    if kind == "persistence":
        return goodsite_persistence(cfg)
    raise ConfigError(f"unknown experiment kind {kind!r}")


__all__ = [
    "ConfigError",
    "VelocityConfig",
    "ConcentrationConfig",
    "PersistenceConfig",
    "CONFIG_KINDS",
    "parse_experiment_config",
    "config_echo",
    "derive_seeds",
    "velocity_sweep",
    "concentration_tail",
    "goodsite_persistence",
    "run_experiment",
]
