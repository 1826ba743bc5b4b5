"""Command-line entry point.

Subcommands: simulate, kernel, experiment <kind>, schedule, validate-config.
Standard output carries machine-readable JSON only; progress goes to stderr.
Exit codes: 0 success, 2 config violation, 3 module precondition failure,
4 resource cap exceeded.  Seed precedence: --seed flag, then EXCHWALK_SEED,
then the config file, then 0.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from .env import InvalidSimplexError, WindowTruncationError, annealed_drift
from .experiments import (
    ConfigError,
    config_echo,
    parse_experiment_config,
    run_experiment,
)
from .interchange import ScheduleTooLargeError, StirBreachError
from .kernel import (
    build_table,
    check_crown_ordering,
    check_monotonicity,
    crown_error_sums,
    lclt_error,
    neighbor_difference_decay,
    truncation_radius,
)
from .lattice import box_coords
from .renorm import build_schedule, rung_inequality, zk_law
from .results import RESULT_SCHEMA_VERSION, atomic_write_text, write_result
from .walker import (
    BufferBreachError,
    ResourceCapError,
    WalkSeeds,
    project,
    projection_frame,
    run_annealed,
    run_infinite_gamma,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_RESOURCE = 4

_CONFIG_ERRORS = (ConfigError, json.JSONDecodeError)
_PRECONDITION_ERRORS = (
    InvalidSimplexError,
    WindowTruncationError,
    BufferBreachError,
    StirBreachError,
    ValueError,
)
_RESOURCE_ERRORS = (ScheduleTooLargeError, ResourceCapError)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit_error(exc: Exception, code: int) -> int:
    doc = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    print(json.dumps(doc, sort_keys=True))
    return code


def _seed_from(args, cfg_seed: int) -> int:
    if args.seed is not None:
        return args.seed
    env_seed = os.environ.get("EXCHWALK_SEED")
    if env_seed is not None:
        return int(env_seed)
    return cfg_seed


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _outdir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _cmd_validate_config(args) -> int:
    doc = _load_json(args.config)
    kind, cfg = parse_experiment_config(doc)
    echo = config_echo(kind, cfg)
    if args.out:
        out = _outdir(args.out)
        atomic_write_text(os.path.join(out, "config_echo.json"),
                          json.dumps(echo, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"valid": True, "kind": kind}, sort_keys=True))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    doc = _load_json(args.config)
    kind, cfg = parse_experiment_config(doc)
    seed = _seed_from(args, cfg.seed)
    overrides = {"seed": seed}
    if args.workers is not None:
        overrides["workers"] = args.workers
    cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    if args.kind and args.kind != kind:
        raise ConfigError(f"config kind {kind!r} does not match requested {args.kind!r}")
    out = _outdir(args.out)
    _log(f"running {kind} experiment, seed {seed}, workers {cfg.workers}")
    t0 = time.monotonic()
    result = run_experiment(kind, cfg)
    csv_path = os.path.join(out, f"{kind}.csv")
    json_path = os.path.join(out, f"{kind}.json")
    write_result(result, csv_path, json_path)
    atomic_write_text(
        os.path.join(out, "config_echo.json"),
        json.dumps(result.config, indent=2, sort_keys=True) + "\n",
    )
    atomic_write_text(
        os.path.join(out, "run_meta.json"),
        json.dumps({"wall_clock_seconds": time.monotonic() - t0}, sort_keys=True) + "\n",
    )
    _log(f"wrote {csv_path} and {json_path}")
    print(json.dumps({"kind": kind, "csv": csv_path, "json": json_path, "seed": seed},
                     sort_keys=True))
    return EXIT_OK


def _parse_simulate_config(doc: dict):
    allowed = {"d", "mu", "gamma", "T", "driver", "direction", "seed", "delta_trunc", "N"}
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown keys in simulate config: {sorted(extra)}")
    for key in ("d", "mu", "gamma", "T"):
        if key not in doc:
            raise ConfigError(f"simulate config missing {key!r}")
    return doc


def _cmd_simulate(args) -> int:
    doc = _parse_simulate_config(_load_json(args.config))
    from .experiments import _mu_from_doc

    mu = _mu_from_doc(doc["mu"])
    d = int(doc["d"])
    gamma = math.inf if doc["gamma"] in ("inf", "Infinity") else float(doc["gamma"])
    T = int(doc["T"])
    driver = doc.get("driver", "window")
    delta_trunc = float(doc.get("delta_trunc", 1e-9))
    seed = _seed_from(args, int(doc.get("seed", 0)))
    direction = doc.get("direction")
    drift = annealed_drift(mu)
    vec = (
        np.asarray(direction, dtype=np.float64)
        if direction is not None
        else drift / np.linalg.norm(drift)
    )
    frame = projection_frame(mu, vec)
    out = _outdir(args.out)
    if math.isinf(gamma):
        sample = run_infinite_gamma(mu, d, T, seed)
    else:
        sample = run_annealed(
            mu, d, gamma, T, WalkSeeds(seed, seed + 1), driver=driver, delta_trunc=delta_trunc
        )
    proj = project(sample, frame)
    lines = [
        f"# exchwalk-trajectory schema_version={RESULT_SCHEMA_VERSION}",
        ",".join(["k"] + [f"x_{a + 1}" for a in range(d)] + ["X_v"]),
    ]
    for k in range(T + 1):
        coords = [str(int(c)) for c in sample.positions[k]]
        lines.append(",".join([str(k)] + coords + [format(float(proj[k]), ".17g")]))
    traj_path = os.path.join(out, "trajectory.csv")
    atomic_write_text(traj_path, "\n".join(lines) + "\n")
    summary = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "config": {**doc, "seed": seed},
        "driver": sample.driver,
        "gamma": "inf" if math.isinf(gamma) else gamma,
        "T": T,
        "final_position": [int(c) for c in sample.positions[-1]],
        "empirical_velocity": [float(c) / T for c in sample.positions[-1]],
        "projected_velocity": float(proj[-1]) / T,
        "annealed_drift": [float(c) for c in drift],
        "seeds": {"environment": sample.environment_seed, "step": sample.step_seed},
    }
    json_path = os.path.join(out, "result.json")
    atomic_write_text(json_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"trajectory": traj_path, "result": json_path}, sort_keys=True))
    return EXIT_OK


def _cmd_kernel(args) -> int:
    d, gamma, t = args.d, args.gamma, args.t
    if args.table:
        r = args.r_trunc if args.r_trunc is not None else truncation_radius(gamma, t)
        tab = build_table(d, gamma, t, r_trunc=r)
        coords = box_coords(d, r)
        lines = [
            f"# exchwalk-kernel schema_version={RESULT_SCHEMA_VERSION} d={d} gamma={gamma!r} t={t!r} r_trunc={r}",
            ",".join([f"x_{a + 1}" for a in range(d)] + ["value"]),
        ]
        vals = tab.values.ravel()
        for row, v in zip(coords, vals):
            lines.append(",".join([str(int(c)) for c in row] + [format(float(v), ".17g")]))
        atomic_write_text(args.table, "\n".join(lines) + "\n")
        _log(f"wrote kernel table ({len(vals)} sites) to {args.table}")
    if args.checks:
        r_check = args.r_check
        grid = []
        for scale in (1.0, 4.0, 16.0):  # boundedness of scaled ratios across gamma t
            tt = t * scale
            grid.append(
                {
                    "gamma_t": gamma * tt,
                    "lclt": dataclasses.asdict(lclt_error(d, gamma, tt, r_check)),
                    "neighbor_decay": dataclasses.asdict(neighbor_difference_decay(d, gamma, tt)),
                    "crown_sums": dataclasses.asdict(
                        crown_error_sums(d, gamma, tt, args.M, args.L, args.eps_exponent)
                    ),
                }
            )
        report = {
            "schema_version": RESULT_SCHEMA_VERSION,
            "d": d,
            "gamma": gamma,
            "t": t,
            "monotonicity_worst": check_monotonicity(d, gamma, t, args.M, r_check),
            "crown_ordering_worst": check_crown_ordering(d, gamma, t, args.M, r_check),
            "grid": grid,
        }
        atomic_write_text(args.checks, json.dumps(report, indent=2, sort_keys=True) + "\n")
        _log(f"wrote check report to {args.checks}")
    if not args.table and not args.checks:
        raise ConfigError("kernel: nothing to do; pass --table and/or --checks")
    print(json.dumps({"table": args.table, "checks": args.checks}, sort_keys=True))
    return EXIT_OK


def _cmd_schedule(args) -> int:
    sched = build_schedule(args.T, args.t, args.epsilon, args.v)
    rungs = []
    for n in range(sched.depth):
        t_n = sched.times[n]
        phi = t_n ** (1.0 / 100.0)
        law = zk_law(t_n, sched.c_lower[n], phi, kind="lower")
        rep = rung_inequality(t_n, sched.c_lower[n + 1], law)
        rungs.append(
            {
                "n": n,
                "t_n": t_n,
                "c_n": sched.c_lower[n],
                "c_next": sched.c_lower[n + 1],
                "law_mean": law.mean,
                "lhs": rep.lhs,
                "rhs": rep.rhs,
                "passes": rep.passes,
            }
        )
    doc = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "T": sched.T,
        "t": sched.t,
        "epsilon": sched.epsilon,
        "v": sched.v,
        "times": list(sched.times),
        "c_lower": list(sched.c_lower),
        "c_upper": list(sched.c_upper),
        "rungs": rungs,
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(json.dumps({"out": args.out}, sort_keys=True))
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exchwalk", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("validate-config", help="strictly parse an experiment config")
    pv.add_argument("--config", required=True)
    pv.add_argument("--out", default=None)
    pv.set_defaults(fn=_cmd_validate_config)

    pe = sub.add_parser("experiment", help="run an experiment from a config file")
    pe.add_argument("kind", nargs="?", default=None,
                    help="optional kind check against the config")
    pe.add_argument("--config", required=True)
    pe.add_argument("--out", required=True)
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("--workers", type=int, default=None)
    pe.set_defaults(fn=_cmd_experiment)

    ps = sub.add_parser("simulate", help="run one walk and dump its trajectory")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--seed", type=int, default=None)
    ps.set_defaults(fn=_cmd_simulate)

    pk = sub.add_parser("kernel", help="tabulate the kernel and run its checks")
    pk.add_argument("--d", type=int, required=True)
    pk.add_argument("--gamma", type=float, required=True)
    pk.add_argument("--t", type=float, required=True)
    pk.add_argument("--table", default=None)
    pk.add_argument("--checks", default=None)
    pk.add_argument("--M", type=int, default=0, help="ball radius for averaged checks")
    pk.add_argument("--L", type=int, default=3, help="inner radius for crown sums")
    pk.add_argument("--r-check", type=int, default=20)
    pk.add_argument("--r-trunc", type=int, default=None)
    pk.add_argument("--eps-exponent", type=float, default=0.05)
    pk.set_defaults(fn=_cmd_kernel)

    pc = sub.add_parser("schedule", help="build a squared-time ladder and its rung laws")
    pc.add_argument("--T", type=int, required=True)
    pc.add_argument("--t", type=int, required=True)
    pc.add_argument("--epsilon", type=float, required=True)
    pc.add_argument("--v", type=float, required=True)
    pc.add_argument("--out", default=None)
    pc.set_defaults(fn=_cmd_schedule)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _CONFIG_ERRORS as exc:
        return _emit_error(exc, EXIT_CONFIG)
    except FileNotFoundError as exc:
        return _emit_error(exc, EXIT_CONFIG)
    except _RESOURCE_ERRORS as exc:
        return _emit_error(exc, EXIT_RESOURCE)
    except _PRECONDITION_ERRORS as exc:
        return _emit_error(exc, EXIT_PRECONDITION)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
