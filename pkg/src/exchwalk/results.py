"""Result containers, interval statistics and deterministic writers.

Outputs are a pure function of (config, master seed): floats are printed
with repr-faithful %.17g, keys are sorted, and wall-clock never enters the
canonical CSV/JSON (it travels in a sidecar).  Files are written to a
temporary name and renamed, so a failed run leaves nothing partial behind.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

RESULT_SCHEMA_VERSION = 1
Z99 = 2.5758293035489004  # two-sided 99% normal quantile

CSV_COLUMNS = ("gamma", "L", "a", "J", "t", "statistic", "value", "ci_lo", "ci_hi", "n")


def normal_ci(mean: float, sd: float, n: int, z: float = Z99) -> tuple[float, float]:
    if n <= 1:
        return (math.nan, math.nan)
    half = z * sd / math.sqrt(n)
    return (mean - half, mean + half)


def wilson_interval(k: int, n: int, z: float = Z99) -> tuple[float, float]:
    """Score interval for a proportion; well behaved at k = 0 and k = n."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass(frozen=True)
class Stat:
    statistic: str
    value: float
    ci_lo: Optional[float] = None
    ci_hi: Optional[float] = None
    n: Optional[int] = None


@dataclass(frozen=True)
class Cell:
    labels: dict  # subset of {gamma, L, a, J, t}
    stats: tuple[Stat, ...]


@dataclass
class ExperimentResult:
    kind: str
    config: dict  # resolved echo, defaults filled
    seed: int
    cells: list[Cell]
    wall_clock: float = 0.0  # sidecar only, never serialized canonically
    schema_version: int = RESULT_SCHEMA_VERSION


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def result_csv_text(result: ExperimentResult) -> str:
    lines = [
        f"# exchwalk-results schema_version={result.schema_version} kind={result.kind}",
        ",".join(CSV_COLUMNS),
    ]
    for cell in result.cells:
        base = [_fmt(cell.labels.get(key)) for key in ("gamma", "L", "a", "J", "t")]
        for st in cell.stats:
            lines.append(
                ",".join(
                    base
                    + [st.statistic, _fmt(st.value), _fmt(st.ci_lo), _fmt(st.ci_hi), _fmt(st.n)]
                )
            )
    return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def result_json_text(result: ExperimentResult) -> str:
    doc = {
        "schema_version": result.schema_version,
        "kind": result.kind,
        "master_seed": result.seed,
        "config": _jsonable(result.config),
        "cells": [
            {
                "labels": _jsonable(cell.labels),
                "stats": [
                    {
                        "statistic": st.statistic,
                        "value": _jsonable(st.value),
                        "ci_lo": _jsonable(st.ci_lo),
                        "ci_hi": _jsonable(st.ci_hi),
                        "n": st.n,
                    }
                    for st in cell.stats
                ],
            }
            for cell in result.cells
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_result(result: ExperimentResult, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        atomic_write_text(csv_path, result_csv_text(result))
    if json_path is not None:
        atomic_write_text(json_path, result_json_text(result))


__all__ = [
    "RESULT_SCHEMA_VERSION",
    "Z99",
    "CSV_COLUMNS",
    "Stat",
    "Cell",
    "ExperimentResult",
    "normal_ci",
    "wilson_interval",
    "result_csv_text",
    "result_json_text",
    "atomic_write_text",
    "write_result",
]
