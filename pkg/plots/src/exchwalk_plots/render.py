"""Deterministic figures from exchwalk result CSVs.

Figures read only the CSV contract (schema_version 1) and never recompute
statistics.  Rendering is a pure function of (CSV bytes, spec): fixed style,
fixed SVG hash salt, no timestamps or software tags in the output, so a
regenerated figure is byte-identical and diffable.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

SUPPORTED_SCHEMA = 1
RESULT_COLUMNS = ["gamma", "L", "a", "J", "t", "statistic", "value", "ci_lo", "ci_hi", "n"]

KINDS = ("velocity", "concentration", "persistence", "kernel-profile")

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "exchwalk-plots",
}


class SchemaError(ValueError):
    """Input file does not carry a recognised schema version."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    out: str
    logx: bool = False
    logy: bool = False
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        if not self.inputs:
            raise ValueError("need at least one input CSV")


def _parse_header(line: str, expected_prefix: str) -> dict:
    if not line.startswith("#"):
        raise SchemaError(
            f"missing header comment; expected schema_version={SUPPORTED_SCHEMA}"
        )
    fields = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            key, val = token.split("=", 1)
            fields[key] = val
    version = fields.get("schema_version")
    if version != str(SUPPORTED_SCHEMA):
        raise SchemaError(
            f"unsupported schema_version {version!r}; this tool reads version {SUPPORTED_SCHEMA}"
        )
    if expected_prefix and not line.lstrip("# ").startswith(expected_prefix):
        raise SchemaError(f"expected a {expected_prefix} file, got: {line.strip()}")
    return fields


def _maybe_float(s: str):
    if s == "":
        return None
    if s == "inf":
        return math.inf
    if s == "-inf":
        return -math.inf
    return float(s)


def load_result_rows(path: str) -> tuple[dict, list[dict]]:
    """Parse a results CSV into (header fields, row dicts)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise SchemaError("empty file, not a results CSV")
    header = _parse_header(lines[0], "exchwalk-results")
    if len(lines) < 2 or lines[1].split(",") != RESULT_COLUMNS:
        raise SchemaError(f"expected column row {','.join(RESULT_COLUMNS)}")
    rows = []
    for ln in lines[2:]:
        if not ln:
            continue
        parts = ln.split(",")
        row = dict(zip(RESULT_COLUMNS, parts))
        for key in ("gamma", "L", "a", "J", "t", "value", "ci_lo", "ci_hi"):
            row[key] = _maybe_float(row[key])
        rows.append(row)
    return header, rows


def _pick(rows, statistic, **labels):
    out = []
    for r in rows:
        if r["statistic"] != statistic:
            continue
        if all(r[k] == v for k, v in labels.items()):
            out.append(r)
    return out


def _render_velocity(ax, rows):
    drift_rows = _pick(rows, "annealed_drift_proj")
    cells = _pick(rows, "proj_mean")
    finite = sorted(
        (r for r in cells if r["gamma"] is not None and math.isfinite(r["gamma"])),
        key=lambda r: r["gamma"],
    )
    if finite:
        g = np.array([r["gamma"] for r in finite])
        y = np.array([r["value"] for r in finite])
        lo = np.array([r["ci_lo"] for r in finite], dtype=float)
        hi = np.array([r["ci_hi"] for r in finite], dtype=float)
        ax.fill_between(g, lo, hi, alpha=0.25, color="C0", label="99% CI")
        ax.plot(g, y, "o-", color="C0", label="empirical velocity")
        ax.set_xscale("log")
    inf_cells = [r for r in cells if r["gamma"] == math.inf]
    if inf_cells:
        ax.axhline(inf_cells[0]["value"], color="C2", ls=":", label="refresh-every-step cell")
    if drift_rows:
        ax.axhline(drift_rows[0]["value"], color="C1", ls="--", label="annealed drift")
    ax.set_xlabel("swap rate")
    ax.set_ylabel("projected velocity X_T / T")
    if finite or drift_rows:
        ax.legend(loc="lower right")


def _render_concentration(ax, rows):
    fit = _pick(rows, "fitted_c")
    cells = [r for r in _pick(rows, "exceed_freq") if r["a"] not in (None, 0.0) and r["value"] > 0]
    by_a: dict = {}
    for r in cells:
        by_a.setdefault(r["a"], []).append(r)
    for i, (a, group) in enumerate(sorted(by_a.items())):
        group = sorted(group, key=lambda r: r["L"])
        x = np.array([r["L"] for r in group])
        y = np.log(np.array([r["value"] for r in group]))
        ax.plot(x, y, "o", color=f"C{i}", label=f"a={a:g}")
        if fit:
            c_hat = fit[0]["value"]
            xs = np.linspace(x.min(), x.max(), 64)
            ax.plot(xs, math.log(2.0) - c_hat * a * a * xs, "-", color=f"C{i}", alpha=0.7)
    ax.set_xlabel("ball radius L (d=1: |B_L| ~ 2L)")
    ax.set_ylabel("log exceedance probability")
    if by_a:
        ax.legend()


def _render_persistence(ax, rows):
    cells = sorted(_pick(rows, "bad_freq"), key=lambda r: r["J"])
    if cells:
        x = np.array([r["J"] for r in cells])
        y = np.array([r["value"] for r in cells])
        lo = np.array([r["ci_lo"] for r in cells], dtype=float)
        hi = np.array([r["ci_hi"] for r in cells], dtype=float)
        ax.fill_between(x, lo, hi, alpha=0.25, color="C0")
        ax.plot(x, y, "o-", color="C0")
    ax.set_xlabel("target scale J")
    ax.set_ylabel("frequency of losing goodness")


def load_kernel_profile(path: str):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise SchemaError("empty file, not a kernel CSV")
    header = _parse_header(lines[0], "exchwalk-kernel")
    cols = lines[1].split(",") if len(lines) > 1 else []
    rows = []
    for ln in lines[2:]:
        if ln:
            rows.append([float(x) for x in ln.split(",")])
    return header, cols, rows


def _render_kernel_profile(ax, path):
    header, cols, rows = load_kernel_profile(path)
    d = int(header.get("d", "1"))
    gamma = float(header.get("gamma", "1"))
    t = float(header.get("t", "1"))
    # axis slice: all other coordinates zero
    pts = [(r[0], r[-1]) for r in rows if all(c == 0 for c in r[1:-1])] if d > 1 else [
        (r[0], r[1]) for r in rows
    ]
    pts.sort()
    if pts:
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        ax.plot(x, y, "o", ms=3, color="C0", label="lattice kernel")
        var = 2.0 * gamma * t  # per-coordinate variance of the walk
        xs = np.linspace(x.min(), x.max(), 256)
        g = np.exp(-(xs**2) / (2 * var)) / math.sqrt(2 * math.pi * var)
        if d > 1:
            g *= (2 * math.pi * var) ** (-(d - 1) / 2)
        ax.plot(xs, g, "-", color="C1", label="matched Gaussian")
        ax.legend()
    ax.set_xlabel("lattice coordinate along the first axis")
    ax.set_ylabel("probability")


def render(spec: FigureSpec) -> str:
    """Draw the figure and write it atomically; returns the output path."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            if spec.kind == "kernel-profile":
                _render_kernel_profile(ax, spec.inputs[0])
            else:
                rows: list[dict] = []
                for path in spec.inputs:
                    _, r = load_result_rows(path)
                    rows.extend(r)
                if spec.kind == "velocity":
                    _render_velocity(ax, rows)
                elif spec.kind == "concentration":
                    _render_concentration(ax, rows)
                elif spec.kind == "persistence":
                    _render_persistence(ax, rows)
            if spec.logx:
                ax.set_xscale("log")
            if spec.logy:
                ax.set_yscale("log")
            if spec.title:
                ax.set_title(spec.title)
            _save_deterministic(fig, spec.out)
        finally:
            plt.close(fig)
    return spec.out


def _save_deterministic(fig, out: str) -> None:
    ext = os.path.splitext(out)[1].lower()
    if ext not in (".png", ".svg"):
        raise ValueError(f"unsupported output format {ext!r}; use .png or .svg")
    metadata = {"Software": None} if ext == ".png" else {"Date": None}
    directory = os.path.dirname(os.path.abspath(out)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=ext)
    os.close(fd)
    try:
        fig.savefig(tmp, format=ext.lstrip("."), metadata=metadata)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


__all__ = ["FigureSpec", "SchemaError", "SUPPORTED_SCHEMA", "KINDS", "render", "load_result_rows"]
