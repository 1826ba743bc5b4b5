#!/usr/bin/env python3
"""Run the good-site persistence experiment (desk scale by default).

Usage: python scripts/run_persistence.py [outdir] [--reference] [--seed S] [--workers N]
--reference switches to the heavy L=64 instance (gamma t = 1.1 L^3, ~hours).
"""

import pathlib
import subprocess
import sys

HERE = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    args = sys.argv[1:]
    cfg = "persistence_desk.json"
    if "--reference" in args:
        args.remove("--reference")
        cfg = "persistence_reference.json"
    out = args.pop(0) if args and not args[0].startswith("-") else "runs/persistence"
    cmd = [
        sys.executable, "-m", "exchwalk.cli", "experiment", "persistence",
        "--config", str(HERE / "configs" / cfg),
        "--out", out, *args,
    ]
    print("+", " ".join(cmd), file=sys.stderr)
    rc = subprocess.call(cmd)
    if rc != 0:
        return rc
    try:
        from exchwalk_plots.render import FigureSpec, render

        render(FigureSpec(kind="persistence", inputs=(f"{out}/persistence.csv",),
                          out=f"{out}/persistence.png"))
        print(f"{out}/persistence.png", file=sys.stderr)
    except ImportError:
        print("exchwalk-plots not installed; skipping the figure", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
