#!/usr/bin/env python3
"""Run the density-concentration experiment and render its log-tail figure.

Usage: python scripts/run_concentration.py [outdir] [--seed S] [--workers N]
"""

import pathlib
import subprocess
import sys

HERE = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    args = sys.argv[1:]
    out = args.pop(0) if args and not args[0].startswith("-") else "runs/concentration"
    cmd = [
        sys.executable, "-m", "exchwalk.cli", "experiment", "concentration",
        "--config", str(HERE / "configs" / "concentration_tail.json"),
        "--out", out, *args,
    ]
    print("+", " ".join(cmd), file=sys.stderr)
    rc = subprocess.call(cmd)
    if rc != 0:
        return rc
    try:
        from exchwalk_plots.render import FigureSpec, render

        render(FigureSpec(kind="concentration", inputs=(f"{out}/concentration.csv",),
                          out=f"{out}/concentration.png"))
        print(f"{out}/concentration.png", file=sys.stderr)
    except ImportError:
        print("exchwalk-plots not installed; skipping the figure", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
