#!/usr/bin/env python3
"""Run the velocity-vs-swap-rate sweep and render its figure.

Usage: python scripts/run_velocity_sweep.py [outdir] [--seed S] [--workers N]
Writes velocity.csv / velocity.json / config_echo.json to outdir (default
runs/velocity) and, when exchwalk-plots is installed, velocity.png next to
them.  Takes ~10-15 minutes at the default desk scale.
"""

import pathlib
import subprocess
import sys

HERE = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    args = sys.argv[1:]
    out = args.pop(0) if args and not args[0].startswith("-") else "runs/velocity"
    cmd = [
        sys.executable, "-m", "exchwalk.cli", "experiment", "velocity",
        "--config", str(HERE / "configs" / "velocity_sweep.json"),
        "--out", out, *args,
    ]
    print("+", " ".join(cmd), file=sys.stderr)
    rc = subprocess.call(cmd)
    if rc != 0:
        return rc
    try:
        from exchwalk_plots.render import FigureSpec, render

        render(FigureSpec(kind="velocity", inputs=(f"{out}/velocity.csv",),
                          out=f"{out}/velocity.png"))
        print(f"{out}/velocity.png", file=sys.stderr)
    except ImportError:
        print("exchwalk-plots not installed; skipping the figure", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
