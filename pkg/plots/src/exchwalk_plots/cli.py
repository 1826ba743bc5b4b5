"""exchwalk-plots render --kind <k> --in <csv...> --out <png/svg>."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exchwalk-plots", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("render", help="render one figure from result CSVs")
    pr.add_argument("--kind", required=True, choices=KINDS)
    pr.add_argument("--in", dest="inputs", required=True, nargs="+")
    pr.add_argument("--out", required=True)
    pr.add_argument("--logx", action="store_true")
    pr.add_argument("--logy", action="store_true")
    pr.add_argument("--title", default="")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        inputs=tuple(args.inputs),
        out=args.out,
        logx=args.logx,
        logy=args.logy,
        title=args.title,
    )
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
