"""`render` command: regenerate the figure set from a run/sweep directory."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURES, render_all


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render SVG figures from simulator CSV output")
    parser.add_argument("--run-dir", required=True,
                        help="directory holding traces.csv / bode_*.csv")
    parser.add_argument("--out", required=True, help="output directory for SVGs")
    parser.add_argument("--figs", default=None,
                        help=f"comma list of figure ids (default: all of "
                             f"{','.join(FIGURES)})")
    args = parser.parse_args(argv)
    figs = [f.strip() for f in args.figs.split(",") if f.strip()] if args.figs else None
    try:
        written = render_all(args.run_dir, args.out, figs)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    if not written:
        print("error: no figure could be rendered (no inputs found)", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
