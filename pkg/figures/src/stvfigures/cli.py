"""Command-line figure generation from indicator tables.

Inputs are given as `--csv [label=]path`, repeatable; the label names
the line group (a scheme, a tolerance level) and defaults to the
table's directory name.

Exit codes: 0 success, 2 malformed arguments or tables.
"""

from __future__ import annotations

import argparse
import sys

from .figures import FAMILIES, default_label, render_family
from .table import TableError


def _parse_input(arg: str):
    if "=" in arg:
        label, path = arg.split("=", 1)
        if label and path:
            return label, path
    return default_label(arg), arg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stvfigures",
        description="Render indicator figures from solver CSV tables.",
    )
    parser.add_argument(
        "--csv", action="append", required=True, metavar="[LABEL=]FILE",
        help="indicator table; repeat to overlay several runs",
    )
    parser.add_argument("--out", required=True, metavar="DIR", help="output directory")
    parser.add_argument(
        "--families", nargs="+", choices=sorted(FAMILIES), metavar="NAME",
        default=sorted(FAMILIES),
        help=f"figure families to render (default: all of {sorted(FAMILIES)})",
    )
    args = parser.parse_args(argv)

    inputs = tuple(_parse_input(a) for a in args.csv)
    try:
        for family in args.families:
            path = render_family(family, inputs, args.out)
            print(f"wrote {path}")
    except (TableError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
