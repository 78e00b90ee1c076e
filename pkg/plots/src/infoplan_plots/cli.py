"""Entry points: plot_curve <in.csv> <out.png>, plot_table <in.csv> <out.png>.

Exit codes: 0 on success, 2 on schema violations, 1 on other errors.
"""
from __future__ import annotations

import argparse
import sys

from .curves import SchemaError, render_curve, render_table


def _run(render, kind: str, argv=None) -> int:
    parser = argparse.ArgumentParser(description=f"Render a {kind} figure from a CSV.")
    parser.add_argument("csv_in", help="input CSV path")
    parser.add_argument("png_out", help="output PNG path")
    args = parser.parse_args(argv)
    try:
        out = render(args.csv_in, args.png_out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


def curve_main(argv=None) -> int:
    return _run(render_curve, "learning-curve", argv)


def table_main(argv=None) -> int:
    return _run(render_table, "aggregate bar", argv)


if __name__ == "__main__":
    sys.exit(curve_main())
