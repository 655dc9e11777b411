"""kpzreport command line: render one figure from an experiment CSV."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FIGURE_KINDS, FigureSpec, SchemaMismatch, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kpzreport", description=__doc__)
    ap.add_argument("--kind", choices=FIGURE_KINDS, required=True)
    ap.add_argument("--input", action="append", required=True,
                    help="input CSV (repeatable)")
    ap.add_argument("--output", type=Path, required=True)
    ap.add_argument("--manifest", type=Path, default=None,
                    help="manifest.json of the producing run (hash stamp)")
    ap.add_argument("--title", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(inputs=args.input, kind=args.kind, output=args.output,
                      manifest=args.manifest, title=args.title)
    try:
        path = render(spec)
    except (SchemaMismatch, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
