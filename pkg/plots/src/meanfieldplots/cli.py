"""`render` command: one figure from one CSV file."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def _parse_groups(text: str | None) -> tuple[int, ...] | None:
    if not text:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise SchemaError("--groups must be a comma-separated integer list")


def run(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render a figure from a simulator CSV file"
    )
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_path", required=True, help="input CSV")
    parser.add_argument("--out", dest="output_path", required=True, help="output image")
    parser.add_argument("--eta", type=float, default=-0.7,
                        help="default level drawn in trajectory figures")
    parser.add_argument("--groups", default=None,
                        help="comma-separated group sizes for trajectory shading")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        input_path=args.input_path,
        output_path=args.output_path,
        eta=args.eta,
        group_sizes=_parse_groups(args.groups),
        dpi=args.dpi,
    )
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
