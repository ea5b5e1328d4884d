"""Command-line entry point.

    dirac-blowup <subcommand> [--config PATH] [--out DIR] [--jobs N]

Exit status is 0 when every property check of the run passes, 1 when some
check fails and 2 on usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import SUBCOMMANDS, ParseError, ValidationError, parse_config
from .harness import run_experiment

OUT_ENV = "DIRAC_BLOWUP_OUT"
EXIT_OK, EXIT_PROPERTY, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("dirac_blowup")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirac-blowup",
        description="Self-similar profile experiments for massless nonlinear Dirac systems.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="flat key=value configuration file (defaults if omitted)")
    parser.add_argument(
        "--out",
        help=f"output directory (default: ${OUT_ENV}/<subcommand>, else ./runs/<subcommand>)",
    )
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for scans")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def default_out_dir(subcommand: str) -> str:
    return os.path.join(os.environ.get(OUT_ENV, "runs"), subcommand)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    text = ""
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
    try:
        cfg = parse_config(text)
        if "subcommand" in _keys(text) and cfg.subcommand != args.subcommand:
            raise ValidationError("subcommand", f"config says {cfg.subcommand!r}, command line says {args.subcommand!r}")
        cfg = parse_config(text, subcommand=args.subcommand)
    except (ParseError, ValidationError) as exc:
        where = f"{args.config}: " if args.config else ""
        print(f"error: {where}{exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or default_out_dir(args.subcommand)
    try:
        result = run_experiment(cfg, out, jobs=args.jobs)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    m = result.manifest
    for c in m["checks"]:
        log.info("%s %s %s %s -> %s", c["name"], c["value"], c["relation"], c["threshold"],
                 "pass" if c["passed"] else "FAIL")
    for err in m["errors"]:
        print(f"numerical failure: {err}", file=sys.stderr)
    if "summary_line" in m["summary"]:
        print(m["summary"]["summary_line"])
    status = "pass" if result.exit_status == EXIT_OK else "FAIL"
    print(f"{args.subcommand}: {len(m['checks'])} checks, {m['failures']} failures ({status}); output in {out}")
    return result.exit_status


def _keys(text: str) -> set:
    keys = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        if "=" in line:
            keys.add(line.split("=", 1)[0].strip())
    return keys


if __name__ == "__main__":
    sys.exit(main())
