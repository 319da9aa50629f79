"""Command line interface: ``nehari <command> --config FILE [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .commands import run_command
from .config import COMMANDS, load_config
from .errors import ConfigurationError, NehariError
from .report import emit_reports, format_float

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nehari",
        description="Extremal parameter and two-branch positive solutions of a fractional "
                    "Kirchhoff concave-convex problem on an interval.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="64-bit seed for all random starts (overrides the config)")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory for report.json and CSV files (default: .)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _headline(command: str, results: dict) -> list[str]:
    lines = []
    ext = results.get("extremal", results if command == "extremal" else None)
    if ext and "lambda_star" in ext:
        lines.append(f"lambda_star = {format_float(ext['lambda_star'])}")
    if command == "lambda-of-u":
        value = results.get("lambda_of_u")
        lines.append("lambda_of_u = " + ("undefined (direction in C-)" if value is None
                                         else format_float(value)))
    if command == "fibering":
        proj = results["projection"]
        roots = ", ".join(f"{k} = {format_float(v)}" for k, v in proj.items()
                          if k != "branch" and v is not None)
        lines.append(f"projection: {proj['branch']}" + (f" ({roots})" if roots else ""))
    for sol in results.get("solutions", []):
        lines.append(f"{sol['branch']:>6}  lambda = {format_float(sol['lambda'])}  "
                     f"energy = {sol['energy']:.10g}  residual = {sol['residual_norm']:.3e}")
    if command == "check":
        lines.append(f"checks passed: {results['passed']}, failed: {results['failed']}")
        lines += [f"  FAIL {c['name']}: {c['value']:.3e} (tol {c['tolerance']:.1e})"
                  for c in results["checks"] if not c["pass"]]
    return lines


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be in [0, 2^64)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, command=args.command, seed=args.seed,
                          output_dir=args.out)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_command(cfg)
        manifest = emit_reports(report, cfg.output_dir)
    except NehariError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for line in _headline(cfg.command, report.results):
        print(line)
    print(f"wrote report.json and {len(manifest)} file(s) to {cfg.output_dir}")
    return EXIT_OK if report.ok else EXIT_FAILED_CHECKS


if __name__ == "__main__":
    sys.exit(main())
