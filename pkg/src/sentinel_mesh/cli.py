"""Command-line front end: run, validate, trace.

Exit codes: 0 on success, 1 when the scenario fails to parse or validate,
2 on I/O errors.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .scenario import load_scenario, validate
from .sim import run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentinel-mesh",
        description="Deterministic secure-data-collection simulator for sensor meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario and print its report")
    run_p.add_argument("--scenario", required=True, help="path to a scenario file")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario's seed")
    run_p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    run_p.add_argument("--out", default=None, help="write the report here instead of stdout")

    val_p = sub.add_parser("validate", help="check a scenario without running it")
    val_p.add_argument("--scenario", required=True)

    trace_p = sub.add_parser("trace", help="run a scenario and emit protocol transcript lines")
    trace_p.add_argument("--scenario", required=True)
    trace_p.add_argument("--seed", type=int, default=None)
    trace_p.add_argument("--out", default=None)

    return parser


def _emit(text: str, out_path: str | None) -> int:
    if out_path is None:
        sys.stdout.write(text)
        return 0
    try:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as exc:
        print(f"error: cannot write {out_path}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        violations = validate(scenario)
        if violations:
            for violation in violations:
                print(violation)
            return 1
        print("OK")
        return 0

    if getattr(args, "seed", None) is not None:
        scenario.seed = args.seed
    try:
        report = run(scenario)
    except ConfigError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1

    if args.command == "trace":
        return _emit("\n".join(report.trace) + "\n", args.out)

    if args.format == "json":
        text = report.render_json()
    elif args.format == "csv":
        text = report.render_csv()
    else:
        text = report.render_text()
    return _emit(text, args.out)


if __name__ == "__main__":
    sys.exit(main())
