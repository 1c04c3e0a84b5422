"""Command-line front door: validate, replay, export, serve.

Exit codes follow the usual convention — 0 success, 1 the operation ran
but found a problem (validation errors, scenario divergence), 2 the
input could not be used at all.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from . import document
from .clock import ScaledWallClock, VirtualClock, WallClock
from .eventlog import FileEventStore, export_csv, export_xes, read_file_entries
from .scenario import ScenarioError, load_scenario, run_scenario
from .validation import validate


def _print_findings(findings, stream) -> None:
    for f in findings:
        print(f"  {f.severity:<7} [{f.code}] {f.where}: {f.message}",
              file=stream)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        text = Path(args.path).read_text()
    except OSError as exc:
        print(f"cannot read {args.path}: {exc}", file=sys.stderr)
        return 2
    try:
        definition = document.parse(text)
    except document.DocumentError as exc:
        print(f"FAIL {args.path}: {exc}", file=sys.stderr)
        return 1
    report = validate(definition)
    if report.errors:
        print(f"FAIL {args.path}: {len(report.errors)} error(s)")
        _print_findings(report.errors, sys.stdout)
    if report.warnings:
        print(f"{len(report.warnings)} warning(s)")
        _print_findings(report.warnings, sys.stdout)
    if report.is_deployable:
        print(f"OK {args.path}: {definition.id} "
              f"({len(definition.tasks)} tasks, {len(definition.edges)} edges)")
        return 0
    return 1


def cmd_run_scenario(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.path)
    except ScenarioError as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 2
    result = run_scenario(scenario, trace=args.trace, out=sys.stdout)
    if result.passed:
        print(f"PASS {scenario.title} "
              f"({result.event_count} events, "
              f"{result.scene_transitions} scene transitions, "
              f"{result.elapsed:.3f}s)")
        return 0
    print(f"FAIL {scenario.title}")
    for failure in result.failures:
        print(f"  {failure}")
    return 1


def cmd_export(args: argparse.Namespace) -> int:
    try:
        entries = list(read_file_entries(args.log))
    except OSError as exc:
        print(f"cannot read {args.log}: {exc}", file=sys.stderr)
        return 2
    out_path = Path(args.out)
    if args.format == "csv":
        with out_path.open("w", newline="") as fp:
            count = export_csv(entries, fp)
    else:
        with out_path.open("wb") as fp:
            count = export_xes(entries, fp)
    print(f"wrote {count} event(s) to {out_path}")
    return 0


def cmd_fixture(args: argparse.Namespace) -> int:
    names = {"chest-pain": "chest_pain.json"}
    filename = names.get(args.name)
    if filename is None:
        print(f"unknown fixture {args.name!r}; have: {', '.join(sorted(names))}",
              file=sys.stderr)
        return 2
    text = resources.files("careflow.fixtures").joinpath(filename).read_text()
    print(text, end="")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .runtime import Runtime
    from .server import create_app

    if args.test_mode:
        clock = VirtualClock()
    elif args.time_scale != 1.0:
        clock = ScaledWallClock(args.time_scale)
    else:
        clock = WallClock()

    store = FileEventStore(args.store) if args.store else None
    rt = Runtime(store=store, clock=clock, emr_auto=not args.no_emr_sim)
    try:
        for path in args.deploy or ():
            deployment = rt.deploy_document(Path(path).read_text())
            print(f"deployed {deployment.definition.id} "
                  f"v{deployment.version} from {path}")
        if not args.test_mode:
            rt.start_ticker()
        app = create_app(rt)
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    finally:
        rt.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="careflow",
        description="Clinical-guideline enactment: validate definitions, "
                    "replay scenarios, export logs, run the console API.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a guideline document")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run-scenario", help="replay a scripted case")
    p.add_argument("path")
    p.add_argument("--trace", action="store_true",
                   help="print every event while replaying")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("export", help="convert a stored event log")
    p.add_argument("--log", required=True, help="event log file")
    p.add_argument("--format", choices=("csv", "xes"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP console")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--store", help="persist events to this file")
    p.add_argument("--test-mode", action="store_true",
                   help="virtual clock, adjustable via /v1/time/advance")
    p.add_argument("--time-scale", type=float, default=1.0,
                   help="wall-clock speedup factor (ignored in test mode)")
    p.add_argument("--deploy", action="append", metavar="FILE",
                   help="guideline document to deploy at startup (repeatable)")
    p.add_argument("--no-emr-sim", action="store_true",
                   help="do not auto-answer lab orders")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fixture", help="print a bundled guideline document")
    p.add_argument("name")
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
