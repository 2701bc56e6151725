"""Command-line driver: check, graph, run.

Exit codes: 0 clean, 1 compile/validation diagnostics, 2 runtime failure.
Partial sink files are removed when a run fails.
"""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from . import compiler, engine
from .errors import Error
from .evtio import read_csv, read_evt
from .parser import parse_program


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="seqflow",
        description="Compile and run dataflow programs over timestamped "
                    "channel data (.hny source files, .evt/.csv datasets).")
    sub = ap.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="parse, compile and validate a program")
    p_check.add_argument("program")
    p_check.add_argument("--mode", choices=("streaming", "static", "realtime"),
                         default="streaming")

    p_graph = sub.add_parser("graph", help="export the compiled flow graph as DOT")
    p_graph.add_argument("program")
    p_graph.add_argument("-o", "--output", default=None,
                         help="output path (default: stdout)")

    p_run = sub.add_parser("run", help="execute a program")
    p_run.add_argument("program")
    p_run.add_argument("--mode", choices=("streaming", "static", "realtime"),
                       default="streaming")
    p_run.add_argument("--input", default=None,
                       help="';'-separated dataset paths (overrides the "
                            "program's configured input)")
    p_run.add_argument("--output", default=None,
                       help="default output path (overrides the program's "
                            "configured output)")
    p_run.add_argument("--max-pending", type=int, default=engine.Limits.max_pending,
                       help="pending-event cap for recursive programs")
    p_run.add_argument("--max-depth", type=int,
                       default=compiler.DEFAULT_MAX_UNROLL_DEPTH,
                       help="compile-time call unrolling depth cap")
    p_run.add_argument("--instrument", action="store_true",
                       help="track per-node buffer occupancy")
    p_run.add_argument("--pre-sort", action="store_true",
                       help="sort unordered input by time (static mode only)")
    return ap


def _load(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_program(fh.read(), path)


def _print_diags(diags) -> bool:
    """Print diagnostics to stderr; return True if any is an error."""
    failed = False
    for d in diags:
        print(str(d), file=sys.stderr)
        failed = failed or d.is_error
    return failed


def cmd_check(args) -> int:
    try:
        statements = _load(args.program)
        graph = compiler.compile_program(statements, args.program)
    except (Error, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if _print_diags(compiler.validate(graph, args.mode)):
        return 1
    print(f"{args.program}: ok ({len(graph.nodes)} nodes, {len(graph.pipes)} pipes)")
    return 0


def cmd_graph(args) -> int:
    try:
        statements = _load(args.program)
        graph = compiler.compile_program(statements, args.program)
    except (Error, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    dot = compiler.export_dot(graph)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(dot)
    else:
        sys.stdout.write(dot)
    return 0


def cmd_run(args) -> int:
    try:
        statements = _load(args.program)
        graph = compiler.compile_program(statements, args.program,
                                         max_unroll_depth=args.max_depth)
    except (Error, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    # command-line flags take precedence over the program's @data block
    if args.output:
        graph.config["output"] = args.output
    if args.input is not None:
        graph.config["input"] = args.input
    if _print_diags(compiler.validate(graph, args.mode)):
        return 1
    if args.pre_sort and args.mode != "static":
        print("--pre-sort is only available in static mode", file=sys.stderr)
        return 1

    sources = None
    if args.input is not None:
        sources = [p for p in args.input.split(";") if p]
    limits = engine.Limits(max_pending=args.max_pending)
    try:
        if args.mode == "static":
            if args.pre_sort:
                records = _read_all_unordered(sources, graph)
                report = engine.run_static(graph, output=args.output,
                                           instrument=args.instrument, limits=limits,
                                           pre_sorted_records=records)
            else:
                report = engine.run_static(graph, sources, output=args.output,
                                           instrument=args.instrument, limits=limits)
        elif args.mode == "realtime":
            report = engine.run_realtime(graph, sys.stdin, output=args.output,
                                         instrument=args.instrument, limits=limits)
        else:
            report = engine.run_streaming(graph, sources, output=args.output,
                                          instrument=args.instrument, limits=limits)
    except (Error, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    print(report.render())
    return 0


def _read_all_unordered(sources: Optional[List[str]], graph):
    """Load every input leniently and sort by time (stable)."""
    paths = sources
    if paths is None:
        paths = [p for p in graph.config.get("input", "").split(";") if p]
    records = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            reader = read_csv if path.endswith(".csv") else read_evt
            records.extend(reader(fh, source=path, require_order=False))
    records.sort(key=lambda r: r.time)
    return records


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_argparser().parse_args(argv)
    if args.command == "check":
        return cmd_check(args)
    if args.command == "graph":
        return cmd_graph(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
