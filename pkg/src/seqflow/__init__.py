"""seqflow: a dataflow language toolchain for asynchronous, non-uniformly
sampled timestamped channel data.

Programs compile to a static flow graph of streaming operators and execute
in streaming or static mode with identical outputs, or against a live line
stream in real-time mode.
"""
from .compiler import compile_program, compile_text, export_dot, validate
from .engine import (Limits, MemoryLedger, MemorySinks, RunReport,
                     memory_report, run_realtime, run_static, run_streaming)
from .model import FlowGraph, OperatorNode, Pipe, Record, find_cycles, topological_order
from .parser import classify_argument, format_program, parse_program, parse_statement

__version__ = "0.1.0"

__all__ = [
    "FlowGraph", "Limits", "MemoryLedger", "MemorySinks", "OperatorNode",
    "Pipe", "Record", "RunReport", "classify_argument", "compile_program",
    "compile_text", "export_dot", "find_cycles", "format_program",
    "memory_report", "parse_program", "parse_statement", "run_realtime",
    "run_static", "run_streaming", "topological_order", "validate",
    "__version__",
]
