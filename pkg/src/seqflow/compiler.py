"""Lowering parsed statements into a flow graph.

Channel variables behave like imperative variables: '=' rebinds a name to
the producing nodes of the right-hand side, '+=' unions them in, and a read
snapshots the current binding into pipes.  Statement order therefore
matters.  Non-channel %variables% are substituted textually before argument
classification.  Compile-time machinery (set/if/include, function
unrolling, recursion wiring) all happens here; the result is a static,
immutable graph.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

from . import parser as P
from . import rpn
from .errors import (ArgumentError, CompileError, Diagnostic, EquationError,
                     IncludeCycleError, InfiniteRecursionError, RegexError,
                     SourceLoc, UnboundVariableError, UnknownOperatorError)
from .model import FlowGraph, OperatorNode, Pipe, find_cycles
from .operators import OPERATORS
from .parser import ArgValue, substitute_refs

DEFAULT_MAX_UNROLL_DEPTH = 1000

Literal = Union[float, str]


@dataclass
class _Junction:
    """Merge point for a recursive channel variable."""
    var: str
    merge_id: int
    read: bool = False
    contributors: Set[int] = field(default_factory=set)


@dataclass
class _Frame:
    channels: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    junctions: Dict[str, _Junction] = field(default_factory=dict)
    nonchannel: Dict[str, Literal] = field(default_factory=dict)
    global_decls: Set[str] = field(default_factory=set)
    ch_read: Set[str] = field(default_factory=set)
    ch_written: Dict[str, SourceLoc] = field(default_factory=dict)
    nc_read: Set[str] = field(default_factory=set)
    nc_written: Dict[str, SourceLoc] = field(default_factory=dict)
    returns: List[int] = field(default_factory=list)


class Compiler:
    def __init__(self, entry_file: str = "<program>",
                 max_unroll_depth: int = DEFAULT_MAX_UNROLL_DEPTH):
        self.graph = FlowGraph()
        self.entry_file = entry_file
        self.max_unroll_depth = max_unroll_depth
        self.functions: Dict[str, P.FunctionDef] = {}
        self.global_frame = _Frame()
        self.group_stack: List[str] = []
        self.include_stack: List[str] = [os.path.normpath(entry_file)]
        self.call_stack: List[Tuple[str, Tuple]] = []
        self.diags: List[Diagnostic] = []
        self.future_targets: Set[str] = set()
        self._dst_counts: Dict[int, int] = {}
        self._call_counts: Dict[str, int] = {}

    # ------------------------------------------------------------ graph ops

    def _new_node(self, op: str, loc: SourceLoc,
                  selection: Optional[Tuple[str, str]] = None) -> OperatorNode:
        node = OperatorNode(id=len(self.graph.nodes), op_name=op,
                            selection=selection,
                            group_path=tuple(self.group_stack), loc=loc)
        self.graph.nodes.append(node)
        return node

    def _add_pipe(self, src: int, dst: int, port: str = "in",
                  back: bool = False) -> None:
        idx = self._dst_counts.get(dst, 0)
        self._dst_counts[dst] = idx + 1
        self.graph.pipes.append(Pipe(src=src, dst=dst, port=port, dst_index=idx,
                                     recursive_back_edge=back))

    # ------------------------------------------------------------ variables

    def _frame_for(self, frame: _Frame, name: str) -> _Frame:
        if name in frame.global_decls:
            return self.global_frame
        return frame

    def resolve_channel_read(self, frame: _Frame, name: str,
                             loc: SourceLoc) -> Tuple[int, ...]:
        target = self._frame_for(frame, name)
        target.ch_read.add(name)
        junction = target.junctions.get(name)
        if junction is not None:
            junction.read = True
            return (junction.merge_id,)
        binding = target.channels.get(name)
        if binding is None:
            hint = ""
            if name in self.future_targets:
                hint = f" (${name} is only written later; did you mean 'recursive ${name}'?)"
            raise UnboundVariableError(f"channel variable ${name} is not bound{hint}", loc)
        return binding

    def _bind_channel(self, frame: _Frame, name: str, producers: Sequence[int],
                      merge: bool, loc: SourceLoc) -> None:
        target = self._frame_for(frame, name)
        target.ch_written[name] = loc
        junction = target.junctions.get(name)
        if junction is not None:
            if not merge:
                raise CompileError(
                    f"recursive variable ${name} only accepts '+='", loc)
            for pid in producers:
                if pid in junction.contributors:
                    continue
                junction.contributors.add(pid)
                self._add_pipe(pid, junction.merge_id, "in", back=junction.read)
            return
        if merge and name in target.channels:
            current = list(target.channels[name])
            for pid in producers:
                if pid not in current:
                    current.append(pid)
            target.channels[name] = tuple(current)
        else:
            target.channels[name] = tuple(dict.fromkeys(producers))

    def _lookup_nonchannel(self, frame: _Frame, name: str,
                           loc: SourceLoc) -> Literal:
        for fr in (frame, self.global_frame):
            if name in fr.nonchannel:
                fr.nc_read.add(name)
                return fr.nonchannel[name]
        raise UnboundVariableError(f"non-channel variable %{name}% is not set", loc)

    # ------------------------------------------------------------ arguments

    def _sub_arg(self, arg: ArgValue, frame: _Frame, loc: SourceLoc) -> ArgValue:
        if arg.kind == "ref":
            value = self._lookup_nonchannel(frame, arg.text, loc)
            if isinstance(value, float):
                return ArgValue("number", repr(value), value=value)
            return ArgValue("string", value, quoted=True)
        if arg.kind in ("number", "var"):
            return arg
        if "%" not in arg.text:
            return arg
        text = substitute_refs(arg.text, lambda n: self._lookup_nonchannel(frame, n, loc))
        return ArgValue(arg.kind, text, quoted=arg.quoted, value=arg.value)

    def _resolve_literal(self, arg: ArgValue, loc: SourceLoc) -> Literal:
        """Substituted argument -> python literal (numbers from equations too)."""
        if arg.kind == "number":
            return arg.value
        if arg.kind == "string":
            return arg.text
        if arg.kind == "numeq":
            try:
                return rpn.eval_numeric(rpn.parse_numeric(arg.text))
            except EquationError as exc:
                raise CompileError(str(exc), loc) from None
        if arg.kind == "streq":
            try:
                return rpn.eval_string(rpn.parse_string(arg.text))
            except EquationError as exc:
                raise CompileError(str(exc), loc) from None
        raise ArgumentError(f"expected a literal value, got {arg.render()!r}", loc)

    # ------------------------------------------------------------ statements

    def compile_body(self, statements: Sequence[P.Statement], frame: _Frame,
                     depth: int) -> None:
        for stmt in statements:
            self._compile_statement(stmt, frame, depth)

    def _compile_statement(self, stmt: P.Statement, frame: _Frame, depth: int) -> None:
        if isinstance(stmt, P.Comment):
            return
        if isinstance(stmt, P.Config):
            from .evtio import format_number
            for key, arg in stmt.named.items():
                sub = self._sub_arg(arg, frame, stmt.loc)
                value = self._resolve_literal(sub, stmt.loc)
                if isinstance(value, float):
                    value = format_number(value)
                name = key if stmt.name == "data" else f"{stmt.name}.{key}"
                self.graph.config[name] = value
            return
        if isinstance(stmt, P.SetVar):
            sub = self._sub_arg(stmt.value, frame, stmt.loc)
            frame.nonchannel[stmt.name] = self._resolve_literal(sub, stmt.loc)
            frame.nc_written[stmt.name] = stmt.loc
            return
        if isinstance(stmt, P.If):
            cond = self._sub_arg(stmt.cond, frame, stmt.loc)
            try:
                value = rpn.eval_numeric(rpn.parse_numeric(cond.text))
            except EquationError as exc:
                raise CompileError(f"if condition: {exc}", stmt.loc) from None
            self.compile_body(stmt.then if value != 0.0 else stmt.orelse, frame, depth)
            return
        if isinstance(stmt, P.Include):
            self._compile_include(stmt, frame, depth)
            return
        if isinstance(stmt, P.FunctionDef):
            self.functions[stmt.name] = stmt
            return
        if isinstance(stmt, P.Group):
            before = len(self.graph.nodes)
            self.group_stack.append(stmt.name)
            try:
                self.compile_body(stmt.body, frame, depth)
            finally:
                self.group_stack.pop()
            if len(self.graph.nodes) == before:
                self.diags.append(Diagnostic(
                    "warning", f"group {stmt.name!r} contains no operators", stmt.loc))
            return
        if isinstance(stmt, P.RecursiveDecl):
            target = self._frame_for(frame, stmt.var)
            if stmt.var in target.channels or stmt.var in target.junctions:
                raise CompileError(
                    f"${stmt.var} is already bound; declare 'recursive' first", stmt.loc)
            merge = self._new_node("echo", stmt.loc)
            merge.named_params = {"merges": f"${stmt.var}"}
            target.junctions[stmt.var] = _Junction(stmt.var, merge.id)
            return
        if isinstance(stmt, P.GlobalDecl):
            if frame is self.global_frame:
                self.diags.append(Diagnostic(
                    "warning", f"global ${stmt.var} outside a function has no effect",
                    stmt.loc))
                return
            frame.global_decls.add(stmt.var)
            return
        if isinstance(stmt, P.Return):
            if stmt.arg.kind != "var":
                raise ArgumentError("return takes a channel variable", stmt.loc)
            frame.returns.extend(
                self.resolve_channel_read(frame, stmt.arg.text, stmt.loc))
            return
        if isinstance(stmt, P.Call):
            outputs = self.unroll_call(frame, stmt, depth)
            if stmt.target is not None:
                self._bind_channel(frame, stmt.target, outputs, stmt.merge, stmt.loc)
            return
        if isinstance(stmt, P.OperatorStmt):
            self._compile_operator(stmt, frame)
            return
        raise CompileError(f"cannot compile {type(stmt).__name__}", stmt.loc)

    # ------------------------------------------------------------ includes

    def _compile_include(self, stmt: P.Include, frame: _Frame, depth: int) -> None:
        rel = substitute_refs(
            stmt.path, lambda n: self._lookup_nonchannel(frame, n, stmt.loc))
        base = os.path.dirname(stmt.loc.file)
        path = os.path.normpath(os.path.join(base, rel))
        if path in self.include_stack:
            raise IncludeCycleError(f"include cycle through {path!r}", stmt.loc)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise CompileError(f"cannot read include {stmt.path!r}: {exc}", stmt.loc) from None
        statements = P.parse_program(text, path)
        self.include_stack.append(path)
        try:
            self.compile_body(statements, frame, depth)
        finally:
            self.include_stack.pop()

    # ------------------------------------------------------------ functions

    def unroll_call(self, frame: _Frame, stmt: P.Call, depth: int) -> Tuple[int, ...]:
        fn = self.functions.get(stmt.name)
        if fn is None:
            raise UnknownOperatorError(f"unknown function {stmt.name!r}", stmt.loc)
        if len(stmt.args) != len(fn.params):
            raise ArgumentError(
                f"{stmt.name} takes {len(fn.params)} argument(s), got {len(stmt.args)}",
                stmt.loc)
        if depth >= self.max_unroll_depth:
            raise InfiniteRecursionError(
                f"call depth exceeded {self.max_unroll_depth} while unrolling "
                f"{stmt.name!r}", stmt.loc)
        new_frame = _Frame()
        for param, arg in zip(fn.params, stmt.args):
            sub = self._sub_arg(arg, frame, stmt.loc)
            if param.startswith("$"):
                if sub.kind != "var":
                    raise ArgumentError(
                        f"parameter {param} of {stmt.name} needs a channel variable",
                        stmt.loc)
                producers = self.resolve_channel_read(frame, sub.text, stmt.loc)
                new_frame.channels[param[1:]] = producers
            else:
                name = param[1:-1]
                new_frame.nonchannel[name] = self._resolve_literal(sub, stmt.loc)
        env_key = (stmt.name, tuple(sorted(new_frame.nonchannel.items())))
        if env_key in self.call_stack:
            raise InfiniteRecursionError(
                f"infinite recursion: {stmt.name!r} re-entered with an identical "
                f"compile-time environment", stmt.loc)
        self.call_stack.append(env_key)
        # each unrolled body becomes its own cluster in the exported graph
        self._call_counts[stmt.name] = self._call_counts.get(stmt.name, 0) + 1
        self.group_stack.append(f"{stmt.name}[{self._call_counts[stmt.name]}]")
        try:
            self.compile_body(fn.body, new_frame, depth + 1)
        finally:
            self.group_stack.pop()
            self.call_stack.pop()
        self._warn_unused(new_frame, f"in {stmt.name}")
        return tuple(dict.fromkeys(new_frame.returns))

    # ------------------------------------------------------------ operators

    def _compile_operator(self, stmt: P.OperatorStmt, frame: _Frame) -> None:
        loc = stmt.loc
        spec = OPERATORS.get(stmt.op)
        if spec is None:
            raise UnknownOperatorError(f"unknown operator {stmt.op!r}", loc)
        args = [self._sub_arg(a, frame, loc) for a in stmt.args]
        named = {k: self._sub_arg(v, frame, loc) for k, v in stmt.named.items()}

        if stmt.op == "echo":
            self._compile_echo(stmt, args, named, frame)
            return

        pipe_args: Dict[str, ArgValue] = {}
        lit_named: Dict[str, ArgValue] = {}
        for name, arg in named.items():
            (pipe_args if spec.is_pipe_arg(name) else lit_named)[name] = arg

        producers: Tuple[int, ...] = ()
        pos = args
        if spec.kind in ("transform", "sink"):
            if not args:
                raise ArgumentError(f"{stmt.op} requires an input", loc)
            sel = args[0]
            if sel.kind != "var":
                raise ArgumentError(
                    f"{stmt.op} input must be a channel variable, got {sel.render()!r}",
                    loc)
            producers = self.resolve_channel_read(frame, sel.text, loc)
            pos = args[1:]

        node = self._new_node(stmt.op, loc)
        if "trigger" in pipe_args:
            node.build_args["triggered"] = True
        spec.prepare(node, pos, lit_named, lambda a: self._resolve_literal(a, loc),
                     loc, self.diags)

        for pid in producers:
            self._add_pipe(pid, node.id, "in")
        for name in pipe_args:
            arg = pipe_args[name]
            if arg.kind != "var":
                raise ArgumentError(
                    f"{name}: must be a channel variable, got {arg.render()!r}", loc)
            for pid in self.resolve_channel_read(frame, arg.text, loc):
                self._add_pipe(pid, node.id, name)

        if stmt.target is not None:
            if spec.kind == "sink":
                raise ArgumentError(f"{stmt.op} produces no output to assign", loc)
            self._bind_channel(frame, stmt.target, (node.id,), stmt.merge, loc)

    def _compile_echo(self, stmt: P.OperatorStmt, args: List[ArgValue],
                      named: Dict[str, ArgValue], frame: _Frame) -> None:
        loc = stmt.loc
        if named or len(args) != 1:
            raise ArgumentError("echo takes exactly one channel selection", loc)
        sel = args[0]
        if sel.kind == "var":
            # pass-through of an existing variable: no node, just an alias
            producers = self.resolve_channel_read(frame, sel.text, loc)
            if stmt.target is not None:
                self._bind_channel(frame, stmt.target, producers, stmt.merge, loc)
            return
        if sel.kind == "regex":
            try:
                re.compile(sel.text)
            except re.error as exc:
                raise RegexError(f"bad channel pattern {sel.text!r}: {exc}", loc) from None
            node = self._new_node("echo", loc, selection=("regex", sel.text))
        elif sel.kind == "string":
            node = self._new_node("echo", loc, selection=("literal", sel.text))
        else:
            raise ArgumentError(
                f"echo selection must be $var, #regex or a quoted name, got "
                f"{sel.render()!r}", loc)
        if stmt.target is not None:
            self._bind_channel(frame, stmt.target, (node.id,), stmt.merge, loc)

    # ------------------------------------------------------------ diagnostics

    def _warn_unused(self, frame: _Frame, where: str = "") -> None:
        suffix = f" {where}" if where else ""
        for name, loc in frame.ch_written.items():
            if name not in frame.ch_read:
                self.diags.append(Diagnostic(
                    "warning", f"channel variable ${name} is never read{suffix}", loc))
        for name, loc in frame.nc_written.items():
            if name not in frame.nc_read:
                self.diags.append(Diagnostic(
                    "warning", f"non-channel variable %{name}% is never read{suffix}", loc))


def collect_targets(statements: Sequence[P.Statement], into: Set[str]) -> None:
    for stmt in statements:
        if isinstance(stmt, (P.OperatorStmt, P.Call)) and stmt.target:
            into.add(stmt.target)
        for attr in ("body", "then", "orelse"):
            body = getattr(stmt, attr, None)
            if body:
                collect_targets(body, into)


def compile_program(statements: Sequence[P.Statement], entry_file: str = "<program>",
                    mode: Optional[str] = None,
                    max_unroll_depth: int = DEFAULT_MAX_UNROLL_DEPTH) -> FlowGraph:
    """Lower a parsed program to a flow graph.

    When ``mode`` is given, mode-specific validation runs and the first
    error diagnostic is raised as a :class:`CompileError`.
    """
    comp = Compiler(entry_file, max_unroll_depth)
    collect_targets(statements, comp.future_targets)
    comp.compile_body(statements, comp.global_frame, 0)
    comp._warn_unused(comp.global_frame)
    graph = comp.graph
    graph.cycles = find_cycles(graph)
    graph.meta["diagnostics"] = list(comp.diags)
    if mode is not None:
        for diag in validate(graph, mode):
            if diag.is_error:
                raise CompileError(diag.message, diag.loc)
    return graph


def compile_text(text: str, filename: str = "<program>",
                 mode: Optional[str] = None,
                 max_unroll_depth: int = DEFAULT_MAX_UNROLL_DEPTH) -> FlowGraph:
    return compile_program(P.parse_program(text, filename), filename, mode,
                           max_unroll_depth)


# ---------------------------------------------------------------- validation

def validate(graph: FlowGraph, mode: str = "streaming") -> List[Diagnostic]:
    """Mode-aware structural checks; returns diagnostics, never raises."""
    diags: List[Diagnostic] = list(graph.meta.get("diagnostics", ()))
    echo_past = [n for n in graph.nodes if n.op_name == "echoPast"]

    for cycle in graph.cycles:
        has_progress = any(
            graph.node(nid).op_name == "delay" and graph.node(nid).build_args.get("shift", 0) > 0
            for nid in cycle)
        if not has_progress:
            diags.append(Diagnostic(
                "error",
                f"cycle {cycle} has no delay with a positive shift; records "
                "would loop at one instant", graph.node(cycle[0]).loc))

    if mode == "static" and graph.cycles:
        diags.append(Diagnostic(
            "error", "static mode does not support recursive programs "
            f"(cycle {graph.cycles[0]})", graph.node(graph.cycles[0][0]).loc))
    if mode == "realtime":
        for n in echo_past:
            diags.append(Diagnostic(
                "error", "echoPast sends records into the past and cannot run "
                "in real-time mode", n.loc))
        if graph.cycles:
            diags.append(Diagnostic(
                "error", "recursive programs are not supported by the real-time "
                "line-stream stub", graph.node(graph.cycles[0][0]).loc))
    if mode == "streaming" and graph.cycles and echo_past:
        diags.append(Diagnostic(
            "error", "echoPast cannot be combined with record recursion in "
            "streaming mode", echo_past[0].loc))

    for n in graph.nodes:
        if n.op_name in ("save", "saveBufferedCsv"):
            if not n.build_args.get("file") and not graph.config.get("output"):
                diags.append(Diagnostic(
                    "error", f"{n.op_name} has no file: argument and no output is "
                    "configured", n.loc))
    return diags


# ---------------------------------------------------------------- DOT export

def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(graph: FlowGraph) -> str:
    """Deterministic DOT text; groups become clusters, back edges dashed."""
    lines = ["digraph {"]

    # nested clusters keyed by group path prefix
    by_path: Dict[Tuple[str, ...], List[OperatorNode]] = {}
    for node in graph.nodes:
        by_path.setdefault(node.group_path, []).append(node)
    paths = sorted(by_path)
    cluster_n = 0

    def emit_scope(prefix: Tuple[str, ...], indent: str) -> None:
        nonlocal cluster_n
        for node in by_path.get(prefix, ()):  # nodes exactly at this level
            lines.append(f'{indent}n{node.id} [label="{_dot_escape(node.label())}"];')
        children = sorted({p[:len(prefix) + 1] for p in paths
                           if len(p) > len(prefix) and p[:len(prefix)] == prefix})
        for child in children:
            lines.append(f"{indent}subgraph cluster_{cluster_n} {{")
            cluster_n += 1
            lines.append(f'{indent}  label="{_dot_escape(child[-1])}";')
            emit_scope(child, indent + "  ")
            lines.append(f"{indent}}}")

    emit_scope((), "  ")
    for pipe in graph.pipes:
        attrs = []
        if pipe.port != "in":
            attrs.append(f'label="{_dot_escape(pipe.port)}"')
        if pipe.recursive_back_edge:
            attrs.append("style=dashed")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  n{pipe.src} -> n{pipe.dst}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"
