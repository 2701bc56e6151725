"""Flow-graph execution: streaming, static, and a real-time stub.

All drivers share one per-node automaton (the operator callbacks) and one
delivery order, so an acyclic program produces byte-identical sink output
in every offline mode:

* streaming: records advance through per-node buffers gated by watermarks
  (a pipe watermark W promises no future record with time <= W).  The
  watermark shifts through delay (+d) and echoPast (-w) nodes, which is how
  echoPast's into-the-past emissions stay ordered downstream.  Buffers stay
  bounded by the current timestamp group plus operator windows.
* static: every node runs once, in topological order, over fully
  materialized inputs; a node's buffered output is released once its last
  consumer has run.  Cyclic graphs are rejected.
* cyclic streaming (record recursion) runs on a single global time-ordered
  event heap; a compile-time rule guarantees every cycle shifts time
  forward through a positive delay, and a pending-event cap backstops
  runaway re-injection.

Per-node delivery order is the total key (time, port rank, producer
topological rank, producer emission count, pipe index); timers fire after
same-time records.
"""
from __future__ import annotations

import heapq
import io
import math
import os
import time as _time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .errors import (ConfigError, CycleError, EngineError, MemoryLimitError,
                     OrderError, PendingOverflowError, TimeTravelError)
from .evtio import group_by_time, merge_streams, open_records, parse_evt_line
from .model import FlowGraph, OperatorNode, Record, topological_order
from .operators import OPERATORS, GeneratorOp, TIMER_RANK, build_operator

INF = math.inf


@dataclass
class Limits:
    max_pending: int = 1_000_000
    max_steps: Optional[int] = None
    max_materialized: Optional[int] = None


# ------------------------------------------------------------------ ledger

class MemoryLedger:
    """Buffered-record counters per node and channel, with peak tracking."""

    def __init__(self):
        self.current: Dict[int, Dict[str, int]] = {}
        self.peak: Dict[int, Dict[str, int]] = {}
        self.node_current: Dict[int, int] = {}
        self.node_peak: Dict[int, int] = {}
        self.events: List[Tuple[str, int]] = []

    def adjust(self, node_id: int, channel: str, delta: int) -> None:
        per = self.current.setdefault(node_id, {})
        n = per.get(channel, 0) + delta
        per[channel] = n
        peaks = self.peak.setdefault(node_id, {})
        if n > peaks.get(channel, 0):
            peaks[channel] = n
        total = self.node_current.get(node_id, 0) + delta
        self.node_current[node_id] = total
        if total > self.node_peak.get(node_id, 0):
            self.node_peak[node_id] = total

    def log(self, kind: str, node_id: int) -> None:
        self.events.append((kind, node_id))


class _Gauge:
    __slots__ = ("ledger", "node_id")

    def __init__(self, ledger: MemoryLedger, node_id: int):
        self.ledger = ledger
        self.node_id = node_id

    def adjust(self, channel: str, delta: int) -> None:
        self.ledger.adjust(self.node_id, channel, delta)


class _NullGauge:
    __slots__ = ()

    def adjust(self, channel: str, delta: int) -> None:
        pass


_NULL_GAUGE = _NullGauge()


def memory_report(ledger: MemoryLedger) -> Dict[int, Dict[str, object]]:
    """Per-node peak occupancy: total and per channel."""
    out: Dict[int, Dict[str, object]] = {}
    for node_id, peak in ledger.node_peak.items():
        out[node_id] = {"peak": peak, "channels": dict(ledger.peak.get(node_id, {}))}
    return out


# ------------------------------------------------------------------ sinks

class FileSinks:
    """Opens real files (creating parent directories); on failure the run
    removes everything it created."""

    def __init__(self):
        self.handles: List = []
        self.paths: List[str] = []

    def open(self, path: str):
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        fh = open(path, "w", encoding="utf-8", newline="")
        self.handles.append(fh)
        self.paths.append(path)
        return fh

    def close_all(self) -> None:
        for fh in self.handles:
            if not fh.closed:
                fh.close()

    def discard_all(self) -> None:
        self.close_all()
        for path in self.paths:
            try:
                os.unlink(path)
            except OSError:
                pass


class _KeepOpenStringIO(io.StringIO):
    def close(self):  # content stays readable after operators "close" it
        pass


class MemorySinks:
    """In-memory sink factory for tests and byte-for-byte comparisons."""

    def __init__(self):
        self.files: Dict[str, _KeepOpenStringIO] = {}
        self.paths: List[str] = []

    def open(self, path: str):
        sio = _KeepOpenStringIO()
        self.files[path] = sio
        self.paths.append(path)
        return sio

    def text(self, path: str) -> str:
        return self.files[path].getvalue()

    def close_all(self) -> None:
        pass

    def discard_all(self) -> None:
        self.files.clear()


# ------------------------------------------------------------------ report

@dataclass
class RunReport:
    mode: str
    records_in: int = 0
    node_stats: Dict[int, Tuple[str, int, int]] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)
    ledger: Optional[MemoryLedger] = None
    wall_seconds: float = 0.0
    sink_paths: List[str] = field(default_factory=list)

    def render(self) -> str:
        lines = [f"mode: {self.mode}",
                 f"records in: {self.records_in}"]
        lines.append(f"{'node':<6}{'operator':<28}{'in':>10}{'out':>10}{'peak':>8}")
        for nid in sorted(self.node_stats):
            label, n_in, n_out = self.node_stats[nid]
            peak = ""
            if self.ledger is not None:
                peak = str(self.ledger.node_peak.get(nid, 0))
            lines.append(f"n{nid:<5}{label:<28.28}{n_in:>10}{n_out:>10}{peak:>8}")
        for diag in self.diagnostics:
            lines.append(f"diagnostic: {diag}")
        lines.append(f"diagnostics: {len(self.diagnostics)}")
        lines.append(f"wall time: {self.wall_seconds:.3f} s")
        return "\n".join(lines)


# ------------------------------------------------------------------ services

class _Services:
    def __init__(self, mode: str, default_output: Optional[str], sinks,
                 ledger: Optional[MemoryLedger]):
        self.mode = mode
        self.default_output = default_output
        self.sinks = sinks
        self.ledger = ledger

    def open_sink(self, path: Optional[str], node: OperatorNode):
        if not path:
            raise ConfigError(
                f"{node.op_name} has no file: argument and no output is configured",
                node.loc)
        return self.sinks.open(path)

    def gauge(self, node_id: int):
        if self.ledger is None:
            return _NULL_GAUGE
        return _Gauge(self.ledger, node_id)


# ------------------------------------------------------------------ node executor

class _Ctx:
    __slots__ = ("ne",)

    def __init__(self, ne: "_NodeExec"):
        self.ne = ne

    def emit(self, rec: Record) -> None:
        self.ne.emit(rec)

    def schedule(self, time: float, key) -> None:
        self.ne.schedule_timer(time, key)

    def diag(self, msg: str) -> None:
        self.ne.runner.diag(msg, self.ne.node)


class _InPipe:
    __slots__ = ("buf", "wm", "port", "rank", "producer_topo", "pipe_index")

    def __init__(self, port: str, rank: int, producer_topo: int, pipe_index: int):
        self.buf: deque = deque()
        self.wm = -INF
        self.port = port
        self.rank = rank
        self.producer_topo = producer_topo
        self.pipe_index = pipe_index


class _NodeExec:
    def __init__(self, runner, node: OperatorNode, op, shift: float):
        self.runner = runner
        self.node = node
        self.op = op
        self.shift = shift
        self.in_pipes: List[_InPipe] = []
        self.outs: List[Tuple["_NodeExec", int]] = []
        self.timers: List[Tuple[float, int, object]] = []
        self.timer_live: Dict[object, Tuple[float, int]] = {}
        self._timer_seq = 0
        self.emit_ctr = 0
        self.out_wm = -INF
        self.in_count = 0
        self.out_count = 0
        self.last_emit = -INF
        self.ctx = _Ctx(self)

    # the runner replaces this for queue-based execution
    def emit(self, rec: Record) -> None:
        t = rec.time
        if t < self.last_emit:
            raise TimeTravelError(
                f"{self.node.op_name} (n{self.node.id}) emitted time "
                f"{t} below its own frontier {self.last_emit}")
        if not math.isfinite(t) or (rec.value is not None and not math.isfinite(rec.value)):
            raise EngineError(
                f"{self.node.op_name} (n{self.node.id}) emitted a non-finite record")
        self.last_emit = t
        self.out_count += 1
        ec = self.emit_ctr
        self.emit_ctr += 1
        for cons, pos in self.outs:
            cons.in_pipes[pos].buf.append((ec, rec))
        self.runner.note_buffered(len(self.outs))

    def schedule_timer(self, time: float, key) -> None:
        self._timer_seq += 1
        self.timer_live[key] = (time, self._timer_seq)
        heapq.heappush(self.timers, (time, self._timer_seq, key))

    def _prune_timers(self) -> None:
        timers = self.timers
        while timers:
            time, seq, key = timers[0]
            if self.timer_live.get(key) == (time, seq):
                return
            heapq.heappop(timers)

    def advance(self, final: bool = False) -> None:
        ps = self.in_pipes
        if ps:
            frontier = min(p.wm for p in ps)
        else:
            frontier = INF if final else self.out_wm
        runner = self.runner
        op = self.op
        while True:
            best_pipe = None
            best_key = None
            for p in ps:
                if p.buf:
                    ec, rec = p.buf[0]
                    t = rec.time
                    if t <= frontier:
                        k = (t, p.rank, p.producer_topo, ec, p.pipe_index)
                        if best_key is None or k < best_key:
                            best_key = k
                            best_pipe = p
            self._prune_timers()
            timer = self.timers[0] if self.timers else None
            if timer is not None and timer[0] > frontier:
                timer = None
            if best_pipe is None and timer is None:
                break
            if best_pipe is not None and (
                    timer is None or (best_key[0], best_key[1]) <= (timer[0], TIMER_RANK)):
                _, rec = best_pipe.buf.popleft()
                runner.note_buffered(-1)
                self.in_count += 1
                op.on_record(best_pipe.port, rec, self.ctx)
            else:
                t, seq, key = heapq.heappop(self.timers)
                del self.timer_live[key]
                op.on_timer(t, key, self.ctx)
        if final:
            op.on_flush(self.ctx)
        if ps:
            new_wm = frontier + self.shift
            if new_wm < self.out_wm:
                raise EngineError(
                    f"watermark regressed on n{self.node.id} "
                    f"({self.out_wm} -> {new_wm})")
            self.out_wm = new_wm


# ------------------------------------------------------------------ runner

class _Runner:
    def __init__(self, graph: FlowGraph, mode: str, services: _Services,
                 limits: Limits):
        self.graph = graph
        self.mode = mode
        self.services = services
        self.limits = limits
        self.report = RunReport(mode=mode, ledger=services.ledger)
        self.buffered_now = 0
        self.steps = 0

        self.topo = topological_order(graph)
        self.topo_rank = {nid: i for i, nid in enumerate(self.topo)}
        self.execs: Dict[int, _NodeExec] = {}
        for node in graph.nodes:
            spec = OPERATORS[node.op_name]
            op = build_operator(node, services)
            self.execs[node.id] = _NodeExec(self, node, op, spec.shift(node))
        # wire pipes; a consumer's in-pipe list follows pipe creation order
        by_dst: Dict[int, List] = {}
        for pipe in graph.pipes:
            by_dst.setdefault(pipe.dst, []).append(pipe)
        for dst, pipes in by_dst.items():
            cons = self.execs[dst]
            spec = OPERATORS[cons.node.op_name]
            for pipe in sorted(pipes, key=lambda p: p.dst_index):
                ip = _InPipe(pipe.port, spec.port_rank(pipe.port),
                             self.topo_rank[pipe.src], pipe.dst_index)
                pos = len(cons.in_pipes)
                cons.in_pipes.append(ip)
                self.execs[pipe.src].outs.append((cons, pos))
        # source-selection nodes get one virtual pipe fed by the driver
        self.source_execs: List[_NodeExec] = []
        self.generators: List[_NodeExec] = []
        for node in graph.nodes:
            ne = self.execs[node.id]
            if node.selection is not None:
                ip = _InPipe("in", 0, -1, -1)
                ne.in_pipes.insert(0, ip)
                for producer in self.execs.values():
                    producer.outs = [(c, pos + 1) if c is ne else (c, pos)
                                     for c, pos in producer.outs]
                self.source_execs.append(ne)
            elif isinstance(ne.op, GeneratorOp):
                self.generators.append(ne)
            elif not ne.in_pipes:
                # a merge node that never received a contribution produces
                # nothing and must not hold its consumers back
                ne.out_wm = INF
        self._match_cache: Dict[str, List[_NodeExec]] = {}
        self._feed_ctr = 0

    # ---------------- helpers

    def diag(self, msg: str, node: OperatorNode) -> None:
        self.report.diagnostics.append(f"n{node.id} {node.op_name}: {msg}")

    def note_buffered(self, delta: int) -> None:
        self.buffered_now += delta
        cap = self.limits.max_materialized
        if cap is not None and self.buffered_now > cap:
            raise MemoryLimitError(
                f"{self.buffered_now} buffered records exceed the cap of {cap}"
                + self._ledger_snapshot())

    def _ledger_snapshot(self) -> str:
        ledger = self.services.ledger
        if ledger is None:
            return ""
        worst = sorted(ledger.node_current.items(), key=lambda kv: -kv[1])[:5]
        return "; top nodes: " + ", ".join(f"n{nid}={n}" for nid, n in worst)

    def _matching_sources(self, channel: str) -> List[_NodeExec]:
        found = self._match_cache.get(channel)
        if found is None:
            import re as _re
            found = []
            for ne in self.source_execs:
                kind, pattern = ne.node.selection
                if kind == "regex":
                    if _re.fullmatch(pattern, channel):
                        found.append(ne)
                elif pattern == channel:
                    found.append(ne)
            self._match_cache[channel] = found
        return found

    def _feed_group(self, t: float, group: Sequence[Record]) -> None:
        self.report.records_in += len(group)
        for rec in group:
            ec = self._feed_ctr
            self._feed_ctr += 1
            for ne in self._matching_sources(rec.channel):
                ne.in_pipes[0].buf.append((ec, rec))
                self.note_buffered(1)
        for ne in self.source_execs:
            ne.in_pipes[0].wm = t

    def _route_generated(self, ne: _NodeExec, recs: Sequence[Record]) -> None:
        for rec in recs:
            ne.emit(rec)

    def _pass(self, final: bool = False) -> None:
        for nid in self.topo:
            ne = self.execs[nid]
            ne.advance(final)
            wm = ne.out_wm
            for cons, pos in ne.outs:
                cons.in_pipes[pos].wm = wm

    def finish_report(self, started: float) -> RunReport:
        for nid, ne in self.execs.items():
            self.report.node_stats[nid] = (ne.node.label(), ne.in_count, ne.out_count)
        self.report.wall_seconds = _time.perf_counter() - started
        self.report.sink_paths = list(self.services.sinks.paths)
        return self.report

    # ---------------- pipeline driver (acyclic; supports echoPast)

    def run_pipeline(self, groups: Iterator[Tuple[float, List[Record]]]) -> None:
        started = False
        t_last: Optional[float] = None
        for t, group in groups:
            if not started:
                for g in self.generators:
                    self._route_generated(g, g.op.start(t))
                started = True
            else:
                for g in self.generators:
                    self._route_generated(g, g.op.advance_to(t))
            for g in self.generators:
                g.out_wm = t
            self._feed_group(t, group)
            self._pass()
            t_last = t
        if self.generators and t_last is None:
            raise ConfigError("generator operators need input time bounds, "
                              "but no input records arrived")
        for g in self.generators:
            if t_last is not None:
                self._route_generated(g, g.op.finish(t_last))
            g.out_wm = INF
        for ne in self.source_execs:
            ne.in_pipes[0].wm = INF
        self._pass(final=True)

    # ---------------- static driver (acyclic, batch, with release log)

    def run_static(self, groups: Iterator[Tuple[float, List[Record]]]) -> None:
        ledger = self.services.ledger
        started = False
        t_last: Optional[float] = None
        for t, group in groups:
            if not started:
                for g in self.generators:
                    self._route_generated(g, g.op.start(t))
                started = True
            else:
                for g in self.generators:
                    self._route_generated(g, g.op.advance_to(t))
            self._feed_group(t, group)
            t_last = t
        if self.generators and t_last is None:
            raise ConfigError("generator operators need input time bounds, "
                              "but no input records arrived")
        for g in self.generators:
            if t_last is not None:
                self._route_generated(g, g.op.finish(t_last))
            g.out_wm = INF
        for ne in self.source_execs:
            ne.in_pipes[0].wm = INF

        # last consumer (by topological position) of each producer
        last_consumer: Dict[int, int] = {}
        for pipe in self.graph.pipes:
            pos = self.topo_rank[pipe.dst]
            if pos > last_consumer.get(pipe.src, -1):
                last_consumer[pipe.src] = pos
        for pos, nid in enumerate(self.topo):
            ne = self.execs[nid]
            ne.advance(final=True)
            for cons, cpos in ne.outs:
                cons.in_pipes[cpos].wm = ne.out_wm
            if ledger is not None:
                ledger.log("run", nid)
                for src in sorted({p.src for p in self.graph.pipes if p.dst == nid}):
                    if last_consumer.get(src) == pos:
                        ledger.log("release", src)

    # ---------------- global-heap driver (cyclic streaming)

    _REC, _TIMER, _FEED, _GEN = 0, 1, 2, 3

    def run_queue(self, groups: Iterator[Tuple[float, List[Record]]]) -> None:
        heap: List = []
        seq = 0
        sources_done = False
        t_last: Optional[float] = None
        current_time = -INF

        def push(item) -> None:
            nonlocal seq
            heapq.heappush(heap, item)
            if len(heap) > self.limits.max_pending:
                raise PendingOverflowError(
                    f"{len(heap)} pending events exceed the cap of "
                    f"{self.limits.max_pending} (runaway recursion?)")

        def next_seq() -> int:
            nonlocal seq
            seq += 1
            return seq

        # queue-mode emission: route records as future deliveries
        def make_emit(ne: _NodeExec):
            def emit(rec: Record) -> None:
                if rec.time < current_time:
                    raise TimeTravelError(
                        f"{ne.node.op_name} (n{ne.node.id}) emitted time {rec.time} "
                        f"below the engine clock {current_time}")
                ne.out_count += 1
                for cons, pos in ne.outs:
                    ip = cons.in_pipes[pos]
                    push((rec.time, self.topo_rank[cons.node.id], ip.rank,
                          next_seq(), self._REC, cons, ip.port, rec))
            return emit

        def make_schedule(ne: _NodeExec):
            def schedule(time: float, key) -> None:
                ne._timer_seq += 1
                ne.timer_live[key] = (time, ne._timer_seq)
                push((time, self.topo_rank[ne.node.id], TIMER_RANK,
                      next_seq(), self._TIMER, ne, key, ne._timer_seq))
            return schedule

        for ne in self.execs.values():
            ne.emit = make_emit(ne)
            ne.schedule_timer = make_schedule(ne)

        group_iter = iter(groups)

        def push_next_feed() -> None:
            nonlocal sources_done
            try:
                t, group = next(group_iter)
            except StopIteration:
                sources_done = True
                return
            push((t, -1, -1, next_seq(), self._FEED, None, None, group))

        push_next_feed()
        started = False
        while heap:
            item = heapq.heappop(heap)
            current_time = item[0]
            self.steps += 1
            if self.limits.max_steps is not None and self.steps > self.limits.max_steps:
                raise PendingOverflowError(
                    f"step count exceeded {self.limits.max_steps}")
            kind = item[4]
            if kind == self._FEED:
                group = item[7]
                self.report.records_in += len(group)
                if not started:
                    started = True
                    for g in self.generators:
                        for rec in g.op.start(current_time):
                            g.emit(rec)
                        nt = g.op.next_time()
                        if nt is not None:
                            push((nt, self.topo_rank[g.node.id], -1, next_seq(),
                                  self._GEN, g, None, None))
                for rec in group:
                    ec = self._feed_ctr
                    self._feed_ctr += 1
                    for ne in self._matching_sources(rec.channel):
                        push((rec.time, self.topo_rank[ne.node.id], 0,
                              next_seq(), self._REC, ne, "in", rec))
                t_last = current_time
                push_next_feed()
            elif kind == self._REC:
                ne, port, rec = item[5], item[6], item[7]
                ne.in_count += 1
                ne.op.on_record(port, rec, ne.ctx)
            elif kind == self._TIMER:
                ne, key, local_seq = item[5], item[6], item[7]
                t = item[0]
                if ne.timer_live.get(key) != (t, local_seq):
                    continue  # rescheduled or cancelled
                del ne.timer_live[key]
                ne.op.on_timer(t, key, ne.ctx)
            else:  # _GEN
                g = item[5]
                if sources_done and (t_last is None or current_time > t_last):
                    continue
                for rec in g.op.advance_to(current_time):
                    g.emit(rec)
                nt = g.op.next_time()
                if nt is not None:
                    push((nt, self.topo_rank[g.node.id], -1, next_seq(),
                          self._GEN, g, None, None))
        if self.generators and t_last is None:
            raise ConfigError("generator operators need input time bounds, "
                              "but no input records arrived")
        for nid in self.topo:
            ne = self.execs[nid]
            ne.op.on_flush(ne.ctx)


# ------------------------------------------------------------------ entry points

def _resolve_sources(graph: FlowGraph, sources) -> List[Iterable[Record]]:
    if sources is None:
        spec = graph.config.get("input", "")
        sources = [p for p in spec.split(";") if p]
        if not sources and any(n.selection is not None for n in graph.nodes):
            raise ConfigError("no input configured: pass sources or set input")
    out = []
    for src in sources:
        out.append(open_records(src) if isinstance(src, str) else src)
    return out


def _grouped(graph: FlowGraph, sources) -> Iterator[Tuple[float, List[Record]]]:
    return group_by_time(merge_streams(_resolve_sources(graph, sources)))


def run_streaming(graph: FlowGraph, sources=None, *, sinks=None, output=None,
                  instrument: bool = False, limits: Optional[Limits] = None) -> RunReport:
    """Record-by-record execution with bounded buffers.

    Acyclic graphs run the watermark pipeline (echoPast supported); graphs
    with record recursion run on the global event heap.
    """
    started = _time.perf_counter()
    limits = limits or Limits()
    sinks = sinks if sinks is not None else FileSinks()
    ledger = MemoryLedger() if instrument else None
    services = _Services("streaming", output or graph.config.get("output"),
                         sinks, ledger)
    try:
        runner = _Runner(graph, "streaming", services, limits)
        groups = _grouped(graph, sources)
        if graph.has_cycles:
            runner.run_queue(groups)
        else:
            runner.run_pipeline(groups)
    except BaseException:
        sinks.discard_all()
        raise
    sinks.close_all()
    return runner.finish_report(started)


def run_static(graph: FlowGraph, sources=None, *, sinks=None, output=None,
               instrument: bool = False, limits: Optional[Limits] = None,
               pre_sorted_records: Optional[Iterable[Record]] = None) -> RunReport:
    """Operator-at-a-time execution over materialized buffers."""
    started = _time.perf_counter()
    if graph.has_cycles:
        raise CycleError(
            f"static mode does not support recursive programs (cycle {graph.cycles[0]})")
    limits = limits or Limits()
    sinks = sinks if sinks is not None else FileSinks()
    ledger = MemoryLedger() if instrument else None
    services = _Services("static", output or graph.config.get("output"),
                         sinks, ledger)
    try:
        runner = _Runner(graph, "static", services, limits)
        if pre_sorted_records is not None:
            groups = group_by_time(pre_sorted_records)
        else:
            groups = _grouped(graph, sources)
        runner.run_static(groups)
    except BaseException:
        sinks.discard_all()
        raise
    sinks.close_all()
    return runner.finish_report(started)


def _realtime_groups(lines: Iterable[str], source: str
                     ) -> Iterator[Tuple[float, List[Record]]]:
    group: List[Record] = []
    t: Optional[float] = None
    for lineno, line in enumerate(lines, start=1):
        rec = parse_evt_line(line, source, lineno)
        if rec is None:
            continue
        if t is not None and rec.time < t:
            raise OrderError(f"out-of-order record (line {lineno}): "
                             f"{line.strip()!r}", None)
        if t is None or rec.time == t:
            group.append(rec)
            t = rec.time
        else:
            yield t, group
            group = [rec]
            t = rec.time
    if group:
        yield t, group


def run_realtime(graph: FlowGraph, lines: Iterable[str], *, clock: Optional[Callable[[], float]] = None,
                 sinks=None, output=None, instrument: bool = False,
                 limits: Optional[Limits] = None,
                 source_name: str = "<stdin>") -> RunReport:
    """Live line-stream stub: .evt lines in, streaming semantics, wall-clock
    generators.  echoPast and record recursion are rejected by validation."""
    started = _time.perf_counter()
    if graph.has_cycles:
        raise CycleError("real-time mode does not support recursive programs")
    for node in graph.nodes:
        if node.op_name == "echoPast":
            raise ConfigError("echoPast cannot run in real-time mode", node.loc)
    limits = limits or Limits()
    sinks = sinks if sinks is not None else FileSinks()
    ledger = MemoryLedger() if instrument else None
    services = _Services("realtime", output or graph.config.get("output"),
                         sinks, ledger)
    clock = clock or _time.time
    try:
        runner = _Runner(graph, "realtime", services, limits)
        gens_started = False

        def poll_generators() -> None:
            nonlocal gens_started
            now = clock()
            for g in runner.generators:
                if not gens_started:
                    runner._route_generated(g, g.op.start(now))
                else:
                    runner._route_generated(g, g.op.advance_to(now))
                g.out_wm = now
            gens_started = True

        if runner.generators:
            poll_generators()
        for t, group in _realtime_groups(lines, source_name):
            if runner.generators:
                poll_generators()
            runner._feed_group(t, group)
            runner._pass()
        now = clock()
        for g in runner.generators:
            runner._route_generated(g, g.op.advance_to(now))
            runner._route_generated(g, g.op.finish(now))
            g.out_wm = INF
        for ne in runner.source_execs:
            ne.in_pipes[0].wm = INF
        runner._pass(final=True)
    except BaseException:
        sinks.discard_all()
        raise
    sinks.close_all()
    return runner.finish_report(started)
