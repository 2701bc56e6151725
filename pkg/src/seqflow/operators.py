"""The streaming operator catalog.

Every operator is a small automaton fed one record at a time by the engine,
per the node-runtime contract: ``on_record`` for each input record (in
non-decreasing time order across all input ports), ``on_timer`` for timers
the operator scheduled, ``on_flush`` once at end of stream.  State is keyed
per channel; behavior on one channel never reads another channel's state
(auxiliary trigger/arg ports are shared by design).

Output channel naming: operators that compute a new derived quantity
(sma, tma, ema, sd, range, count, normalize, derivative, sinceLast, active,
layer) relabel their outputs ``<input>_<op>[<positional literals>]``
(brackets omitted when there are none).  Operators that forward records
unchanged or rewrite them in place (echo, filter, sample, passIf,
passIfFast, skip, delay, echoPast, eq) keep channel names, which also keeps
names stable around recursion cycles.
"""
from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from . import rpn
from .errors import ArgumentError, Diagnostic, EquationError, RegexError
from .evtio import CsvSyncWriter, format_evt_line, format_number
from .model import OperatorNode, Record

TIMER_RANK = 2  # timers fire after all same-time records


class Operator:
    def on_record(self, port: str, rec: Record, ctx) -> None:
        pass

    def on_timer(self, time: float, key, ctx) -> None:
        pass

    def on_flush(self, ctx) -> None:
        pass


class GeneratorOp(Operator):
    """Source operators driven by the engine's time frontier."""

    def start(self, t_min: float) -> List[Record]:
        return []

    def advance_to(self, t: float) -> List[Record]:
        return []

    def finish(self, t_max: float) -> List[Record]:
        return []

    def next_time(self) -> Optional[float]:
        """Next emission time, if one is already scheduled."""
        return None


class _NameMap:
    """Caches per-channel output names for a fixed suffix."""

    __slots__ = ("suffix", "_memo")

    def __init__(self, suffix: str):
        self.suffix = suffix
        self._memo: Dict[str, str] = {}

    def __call__(self, channel: str) -> str:
        out = self._memo.get(channel)
        if out is None:
            out = self._memo[channel] = channel + self.suffix
        return out


class WindowBuffer:
    """Per-channel deque of (time, value) trimmed to the closed window
    [t - w, t] after each update; instrumented for the memory ledger.

    Statistics rescan the deque rather than keeping running sums: an
    incremental total drifts after many add/trim cycles and turns empty
    variance (sd = 0) into a tiny non-zero number.
    """

    __slots__ = ("dq", "gauge", "channel")

    def __init__(self, gauge, channel: str):
        self.dq: deque = deque()
        self.gauge = gauge
        self.channel = channel

    def add(self, t: float, v: float) -> None:
        self.dq.append((t, v))
        self.gauge.adjust(self.channel, 1)

    def trim(self, cutoff: float) -> None:
        dq = self.dq
        n = 0
        while dq and dq[0][0] < cutoff:
            dq.popleft()
            n += 1
        if n:
            self.gauge.adjust(self.channel, -n)

    def mean(self) -> float:
        s = 0.0
        for _, v in self.dq:
            s += v
        return s / len(self.dq)

    def __len__(self) -> int:
        return len(self.dq)


# ------------------------------------------------------------------ pass-through

class IdentityOp(Operator):
    """echo: repeats records; also backs source-selection and merge nodes."""

    def on_record(self, port, rec, ctx):
        ctx.emit(rec)


class FilterOp(Operator):
    def __init__(self, pattern: re.Pattern):
        self.pattern = pattern
        self._memo: Dict[str, bool] = {}

    def on_record(self, port, rec, ctx):
        keep = self._memo.get(rec.channel)
        if keep is None:
            keep = self._memo[rec.channel] = self.pattern.fullmatch(rec.channel) is not None
        if keep:
            ctx.emit(rec)


class RenameOp(Operator):
    def __init__(self, new_name: Optional[str], name_eq: Optional[rpn.RpnProgram]):
        self.new_name = new_name
        self.name_eq = name_eq
        self._memo: Dict[str, str] = {}
        self._plain_seen: Optional[str] = None

    def on_record(self, port, rec, ctx):
        if self.name_eq is not None:
            out = self._memo.get(rec.channel)
            if out is None:
                out = self._memo[rec.channel] = rpn.eval_string(
                    self.name_eq, env={"name": rec.channel})
        else:
            if self._plain_seen is None:
                self._plain_seen = rec.channel
            elif rec.channel != self._plain_seen:
                ctx.diag(f"rename collision: channel {rec.channel!r} also maps to "
                         f"{self.new_name!r}; record dropped")
                return
            out = self.new_name
        ctx.emit(Record(out, rec.time, rec.value))


# ------------------------------------------------------------------ window stats

def _stat_sma(buf: WindowBuffer, t: float) -> Optional[float]:
    return buf.mean()


def _stat_sd(buf: WindowBuffer, t: float) -> Optional[float]:
    n = len(buf)
    mean = buf.mean()
    acc = 0.0
    for _, v in buf.dq:
        d = v - mean
        acc += d * d
    return math.sqrt(acc / n)


def _stat_range(buf: WindowBuffer, t: float) -> Optional[float]:
    vals = [v for _, v in buf.dq]
    return max(vals) - min(vals)


def _stat_count(buf: WindowBuffer, t: float) -> Optional[float]:
    return float(len(buf))


class WindowStatOp(Operator):
    """Moving statistic over the closed tailing window [t - w, t].

    Emits at every input record, or (when a trigger pipe is wired) at every
    trigger record instead; a trigger over an empty window emits nothing.
    """

    def __init__(self, window: float, stat: Callable, suffix: str, gauge,
                 triggered: bool):
        self.window = window
        self.stat = stat
        self.out_name = _NameMap(suffix)
        self.gauge = gauge
        self.triggered = triggered
        self.state: Dict[str, WindowBuffer] = {}

    def _buf(self, channel: str) -> WindowBuffer:
        buf = self.state.get(channel)
        if buf is None:
            buf = self.state[channel] = WindowBuffer(self.gauge, channel)
        return buf

    def on_record(self, port, rec, ctx):
        if port == "in":
            buf = self._buf(rec.channel)
            t = rec.time
            buf.trim(t - self.window)
            buf.add(t, rec.numeric_value())
            if not self.triggered:
                out = self.stat(buf, t)
                if out is not None:
                    ctx.emit(Record(self.out_name(rec.channel), t, out))
        else:  # trigger
            t = rec.time
            for channel, buf in self.state.items():
                buf.trim(t - self.window)
                if buf:
                    out = self.stat(buf, t)
                    if out is not None:
                        ctx.emit(Record(self.out_name(channel), t, out))


class TmaStatOp(WindowStatOp):
    def __init__(self, window, suffix, gauge, triggered):
        super().__init__(window, self._tma, suffix, gauge, triggered)

    def _tma(self, buf: WindowBuffer, t: float) -> Optional[float]:
        w = self.window
        num = 0.0
        den = 0.0
        for s, v in buf.dq:
            weight = (w - (t - s)) / w
            num += weight * v
            den += weight
        if den <= 0.0:
            return None
        return num / den


class EmaOp(Operator):
    """Exponential moving average with time-aware decay for non-uniform
    sampling: y0 = v0, yi = a*vi + (1-a)*y(i-1), a = 1 - exp(-dt/w).

    The input window [t - w, t] is retained (and counted in the ledger) even
    though only the previous output enters the recurrence, so buffer
    occupancy tracks the other windowed operators.
    """

    def __init__(self, window: float, suffix: str, gauge):
        self.window = window
        self.out_name = _NameMap(suffix)
        self.gauge = gauge
        self.prev: Dict[str, Tuple[float, float]] = {}
        self.buffers: Dict[str, WindowBuffer] = {}

    def on_record(self, port, rec, ctx):
        t = rec.time
        v = rec.numeric_value()
        buf = self.buffers.get(rec.channel)
        if buf is None:
            buf = self.buffers[rec.channel] = WindowBuffer(self.gauge, rec.channel)
        buf.trim(t - self.window)
        buf.add(t, v)
        last = self.prev.get(rec.channel)
        if last is None:
            y = v
        else:
            t_prev, y_prev = last
            alpha = 1.0 - math.exp(-(t - t_prev) / self.window)
            y = alpha * v + (1.0 - alpha) * y_prev
        self.prev[rec.channel] = (t, y)
        ctx.emit(Record(self.out_name(rec.channel), t, y))


class NormalizeOp(Operator):
    """(v - mean) / sd over the tailing window; sd = 0 skips the record."""

    def __init__(self, window: float, suffix: str, gauge):
        self.window = window
        self.out_name = _NameMap(suffix)
        self.gauge = gauge
        self.state: Dict[str, WindowBuffer] = {}

    def on_record(self, port, rec, ctx):
        t = rec.time
        v = rec.numeric_value()
        buf = self.state.get(rec.channel)
        if buf is None:
            buf = self.state[rec.channel] = WindowBuffer(self.gauge, rec.channel)
        buf.trim(t - self.window)
        buf.add(t, v)
        sd = _stat_sd(buf, t)
        if sd == 0.0:
            return
        ctx.emit(Record(self.out_name(rec.channel), t, (v - buf.mean()) / sd))


class DerivativeOp(Operator):
    def __init__(self, suffix: str):
        self.out_name = _NameMap(suffix)
        self.prev: Dict[str, Tuple[float, float]] = {}

    def on_record(self, port, rec, ctx):
        t = rec.time
        v = rec.numeric_value()
        last = self.prev.get(rec.channel)
        if last is not None:
            t_prev, v_prev = last
            if t == t_prev:
                # a zero time step has no slope; the record is ignored
                ctx.diag(f"derivative: duplicate timestamp {format_number(t)} on "
                         f"{rec.channel!r}; record skipped")
                return
            ctx.emit(Record(self.out_name(rec.channel), t, (v - v_prev) / (t - t_prev)))
        self.prev[rec.channel] = (t, v)


# ------------------------------------------------------------------ time shifts

class DelayOp(Operator):
    def __init__(self, shift: float):
        self.shift = shift

    def on_record(self, port, rec, ctx):
        ctx.emit(Record(rec.channel, rec.time + self.shift, rec.value))


class EchoPastOp(Operator):
    """The one non-causal operator: re-emits each record w earlier."""

    def __init__(self, shift: float):
        self.shift = shift

    def on_record(self, port, rec, ctx):
        ctx.emit(Record(rec.channel, rec.time - self.shift, rec.value))


# ------------------------------------------------------------------ equations

class EqOp(Operator):
    def __init__(self, program: rpn.RpnProgram):
        self.program = program

    def on_record(self, port, rec, ctx):
        try:
            out = rpn.eval_record(self.program, rec.numeric_value(), rec.time)
        except EquationError as exc:
            ctx.diag(f"eq: {exc}; record dropped")
            return
        ctx.emit(Record(rec.channel, rec.time, out))


class PassIfOp(Operator):
    """Forward the record iff the record equation is non-zero.

    argK tokens read the latest value seen on the matching auxiliary pipe,
    non-strictly anterior to the record's time (aux records at equal times
    are applied first).
    """

    def __init__(self, program: rpn.RpnProgram):
        self.program = program
        self.args: Dict[int, float] = {}

    def on_record(self, port, rec, ctx):
        if port.startswith("arg"):
            self.args[int(port[3:])] = rec.numeric_value()
            return
        try:
            out = rpn.eval_record(self.program, rec.numeric_value(), rec.time, self.args)
        except EquationError as exc:
            ctx.diag(f"passIf: {exc}; record dropped")
            return
        if out != 0.0:
            ctx.emit(rec)


class PassIfFastOp(Operator):
    def __init__(self, min_value: Optional[float], max_value: Optional[float]):
        self.min_value = min_value
        self.max_value = max_value

    def on_record(self, port, rec, ctx):
        v = rec.numeric_value()
        if self.min_value is not None and v < self.min_value:
            return
        if self.max_value is not None and v > self.max_value:
            return
        ctx.emit(rec)


# ------------------------------------------------------------------ sampling

class SampleOp(Operator):
    """At each trigger record, re-emit every input channel's latest record
    value (records exactly at the trigger time included)."""

    def __init__(self):
        self.last: Dict[str, Record] = {}

    def on_record(self, port, rec, ctx):
        if port == "in":
            self.last[rec.channel] = rec
            return
        t = rec.time
        for channel, held in self.last.items():
            ctx.emit(Record(channel, t, held.value))


class ActiveOp(Operator):
    """Change-point encoding of "had a record in the last w time units":
    1 at an inactive->active transition, 0 scheduled at t_last + w unless a
    newer record arrives first."""

    def __init__(self, window: float, suffix: str):
        self.window = window
        self.out_name = _NameMap(suffix)
        self.active: Dict[str, bool] = {}

    def on_record(self, port, rec, ctx):
        channel = rec.channel
        if not self.active.get(channel, False):
            self.active[channel] = True
            ctx.emit(Record(self.out_name(channel), rec.time, 1.0))
        ctx.schedule(rec.time + self.window, channel)

    def on_timer(self, time, key, ctx):
        self.active[key] = False
        ctx.emit(Record(self.out_name(key), time, 0.0))


class SinceLastOp(Operator):
    """Interval since the previous record, capped at ``max``.

    Without a trigger, emitted at each record from the second on.  With a
    trigger, emitted at each trigger time for every input channel with
    history.  Intervals above the cap are suppressed.
    """

    def __init__(self, cap: float, suffix: str, triggered: bool):
        self.cap = cap
        self.out_name = _NameMap(suffix)
        self.triggered = triggered
        self.last: Dict[str, float] = {}

    def on_record(self, port, rec, ctx):
        if port == "in":
            t = rec.time
            if not self.triggered:
                prev = self.last.get(rec.channel)
                if prev is not None:
                    dt = t - prev
                    if dt <= self.cap:
                        ctx.emit(Record(self.out_name(rec.channel), t, dt))
            self.last[rec.channel] = t
        else:
            t = rec.time
            for channel, prev in self.last.items():
                dt = t - prev
                if dt <= self.cap:
                    ctx.emit(Record(self.out_name(channel), t, dt))


class LayerOp(Operator):
    """Threshold crossing detector on a piecewise-constant reading.

    output:up emits when previous <= v and current > v; output:down when
    previous >= v and current < v.  The emitted value is the crossing
    record's own value; the first record never crosses.
    """

    def __init__(self, threshold: float, direction: str, suffix: str):
        self.threshold = threshold
        self.up = direction == "up"
        self.out_name = _NameMap(suffix)
        self.prev: Dict[str, float] = {}

    def on_record(self, port, rec, ctx):
        v = rec.numeric_value()
        prev = self.prev.get(rec.channel)
        if prev is not None:
            thr = self.threshold
            if self.up:
                crossed = prev <= thr < v
            else:
                crossed = prev >= thr > v
            if crossed:
                ctx.emit(Record(self.out_name(rec.channel), rec.time, v))
        self.prev[rec.channel] = v


class SkipOp(Operator):
    """Forward a record iff more than w elapsed since the last forwarded
    record of the channel (the first record always passes)."""

    def __init__(self, window: float):
        self.window = window
        self.last: Dict[str, float] = {}

    def on_record(self, port, rec, ctx):
        prev = self.last.get(rec.channel)
        if prev is None or rec.time - prev > self.window:
            self.last[rec.channel] = rec.time
            ctx.emit(rec)


# ------------------------------------------------------------------ generators

class TickGen(GeneratorOp):
    """Record at every k*p (integer k) within the input time bounds; on a
    wall clock in real-time mode."""

    def __init__(self, period: float):
        self.period = period
        self.channel = f"tick[{format_number(period)}]"
        self.next_k: Optional[int] = None

    def start(self, t_min: float) -> List[Record]:
        self.next_k = math.ceil(t_min / self.period)
        return self.advance_to(t_min)

    def advance_to(self, t: float) -> List[Record]:
        out: List[Record] = []
        p = self.period
        while self.next_k * p <= t:
            out.append(Record(self.channel, self.next_k * p, None))
            self.next_k += 1
        return out

    def next_time(self) -> Optional[float]:
        return None if self.next_k is None else self.next_k * self.period


_WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday",
             "Saturday", "Sunday")
_HOUR = 3600.0
_DAY = 86400.0


def _weekday_name(ts: float) -> str:
    # Unix epoch day 0 (1970-01-01) was a Thursday
    return _WEEKDAYS[(int(ts // _DAY) + 3) % 7]


class CalendarGen(GeneratorOp):
    """Civil-time event source over UTC epoch-second timestamps.

    days: a value-less record on event.day_is_<Weekday> at each UTC
    midnight.  hours: state.hour_is_<0..23> flipping 1 at each hour start
    and 0 at its end, clipped to the input bounds.
    """

    def __init__(self, days: bool, hours: bool):
        self.days = days
        self.hours = hours
        self.boundary: Optional[float] = None
        self.active_hour: Optional[int] = None

    def _emit_boundary(self, t: float, out: List[Record]) -> None:
        if self.hours and self.active_hour is not None:
            out.append(Record(f"state.hour_is_{self.active_hour}", t, 0.0))
        if self.days and (t % _DAY) == 0.0:
            out.append(Record(f"event.day_is_{_weekday_name(t)}", t, None))
        if self.hours:
            self.active_hour = int((t % _DAY) // _HOUR)
            out.append(Record(f"state.hour_is_{self.active_hour}", t, 1.0))

    def start(self, t_min: float) -> List[Record]:
        out: List[Record] = []
        if self.hours:
            self.active_hour = int((t_min % _DAY) // _HOUR)
        if (t_min % _HOUR) == 0.0:
            # t_min sits exactly on a boundary: treat it as one, minus the close
            if self.days and (t_min % _DAY) == 0.0:
                out.append(Record(f"event.day_is_{_weekday_name(t_min)}", t_min, None))
            if self.hours:
                out.append(Record(f"state.hour_is_{self.active_hour}", t_min, 1.0))
        elif self.hours:
            out.append(Record(f"state.hour_is_{self.active_hour}", t_min, 1.0))
        self.boundary = math.floor(t_min / _HOUR) * _HOUR + _HOUR
        return out

    def advance_to(self, t: float) -> List[Record]:
        out: List[Record] = []
        while self.boundary is not None and self.boundary <= t:
            b = self.boundary
            if self.hours or (b % _DAY) == 0.0:
                self._emit_boundary(b, out)
            self.boundary = b + _HOUR
        return out

    def finish(self, t_max: float) -> List[Record]:
        if self.hours and self.active_hour is not None:
            return [Record(f"state.hour_is_{self.active_hour}", t_max, 0.0)]
        return []

    def next_time(self) -> Optional[float]:
        return self.boundary


# ------------------------------------------------------------------ sinks

class SaveOp(Operator):
    """Streams records to an .evt sink in arrival order."""

    def __init__(self, sink):
        self.sink = sink

    def on_record(self, port, rec, ctx):
        self.sink.write(format_evt_line(rec) + "\n")


class SaveCsvOp(Operator):
    """Buffers records into a synchronized table; each trigger flushes the
    rows so far into a fresh file (``<index>`` in the pattern counts up)."""

    def __init__(self, pattern: str, open_sink, gauge):
        self.writer = CsvSyncWriter(pattern, open_sink)
        self.gauge = gauge

    def on_record(self, port, rec, ctx):
        if port == "in":
            self.writer.add(rec)
            self.gauge.adjust(rec.channel, 1)
        else:
            self._flush(up_to=rec.time)

    def _flush(self, up_to=None):
        before = {}
        for row in self.writer.rows.values():
            for ch in row:
                before[ch] = before.get(ch, 0) + 1
        self.writer.flush(up_to=up_to)
        after = {}
        for row in self.writer.rows.values():
            for ch in row:
                after[ch] = after.get(ch, 0) + 1
        for ch, n in before.items():
            delta = after.get(ch, 0) - n
            if delta:
                self.gauge.adjust(ch, delta)

    def on_flush(self, ctx):
        if self.writer.rows or self.writer.flush_count == 0:
            self._flush()


# ------------------------------------------------------------------ registry

@dataclass(frozen=True)
class OpSpec:
    name: str
    kind: str                       # transform | source | sink | generator
    prepare: Callable               # (node, pos, named, resolve, loc, diags) -> None
    make: Callable                  # (node, services) -> Operator
    pipe_named: Tuple[str, ...] = ()    # named args wired as pipes
    arg_pipes: bool = False             # accepts arg1..argN pipe args
    renames: bool = False

    def is_pipe_arg(self, name: str) -> bool:
        if name in self.pipe_named:
            return True
        return self.arg_pipes and re.fullmatch(r"arg[1-9][0-9]*", name) is not None

    def port_rank(self, port: str) -> int:
        if self.name == "passIf":
            return 0 if port.startswith("arg") else 1
        return 0 if port == "in" else 1

    def shift(self, node: OperatorNode) -> float:
        if self.name == "delay":
            return node.build_args["shift"]
        if self.name == "echoPast":
            return -node.build_args["shift"]
        return 0.0


def _want(pos, count, op, loc):
    if len(pos) != count:
        raise ArgumentError(
            f"{op} takes {count} positional argument(s) after its input, got {len(pos)}",
            loc)


def _number(value, what, loc) -> float:
    if not isinstance(value, float):
        raise ArgumentError(f"{what} must be a number, got {value!r}", loc)
    return value


def _string(value, what, loc) -> str:
    if not isinstance(value, str):
        raise ArgumentError(f"{what} must be a string, got {value!r}", loc)
    return value


def _display(values) -> Tuple[str, ...]:
    return tuple(format_number(v) if isinstance(v, float) else str(v) for v in values)


def _suffix(op: str, display: Tuple[str, ...]) -> str:
    if display:
        return f"_{op}[{','.join(display)}]"
    return f"_{op}"


def _no_named(named, op, loc, allowed=()):
    for name in named:
        if name not in allowed:
            raise ArgumentError(f"unknown named argument {name!r} for {op}", loc)


def _record_program(value, what, loc) -> rpn.RpnProgram:
    if isinstance(value, float):
        return rpn.RpnProgram.constant(value)
    try:
        return rpn.parse_record(value)
    except EquationError as exc:
        raise ArgumentError(f"bad {what}: {exc}", loc) from None


def _positive(value: float, what, loc) -> float:
    if value <= 0:
        raise ArgumentError(f"{what} must be positive, got {format_number(value)}", loc)
    return value


# --- prepare functions -------------------------------------------------------

def _prep_echo(node, pos, named, resolve, loc, diags):
    _no_named(named, "echo", loc)


def _prep_filter(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "filter", loc)
    _no_named(named, "filter", loc)
    pattern = _string(resolve(pos[0]), "filter pattern", loc)
    try:
        node.build_args["pattern"] = re.compile(pattern)
    except re.error as exc:
        raise RegexError(f"bad filter pattern {pattern!r}: {exc}", loc) from None
    node.params = (pattern,)


def _prep_rename(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "rename", loc)
    _no_named(named, "rename", loc)
    arg = pos[0]
    if arg.kind == "streq":
        try:
            node.build_args["name_eq"] = rpn.parse_string(arg.text)
        except EquationError as exc:
            raise ArgumentError(f"bad rename equation: {exc}", loc) from None
        node.params = (f"&{arg.text}",)
    else:
        name = _string(resolve(arg), "rename target", loc)
        node.build_args["new_name"] = name
        node.params = (name,)


def _make_window_prepare(op: str):
    def prep(node, pos, named, resolve, loc, diags):
        _want(pos, 1, op, loc)
        _no_named(named, op, loc, allowed=("trigger",))
        w = _positive(_number(resolve(pos[0]), f"{op} window", loc), f"{op} window", loc)
        node.build_args["window"] = w
        node.params = _display((w,))
        node.build_args["suffix"] = _suffix(op, node.params)
    return prep


_WINDOW_STATS = {"sma": _stat_sma, "sd": _stat_sd, "range": _stat_range,
                 "count": _stat_count}


def _make_window_make(op: str):
    def make(node, services):
        triggered = node.build_args.get("triggered", False)
        if op == "tma":
            return TmaStatOp(node.build_args["window"], node.build_args["suffix"],
                             services.gauge(node.id), triggered)
        return WindowStatOp(node.build_args["window"], _WINDOW_STATS[op],
                            node.build_args["suffix"], services.gauge(node.id),
                            triggered)
    return make


def _prep_ema(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "ema", loc)
    _no_named(named, "ema", loc)
    w = _positive(_number(resolve(pos[0]), "ema window", loc), "ema window", loc)
    node.build_args["window"] = w
    node.params = _display((w,))
    node.build_args["suffix"] = _suffix("ema", node.params)


def _prep_normalize(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "normalize", loc)
    _no_named(named, "normalize", loc, allowed=("type",))
    w = _positive(_number(resolve(pos[0]), "normalize window", loc),
                  "normalize window", loc)
    kind = "meansd"
    if "type" in named:
        kind = _string(resolve(named["type"]), "normalize type", loc)
    if kind != "meansd":
        raise ArgumentError(f"unsupported normalize type {kind!r}", loc)
    node.build_args["window"] = w
    node.params = _display((w,))
    node.build_args["suffix"] = _suffix("normalize", node.params)


def _prep_derivative(node, pos, named, resolve, loc, diags):
    _want(pos, 0, "derivative", loc)
    _no_named(named, "derivative", loc)
    node.build_args["suffix"] = _suffix("derivative", ())


def _prep_delay(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "delay", loc)
    _no_named(named, "delay", loc)
    d = _number(resolve(pos[0]), "delay shift", loc)
    if d < 0:
        raise ArgumentError("delay shift must be >= 0", loc)
    node.build_args["shift"] = d
    node.params = _display((d,))


def _prep_echo_past(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "echoPast", loc)
    _no_named(named, "echoPast", loc)
    w = _positive(_number(resolve(pos[0]), "echoPast shift", loc), "echoPast shift", loc)
    node.build_args["shift"] = w
    node.params = _display((w,))


def _prep_eq(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "eq", loc)
    _no_named(named, "eq", loc)
    arg = pos[0]
    value = arg.value if arg.kind == "number" else arg.text
    node.build_args["program"] = _record_program(value, "eq equation", loc)
    node.params = (node.build_args["program"].text,)


def _prep_pass_if(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "passIf", loc)
    _no_named(named, "passIf", loc)
    arg = pos[0]
    value = arg.value if arg.kind == "number" else arg.text
    node.build_args["program"] = _record_program(value, "passIf equation", loc)
    node.params = (node.build_args["program"].text,)


def _prep_pass_if_fast(node, pos, named, resolve, loc, diags):
    _want(pos, 0, "passIfFast", loc)
    _no_named(named, "passIfFast", loc, allowed=("minValue", "maxValue"))
    lo = hi = None
    if "minValue" in named:
        lo = _number(resolve(named["minValue"]), "minValue", loc)
    if "maxValue" in named:
        hi = _number(resolve(named["maxValue"]), "maxValue", loc)
    if lo is None and hi is None:
        raise ArgumentError("passIfFast needs minValue and/or maxValue", loc)
    node.build_args["min"] = lo
    node.build_args["max"] = hi
    node.named_params = {k: v for k, v in (("minValue", lo), ("maxValue", hi))
                         if v is not None}


def _prep_sample(node, pos, named, resolve, loc, diags):
    _want(pos, 0, "sample", loc)
    _no_named(named, "sample", loc)
    if not node.build_args.get("triggered"):
        raise ArgumentError("sample requires a trigger", loc)


def _prep_active(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "active", loc)
    _no_named(named, "active", loc)
    w = _positive(_number(resolve(pos[0]), "active window", loc), "active window", loc)
    node.build_args["window"] = w
    node.params = _display((w,))
    node.build_args["suffix"] = _suffix("active", node.params)


def _prep_since_last(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "sinceLast", loc)
    _no_named(named, "sinceLast", loc, allowed=("trigger",))
    cap = _positive(_number(resolve(pos[0]), "sinceLast max", loc), "sinceLast max", loc)
    node.build_args["cap"] = cap
    node.params = _display((cap,))
    node.build_args["suffix"] = _suffix("sinceLast", node.params)


def _prep_layer(node, pos, named, resolve, loc, diags):
    _want(pos, 0, "layer", loc)
    _no_named(named, "layer", loc, allowed=("thresholds", "output"))
    if "thresholds" not in named or "output" not in named:
        raise ArgumentError("layer requires thresholds: and output:", loc)
    thr = _number(resolve(named["thresholds"]), "layer thresholds", loc)
    direction = _string(resolve(named["output"]), "layer output", loc)
    if direction not in ("up", "down"):
        raise ArgumentError(f"layer output must be up or down, got {direction!r}", loc)
    node.build_args["threshold"] = thr
    node.build_args["direction"] = direction
    node.build_args["suffix"] = _suffix("layer", ())
    node.named_params = {"thresholds": thr, "output": direction}


def _prep_skip(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "skip", loc)
    _no_named(named, "skip", loc)
    w = _positive(_number(resolve(pos[0]), "skip window", loc), "skip window", loc)
    node.build_args["window"] = w
    node.params = _display((w,))


def _prep_tick(node, pos, named, resolve, loc, diags):
    _want(pos, 1, "tick", loc)
    _no_named(named, "tick", loc)
    p = _positive(_number(resolve(pos[0]), "tick period", loc), "tick period", loc)
    node.build_args["period"] = p
    node.params = _display((p,))


def _prep_calendar(node, pos, named, resolve, loc, diags):
    _want(pos, 0, "calendar", loc)
    _no_named(named, "calendar", loc, allowed=("produce",))
    produce = "days,hours"
    if "produce" in named:
        produce = _string(resolve(named["produce"]), "calendar produce", loc)
    items = [p.strip() for p in produce.split(",") if p.strip()]
    for item in items:
        if item == "months":
            diags.append(Diagnostic("warning",
                                    "calendar months production is not implemented; ignored",
                                    loc))
        elif item not in ("days", "hours"):
            raise ArgumentError(f"unknown calendar production {item!r}", loc)
    node.build_args["days"] = "days" in items
    node.build_args["hours"] = "hours" in items
    node.named_params = {"produce": produce}


def _prep_save(node, pos, named, resolve, loc, diags):
    _want(pos, 0, "save", loc)
    _no_named(named, "save", loc, allowed=("file",))
    path = ""
    if "file" in named:
        path = _string(resolve(named["file"]), "save file", loc)
    node.build_args["file"] = path
    node.named_params = {"file": path}


def _prep_save_csv(node, pos, named, resolve, loc, diags):
    _want(pos, 0, "saveBufferedCsv", loc)
    _no_named(named, "saveBufferedCsv", loc, allowed=("file", "trigger"))
    path = ""
    if "file" in named:
        path = _string(resolve(named["file"]), "saveBufferedCsv file", loc)
    node.build_args["file"] = path
    node.named_params = {"file": path}


# --- make functions ----------------------------------------------------------

def _make_simple(factory):
    def make(node, services):
        return factory(node, services)
    return make


OPERATORS: Dict[str, OpSpec] = {}


def _register(spec: OpSpec) -> None:
    OPERATORS[spec.name] = spec


_register(OpSpec("echo", "transform", _prep_echo,
                 _make_simple(lambda n, s: IdentityOp())))
_register(OpSpec("filter", "transform", _prep_filter,
                 _make_simple(lambda n, s: FilterOp(n.build_args["pattern"]))))
_register(OpSpec("rename", "transform", _prep_rename,
                 _make_simple(lambda n, s: RenameOp(n.build_args.get("new_name"),
                                                    n.build_args.get("name_eq")))))
for _op in ("sma", "sd", "range", "count"):
    _register(OpSpec(_op, "transform", _make_window_prepare(_op),
                     _make_window_make(_op), pipe_named=("trigger",), renames=True))
_register(OpSpec("tma", "transform", _make_window_prepare("tma"),
                 _make_window_make("tma"), pipe_named=("trigger",), renames=True))
_register(OpSpec("ema", "transform", _prep_ema,
                 _make_simple(lambda n, s: EmaOp(n.build_args["window"],
                                                 n.build_args["suffix"],
                                                 s.gauge(n.id))), renames=True))
_register(OpSpec("normalize", "transform", _prep_normalize,
                 _make_simple(lambda n, s: NormalizeOp(n.build_args["window"],
                                                       n.build_args["suffix"],
                                                       s.gauge(n.id))), renames=True))
_register(OpSpec("derivative", "transform", _prep_derivative,
                 _make_simple(lambda n, s: DerivativeOp(n.build_args["suffix"])),
                 renames=True))
_register(OpSpec("delay", "transform", _prep_delay,
                 _make_simple(lambda n, s: DelayOp(n.build_args["shift"]))))
_register(OpSpec("echoPast", "transform", _prep_echo_past,
                 _make_simple(lambda n, s: EchoPastOp(n.build_args["shift"]))))
_register(OpSpec("eq", "transform", _prep_eq,
                 _make_simple(lambda n, s: EqOp(n.build_args["program"]))))
_register(OpSpec("passIf", "transform", _prep_pass_if,
                 _make_simple(lambda n, s: PassIfOp(n.build_args["program"])),
                 arg_pipes=True))
_register(OpSpec("passIfFast", "transform", _prep_pass_if_fast,
                 _make_simple(lambda n, s: PassIfFastOp(n.build_args["min"],
                                                        n.build_args["max"]))))
_register(OpSpec("sample", "transform", _prep_sample,
                 _make_simple(lambda n, s: SampleOp()), pipe_named=("trigger",)))
_register(OpSpec("active", "transform", _prep_active,
                 _make_simple(lambda n, s: ActiveOp(n.build_args["window"],
                                                    n.build_args["suffix"])),
                 renames=True))
_register(OpSpec("sinceLast", "transform", _prep_since_last,
                 _make_simple(lambda n, s: SinceLastOp(n.build_args["cap"],
                                                       n.build_args["suffix"],
                                                       n.build_args.get("triggered", False))),
                 pipe_named=("trigger",), renames=True))
_register(OpSpec("layer", "transform", _prep_layer,
                 _make_simple(lambda n, s: LayerOp(n.build_args["threshold"],
                                                   n.build_args["direction"],
                                                   n.build_args["suffix"])),
                 renames=True))
_register(OpSpec("skip", "transform", _prep_skip,
                 _make_simple(lambda n, s: SkipOp(n.build_args["window"]))))
_register(OpSpec("tick", "generator", _prep_tick,
                 _make_simple(lambda n, s: TickGen(n.build_args["period"]))))
_register(OpSpec("calendar", "generator", _prep_calendar,
                 _make_simple(lambda n, s: CalendarGen(n.build_args["days"],
                                                       n.build_args["hours"]))))
_register(OpSpec("save", "sink", _prep_save,
                 _make_simple(lambda n, s: SaveOp(
                     s.open_sink(n.build_args["file"] or s.default_output, n)))))
_register(OpSpec("saveBufferedCsv", "sink", _prep_save_csv,
                 _make_simple(lambda n, s: SaveCsvOp(
                     n.build_args["file"] or s.default_output,
                     lambda path: s.open_sink(path, n),
                     s.gauge(n.id))),
                 pipe_named=("trigger",)))


def build_operator(node: OperatorNode, services) -> Operator:
    return OPERATORS[node.op_name].make(node, services)
