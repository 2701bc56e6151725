"""Independent reference implementations the operator and engine tests
compare against.

Everything here is deliberately naive: full rescans of the closed window
[t - w, t], explicit interval unions, brute-force path enumeration.  None
of it shares code with the package under test.
"""
from __future__ import annotations

import io
import math
import random
from typing import Dict, List, Optional, Sequence, Tuple

from seqflow import MemorySinks, Record, compile_text, run_static, run_streaming
from seqflow.evtio import read_evt


# ---------------------------------------------------------------- running ops

def run_program(text: str, records: Sequence[Record], mode: str = "streaming",
                out: str = "o.evt", instrument: bool = False):
    graph = compile_text(text)
    sinks = MemorySinks()
    runner = run_static if mode == "static" else run_streaming
    report = runner(graph, [iter(records)], sinks=sinks, instrument=instrument)
    return sinks, report


def run_single_op(op_line: str, records: Sequence[Record],
                  mode: str = "streaming") -> List[Record]:
    """Feed records through `$out = <op over $in>` and parse the output."""
    text = "\n".join([
        "$in = echo #c.*",
        "$trig = echo \"trig\"",
        op_line,
        'save $out file:"o.evt"',
    ]) + "\n"
    sinks, _ = run_program(text, records, mode)
    return list(read_evt(io.StringIO(sinks.text("o.evt"))))


# ---------------------------------------------------------------- datasets

def gen_dataset(rng: random.Random, channels: int = 5, n: int = 300,
                mean_gap: float = 0.7, valueless_p: float = 0.05,
                start: float = 0.0) -> List[Record]:
    """Random multichannel stream with non-uniform sampling and time ties."""
    per_channel: List[List[Record]] = []
    for c in range(channels):
        t = start + rng.random()
        recs = []
        for _ in range(max(1, n // channels)):
            t = round(t + rng.expovariate(1.0 / mean_gap), 2)
            value = None if rng.random() < valueless_p else round(rng.gauss(0, 2), 3)
            recs.append(Record(f"c{c}", t, value))
        per_channel.append(recs)
    merged = sorted((r for recs in per_channel for r in recs), key=lambda r: r.time)
    return merged


def gen_dyadic_dataset(rng: random.Random, channels: int = 2, n: int = 120
                       ) -> List[Record]:
    """Random stream on a 1/4-unit time grid (shifts by whole units stay
    float-exact), unique times per channel."""
    recs = []
    for c in range(channels):
        t = 0.0
        for _ in range(n // channels):
            t += 0.25 * rng.randint(1, 8)
            recs.append(Record(f"c{c}", t, round(rng.gauss(0, 2), 3)))
    return sorted(recs, key=lambda r: r.time)


def add_trigger(rng: random.Random, records: Sequence[Record], period: float = 1.5
                ) -> List[Record]:
    if not records:
        return []
    t0, t1 = records[0].time, records[-1].time
    trig = []
    t = t0 + rng.random() * period
    while t <= t1:
        trig.append(Record("trig", round(t, 2), None))
        t += period
    return sorted(list(records) + trig, key=lambda r: r.time)


def by_channel(records: Sequence[Record]) -> Dict[str, List[Record]]:
    out: Dict[str, List[Record]] = {}
    for rec in records:
        out.setdefault(rec.channel, []).append(rec)
    return out


def val(rec: Record) -> float:
    return 0.0 if rec.value is None else rec.value


# ---------------------------------------------------------------- statistics

def window(records: Sequence[Record], t: float, w: float) -> List[Record]:
    return [r for r in records if t - w <= r.time <= t]


def naive_mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def naive_sd(values: Sequence[float]) -> float:
    m = naive_mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))


def naive_tma(recs: Sequence[Record], t: float, w: float) -> Optional[float]:
    num = den = 0.0
    for r in recs:
        weight = (w - (t - r.time)) / w
        num += weight * val(r)
        den += weight
    if den <= 0:
        return None
    return num / den


def windowed_oracle(records: Sequence[Record], w: float, stat: str,
                    triggers: Optional[Sequence[float]] = None
                    ) -> List[Tuple[str, float, float]]:
    """Expected (channel, time, value) list for one windowed statistic.

    Without triggers the window at the k-th record contains only records
    that have already arrived (same-time records later in arrival order are
    not yet visible).  At a trigger, every record at or before the trigger
    time has arrived.
    """
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        if triggers is not None:
            points = [(t, window(recs, t, w)) for t in triggers]
        else:
            points = [(r.time, window(recs[:k + 1], r.time, w))
                      for k, r in enumerate(recs)]
        for t, win in points:
            if not win:
                continue
            values = [val(r) for r in win]
            if stat == "sma":
                v = naive_mean(values)
            elif stat == "sd":
                v = naive_sd(values)
            elif stat == "range":
                v = max(values) - min(values)
            elif stat == "count":
                v = float(len(values))
            elif stat == "tma":
                v = naive_tma(win, t, w)
                if v is None:
                    continue
            else:
                raise ValueError(stat)
            out.append((f"{channel}_{stat}[{_fmt(w)}]", t, v))
    return sorted(out, key=lambda x: (x[1], x[0]))


def ema_oracle(records: Sequence[Record], w: float) -> List[Tuple[str, float, float]]:
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        y = None
        t_prev = None
        for r in recs:
            v = val(r)
            if y is None:
                y = v
            else:
                a = 1.0 - math.exp(-(r.time - t_prev) / w)
                y = a * v + (1 - a) * y
            t_prev = r.time
            out.append((f"{channel}_ema[{_fmt(w)}]", r.time, y))
    return sorted(out, key=lambda x: (x[1], x[0]))


def normalize_oracle(records: Sequence[Record], w: float) -> List[Tuple[str, float, float]]:
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        for k, r in enumerate(recs):
            win = [val(x) for x in window(recs[:k + 1], r.time, w)]
            sd = naive_sd(win)
            if sd == 0:
                continue
            out.append((f"{channel}_normalize[{_fmt(w)}]", r.time,
                        (val(r) - naive_mean(win)) / sd))
    return sorted(out, key=lambda x: (x[1], x[0]))


def derivative_oracle(records: Sequence[Record]) -> List[Tuple[str, float, float]]:
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        prev = None
        for r in recs:
            if prev is not None:
                if r.time == prev.time:
                    continue  # duplicate timestamps are skipped, state kept
                out.append((f"{channel}_derivative", r.time,
                            (val(r) - val(prev)) / (r.time - prev.time)))
            prev = r
    return sorted(out, key=lambda x: (x[1], x[0]))


def sample_oracle(records: Sequence[Record], triggers: Sequence[float]
                  ) -> List[Tuple[str, float, Optional[float]]]:
    out = []
    chans = by_channel(records)
    for channel, recs in chans.items():
        if channel == "trig":
            continue
        for t in triggers:
            anterior = [r for r in recs if r.time <= t]
            if anterior:
                out.append((channel, t, anterior[-1].value))
    return sorted(out, key=lambda x: (x[1], x[0]))


def active_oracle(records: Sequence[Record], w: float) -> List[Tuple[str, float, float]]:
    """Union of per-record intervals [t, t + w] encoded as 1/0 change points."""
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        times = [r.time for r in recs]
        start = end = None
        for t in times:
            if start is None:
                start, end = t, t + w
            elif t <= end:
                end = t + w
            else:
                out.append((f"{channel}_active[{_fmt(w)}]", start, 1.0))
                out.append((f"{channel}_active[{_fmt(w)}]", end, 0.0))
                start, end = t, t + w
        if start is not None:
            out.append((f"{channel}_active[{_fmt(w)}]", start, 1.0))
            out.append((f"{channel}_active[{_fmt(w)}]", end, 0.0))
    return sorted(out, key=lambda x: (x[1], x[0], -x[2]))


def since_last_oracle(records: Sequence[Record], cap: float,
                      triggers: Optional[Sequence[float]] = None
                      ) -> List[Tuple[str, float, float]]:
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        name = f"{channel}_sinceLast[{_fmt(cap)}]"
        if triggers is None:
            prev = None
            for r in recs:
                if prev is not None:
                    dt = r.time - prev
                    if dt <= cap:
                        out.append((name, r.time, dt))
                prev = r.time
        else:
            for t in triggers:
                anterior = [r.time for r in recs if r.time <= t]
                if anterior:
                    dt = t - anterior[-1]
                    if dt <= cap:
                        out.append((name, t, dt))
    return sorted(out, key=lambda x: (x[1], x[0]))


def layer_oracle(records: Sequence[Record], threshold: float, up: bool
                 ) -> List[Tuple[str, float, float]]:
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        prev = None
        for r in recs:
            v = val(r)
            if prev is not None:
                if up and prev <= threshold < v:
                    out.append((f"{channel}_layer", r.time, v))
                if not up and prev >= threshold > v:
                    out.append((f"{channel}_layer", r.time, v))
            prev = v
    return sorted(out, key=lambda x: (x[1], x[0]))


def skip_oracle(records: Sequence[Record], w: float) -> List[Record]:
    out = []
    for channel, recs in by_channel(records).items():
        if channel == "trig":
            continue
        last = None
        for r in recs:
            if last is None or r.time - last > w:
                last = r.time
                out.append(r)
    return sorted(out, key=lambda r: (r.time, r.channel))


def tick_grid(t_min: float, t_max: float, p: float) -> List[float]:
    out = []
    k = math.ceil(t_min / p)
    while k * p <= t_max:
        out.append(k * p)
        k += 1
    return out


def centered_mean_oracle(records: Sequence[Record], half: float
                         ) -> List[Tuple[str, float, float]]:
    """Mean over [tau - half, tau + half] at tau = t - half per record."""
    out = []
    for channel, recs in by_channel(records).items():
        for r in recs:
            tau = r.time - half
            win = [val(x) for x in recs if tau - half <= x.time <= tau + half]
            out.append((f"{channel}_sma[{_fmt(2 * half)}]", tau, naive_mean(win)))
    return sorted(out, key=lambda x: (x[1], x[0]))


def _fmt(x: float) -> str:
    return str(int(x)) if x == int(x) else repr(x)


# ---------------------------------------------------------------- comparisons

def _norm_key(x):
    return (x[1], x[0], x[2] is None, 0.0 if x[2] is None else x[2])


def as_tuples(records: Sequence[Record]) -> List[Tuple[str, float, Optional[float]]]:
    return [(r.channel, r.time, r.value) for r in records]


def assert_close(actual, expected, rel=1e-9, exact=False):
    actual = sorted(actual, key=_norm_key)
    expected = sorted(expected, key=_norm_key)
    assert len(actual) == len(expected), (
        f"count mismatch: {len(actual)} != {len(expected)}\n"
        f"actual: {actual[:8]}\nexpected: {expected[:8]}")
    for a, e in zip(actual, expected):
        assert a[0] == e[0], f"channel mismatch: {a} vs {e}"
        assert a[1] == e[1], f"time mismatch: {a} vs {e}"
        av, ev = a[2], e[2]
        if av is None or ev is None:
            assert av == ev, f"value mismatch: {a} vs {e}"
        elif exact:
            assert av == ev, f"value mismatch: {a} vs {e}"
        else:
            assert math.isclose(av, ev, rel_tol=rel, abs_tol=1e-12), \
                f"value mismatch: {a} vs {e}"


# ---------------------------------------------------------------- graphs

def brute_force_cycles(n: int, edges: Sequence[Tuple[int, int]]) -> List[List[int]]:
    """All elementary cycles by exhaustive simple-path search (small n)."""
    adj: Dict[int, List[int]] = {i: [] for i in range(n)}
    for u, v in edges:
        adj[u].append(v)
    found = set()

    def walk(path: List[int], seen: set):
        u = path[-1]
        for v in adj[u]:
            if v == path[0]:
                k = path.index(min(path))
                found.add(tuple(path[k:] + path[:k]))
            elif v not in seen:
                walk(path + [v], seen | {v})

    for s in range(n):
        walk([s], {s})
    return sorted(list(c) for c in found)


def rpn_tree_value(tokens: Sequence[str]) -> float:
    """Shunt an RPN token list into an expression tree, then evaluate it."""
    import operator as _op

    binary = {"+": _op.add, "-": _op.sub, "*": _op.mul, "/": _op.truediv,
              "min": min, "max": max,
              "<": lambda a, b: 1.0 if a < b else 0.0,
              "<=": lambda a, b: 1.0 if a <= b else 0.0,
              ">": lambda a, b: 1.0 if a > b else 0.0,
              ">=": lambda a, b: 1.0 if a >= b else 0.0,
              "==": lambda a, b: 1.0 if a == b else 0.0,
              "!=": lambda a, b: 1.0 if a != b else 0.0}
    stack: List[tuple] = []
    for tok in tokens:
        if tok in binary:
            b = stack.pop()
            a = stack.pop()
            stack.append(("bin", tok, a, b))
        elif tok in ("neg", "abs"):
            stack.append(("un", tok, stack.pop()))
        else:
            stack.append(("num", float(tok)))
    assert len(stack) == 1

    def ev(node) -> float:
        if node[0] == "num":
            return node[1]
        if node[0] == "un":
            v = ev(node[2])
            return -v if node[1] == "neg" else abs(v)
        return binary[node[1]](ev(node[2]), ev(node[3]))

    return ev(stack[0])


# ---------------------------------------------------------------- DOT checking

def check_dot(text: str) -> None:
    """Structural DOT validation: balanced braces, known statement shapes,
    edges referencing declared nodes."""
    import re

    assert text.startswith("digraph")
    depth = 0
    declared = set()
    edges = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.endswith("{"):
            depth += 1
            continue
        if line == "}":
            depth -= 1
            assert depth >= 0
            continue
        m = re.fullmatch(r"(n\d+)\s*\[label=\"(?:[^\"\\]|\\.)*\"\];", line)
        if m:
            declared.add(m.group(1))
            continue
        m = re.fullmatch(r"(n\d+)\s*->\s*(n\d+)(?:\s*\[[^\]]*\])?;", line)
        if m:
            edges.append((m.group(1), m.group(2)))
            continue
        m = re.fullmatch(r"label=\"(?:[^\"\\]|\\.)*\";", line)
        assert m, f"unrecognized DOT line: {raw!r}"
    assert depth == 0, "unbalanced braces"
    for a, b in edges:
        assert a in declared and b in declared, f"edge references unknown node {a}->{b}"


# ---------------------------------------------------------------- program gen

_GEN_OPS = (
    lambda r: f"sma $IN {round(r.uniform(0.5, 4), 2)}",
    lambda r: f"sd $IN {round(r.uniform(0.5, 4), 2)}",
    lambda r: f"range $IN {round(r.uniform(0.5, 4), 2)}",
    lambda r: f"count $IN {round(r.uniform(0.5, 4), 2)}",
    lambda r: f"tma $IN {round(r.uniform(0.5, 4), 2)}",
    lambda r: f"ema $IN {round(r.uniform(0.5, 4), 2)}",
    lambda r: f"normalize $IN {round(r.uniform(1, 4), 2)} type:meansd",
    lambda r: "derivative $IN",
    lambda r: f"delay $IN {round(r.uniform(0, 2), 2)}",
    lambda r: f"echoPast $IN {round(r.uniform(0.5, 2), 2)}",
    lambda r: 'eq $IN "value,2,*"',
    lambda r: 'eq $IN "value,time,+"',
    lambda r: 'passIf $IN "value,0,>"',
    lambda r: f"passIfFast $IN minValue:{round(r.uniform(-3, 0), 2)} "
              f"maxValue:{round(r.uniform(0, 3), 2)}",
    lambda r: f"skip $IN {round(r.uniform(0.5, 3), 2)}",
    lambda r: f"layer $IN thresholds:{round(r.uniform(-1, 1), 2)} output:"
              + r.choice(["up", "down"]),
    lambda r: f"active $IN {round(r.uniform(0.5, 3), 2)}",
    lambda r: f"sinceLast $IN {round(r.uniform(1, 6), 2)}",
    lambda r: 'filter $IN "c[0-2].*"',
)


def gen_program(rng: random.Random, n_ops: int = 6, allow_echo_past: bool = True
                ) -> str:
    """Random acyclic program over the implemented operator set."""
    lines = ["$all = echo #c.*"]
    variables = ["all"]
    for i in range(n_ops):
        while True:
            op = rng.choice(_GEN_OPS)(rng)
            if allow_echo_past or not op.startswith("echoPast"):
                break
        src = rng.choice(variables)
        op = op.replace("$IN", f"${src}")
        name = f"v{i}"
        if rng.random() < 0.25 and len(variables) > 1:
            target = rng.choice(variables[1:])
            lines.append(f"${target} += {op}")
        else:
            lines.append(f"${name} = {op}")
            variables.append(name)
    keep = [v for v in variables if rng.random() < 0.5] or variables[-1:]
    lines.append(f"$out = echo ${keep[0]}")
    for v in keep[1:]:
        lines.append(f"$out += echo ${v}")
    lines.append('save $out file:"o.evt"')
    return "\n".join(lines) + "\n"
