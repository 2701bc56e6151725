"""Core value types: records, flow graphs, and the graph algorithms on them.

A :class:`Record` is one timestamped observation on a named channel; it is
the atom that flows through pipes.  A :class:`FlowGraph` is the compiled
form of a program: operator nodes joined by directed pipes.  Both are
immutable after construction and safe to share between execution contexts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .errors import CycleError, SourceLoc


class Record(NamedTuple):
    channel: str
    time: float
    value: Optional[float] = None

    def numeric_value(self) -> float:
        """Value for arithmetic; a value-less record reads as 0.0."""
        return 0.0 if self.value is None else self.value


# Channel names must serialize to one .evt line and never be mistaken for a
# comment line, hence the leading-'#' restriction.
def validate_record(rec: Record) -> Record:
    ch = rec.channel
    if not ch or ";" in ch or "\n" in ch or "\r" in ch or ch[0] == "#":
        raise ValueError(f"invalid channel name: {ch!r}")
    if not math.isfinite(rec.time):
        raise ValueError(f"non-finite record time on channel {ch!r}")
    if rec.value is not None and not math.isfinite(rec.value):
        raise ValueError(f"non-finite record value on channel {ch!r}")
    return rec


def canonical_order(records: Sequence[Tuple[Record, int]]) -> List[Record]:
    """Sort (record, insertion-sequence) pairs into the one canonical stream.

    The ordering key (time, insertion sequence) is a total order, so any
    permutation of the same tagged records sorts to the same sequence.
    """
    return [rec for rec, _ in sorted(records, key=lambda pair: (pair[0].time, pair[1]))]


@dataclass(frozen=True)
class Pipe:
    src: int
    dst: int
    port: str = "in"
    dst_index: int = 0                # position among the consumer's input pipes
    recursive_back_edge: bool = False


@dataclass
class OperatorNode:
    id: int
    op_name: str
    params: Tuple = ()                # positional literals, resolved
    named_params: Dict[str, object] = field(default_factory=dict)
    selection: Optional[Tuple[str, str]] = None   # ("regex"|"literal", pattern) for source nodes
    group_path: Tuple[str, ...] = ()
    loc: Optional[SourceLoc] = None
    build_args: Dict[str, object] = field(default_factory=dict)  # operator-ready resolved values

    def label(self) -> str:
        parts = [self.op_name]
        if self.selection is not None:
            kind, pat = self.selection
            parts.append(f"#{pat}" if kind == "regex" else f'"{pat}"')
        parts.extend(str(p) for p in self.params)
        return " ".join(parts)


@dataclass
class FlowGraph:
    nodes: List[OperatorNode] = field(default_factory=list)
    pipes: List[Pipe] = field(default_factory=list)
    config: Dict[str, str] = field(default_factory=dict)
    cycles: List[List[int]] = field(default_factory=list)
    meta: Dict[str, object] = field(default_factory=dict)

    def node(self, node_id: int) -> OperatorNode:
        return self.nodes[node_id]

    def in_pipes(self, node_id: int) -> List[Pipe]:
        return [p for p in self.pipes if p.dst == node_id]

    def out_pipes(self, node_id: int) -> List[Pipe]:
        return [p for p in self.pipes if p.src == node_id]

    @property
    def has_cycles(self) -> bool:
        return bool(self.cycles)


def _forward_adjacency(graph: FlowGraph) -> Dict[int, List[int]]:
    adj: Dict[int, List[int]] = {n.id: [] for n in graph.nodes}
    for p in graph.pipes:
        if not p.recursive_back_edge:
            adj[p.src].append(p.dst)
    return adj


def topological_order(graph: FlowGraph) -> List[int]:
    """Node ids in a topological order of the graph without back edges.

    Deterministic: among ready nodes the smallest id goes first.  Raises
    :class:`CycleError` naming the nodes of a non-back-edge cycle.
    """
    import heapq

    adj = _forward_adjacency(graph)
    indeg = {nid: 0 for nid in adj}
    for src, dsts in adj.items():
        for d in dsts:
            indeg[d] += 1
    ready = [nid for nid, d in sorted(indeg.items()) if d == 0]
    heapq.heapify(ready)
    order: List[int] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for d in adj[nid]:
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(ready, d)
    if len(order) != len(adj):
        stuck = sorted(nid for nid, d in indeg.items() if d > 0)
        cycle = _find_one_cycle(adj, stuck)
        raise CycleError(f"cycle through nodes {cycle}")
    return order


def _find_one_cycle(adj: Dict[int, List[int]], candidates: List[int]) -> List[int]:
    cand = set(candidates)
    state: Dict[int, int] = {}
    stack: List[int] = []

    def visit(u: int) -> Optional[List[int]]:
        state[u] = 1
        stack.append(u)
        for v in adj[u]:
            if v not in cand:
                continue
            if state.get(v, 0) == 1:
                return stack[stack.index(v):]
            if state.get(v, 0) == 0:
                found = visit(v)
                if found is not None:
                    return found
        state[u] = 2
        stack.pop()
        return None

    for u in candidates:
        if state.get(u, 0) == 0:
            found = visit(u)
            if found is not None:
                return found
    return candidates  # unreachable for a true leftover set


def find_cycles(graph: FlowGraph) -> List[List[int]]:
    """All elementary cycles that contain at least one recursive back edge.

    Each cycle is a node-id list in traversal order, rotated to start at its
    smallest id.  Graphs without back edges yield an empty list.
    """
    adj: Dict[int, List[int]] = {n.id: [] for n in graph.nodes}
    for p in graph.pipes:
        adj[p.src].append(p.dst)
    back_edges = [(p.src, p.dst) for p in graph.pipes if p.recursive_back_edge]
    seen: set = set()
    cycles: List[List[int]] = []
    for b_src, b_dst in back_edges:
        # every simple path b_dst -> b_src closes a cycle through this edge
        for path in _simple_paths(adj, b_dst, b_src):
            cyc = _rotate_min(path)
            key = tuple(cyc)
            if key not in seen:
                seen.add(key)
                cycles.append(cyc)
    cycles.sort()
    return cycles


def _simple_paths(adj: Dict[int, List[int]], start: int, goal: int):
    """Yield every simple path start..goal (inclusive) as a node list."""
    if start == goal:
        # the back edge is a self loop
        yield [start]
        return
    path = [start]
    on_path = {start}

    def walk(u: int):
        for v in adj[u]:
            if v == goal:
                yield path + [goal]
                continue
            if v in on_path:
                continue
            path.append(v)
            on_path.add(v)
            yield from walk(v)
            path.pop()
            on_path.remove(v)

    yield from walk(start)


def _rotate_min(cycle: List[int]) -> List[int]:
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]
