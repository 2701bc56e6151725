"""Reading and writing datasets in the .evt and .csv text formats.

.evt: one record per line, ``channel;time[;value]``, '#' comment lines and
blank lines ignored.  .csv: ';'-separated, first header column ``time``,
``NA`` marks the absence of a record for that channel at that row.  Both
readers are incremental (one line at a time) and enforce non-decreasing
times per stream.
"""
from __future__ import annotations

import heapq
import math
import os
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .errors import HeaderError, IoError, OrderError, ParseError, PatternError
from .model import Record, validate_record


def format_number(x: float) -> str:
    """Shortest decimal text that parses back to the same double."""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _parse_float(text: str, what: str, source: str, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"malformed {what}: {text!r}", loc=_loc(source, lineno)) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite {what}: {text!r}", loc=_loc(source, lineno))
    return v


def _loc(source: str, lineno: int):
    from .errors import SourceLoc

    return SourceLoc(source, lineno)


# ----------------------------------------------------------------- .evt

def parse_evt_line(line: str, source: str = "<evt>", lineno: int = 0) -> Optional[Record]:
    """One .evt line -> Record, or None for blank/comment lines."""
    if not line.strip():
        return None
    if line[0] == "#":
        return None
    fields = line.rstrip("\r\n").split(";")
    if len(fields) not in (2, 3):
        raise ParseError(f"expected 2 or 3 ';'-separated fields, got {len(fields)}",
                         loc=_loc(source, lineno))
    channel = fields[0].strip()
    if not channel:
        raise ParseError("empty channel name", loc=_loc(source, lineno))
    time = _parse_float(fields[1].strip(), "time", source, lineno)
    value = None
    if len(fields) == 3:
        value = _parse_float(fields[2].strip(), "value", source, lineno)
    try:
        return validate_record(Record(channel, time, value))
    except ValueError as exc:
        raise ParseError(str(exc), loc=_loc(source, lineno)) from None


def read_evt(lines: Iterable[str], source: str = "<evt>", *,
             require_order: bool = True) -> Iterator[Record]:
    """Stream records from .evt lines in file order; times must not decrease
    unless ``require_order`` is off (the static-mode pre-sort path)."""
    last = -math.inf
    for lineno, line in enumerate(lines, start=1):
        rec = parse_evt_line(line, source, lineno)
        if rec is None:
            continue
        if require_order and rec.time < last:
            raise OrderError(
                f"record time {format_number(rec.time)} decreases below "
                f"{format_number(last)}", loc=_loc(source, lineno))
        last = rec.time
        yield rec


def format_evt_line(rec: Record) -> str:
    if rec.value is None:
        return f"{rec.channel};{format_number(rec.time)}"
    return f"{rec.channel};{format_number(rec.time)};{format_number(rec.value)}"


def write_evt(records: Iterable[Record], sink) -> int:
    """Write records as .evt lines in arrival order. Returns the line count."""
    n = 0
    try:
        for rec in records:
            sink.write(format_evt_line(rec) + "\n")
            n += 1
    except OSError as exc:
        raise IoError(f"write failed: {exc}") from exc
    return n


# ----------------------------------------------------------------- .csv

def read_csv(lines: Iterable[str], source: str = "<csv>", *,
             require_order: bool = True) -> Iterator[Record]:
    """Stream records from a synchronized .csv table, row by row.

    Each row yields one record per non-NA cell, left to right.
    """
    it = iter(lines)
    try:
        header_line = next(it)
    except StopIteration:
        return
    header = [h.strip() for h in header_line.rstrip("\r\n").split(";")]
    if not header or header[0] != "time":
        raise HeaderError(f"first column must be 'time', got {header[0]!r}",
                          loc=_loc(source, 1))
    channels = header[1:]
    width = len(header)
    last = -math.inf
    for lineno, line in enumerate(it, start=2):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.rstrip("\r\n").split(";")]
        if len(cells) != width:
            raise ParseError(f"expected {width} fields, got {len(cells)}",
                             loc=_loc(source, lineno))
        time = _parse_float(cells[0], "time", source, lineno)
        if require_order and time < last:
            raise OrderError(f"row time {format_number(time)} decreases",
                             loc=_loc(source, lineno))
        last = time
        for channel, cell in zip(channels, cells[1:]):
            if cell == "NA":
                continue
            value = _parse_float(cell, "value", source, lineno)
            try:
                yield validate_record(Record(channel, time, value))
            except ValueError as exc:
                raise ParseError(str(exc), loc=_loc(source, lineno)) from None


class CsvSyncWriter:
    """Buffer records, synchronize them on timestamps, and flush csv files.

    Without triggers a single file (the pattern itself) is written when
    closed.  With triggers, each flush writes the buffered rows with time up
    to the trigger into a fresh file; ``<index>`` in the pattern is replaced
    by the 0-based flush count.  Records carrying no value are written "NA"
    (the csv format cannot represent value-less records).
    """

    def __init__(self, pattern: str, open_sink, columns: Optional[Sequence[str]] = None):
        self.pattern = pattern
        self.open_sink = open_sink
        self.columns: List[str] = list(columns) if columns else []
        self._fixed_columns = columns is not None
        self.rows: Dict[float, Dict[str, float]] = {}
        self.flush_count = 0
        self.files_written: List[str] = []

    def add(self, rec: Record) -> None:
        if not self._fixed_columns and rec.channel not in self.columns:
            self.columns.append(rec.channel)
        row = self.rows.get(rec.time)
        if row is None:
            row = self.rows[rec.time] = {}
        row[rec.channel] = rec.value

    def buffered(self) -> int:
        return sum(len(r) for r in self.rows.values())

    def _target_path(self) -> str:
        if "<index>" in self.pattern:
            return self.pattern.replace("<index>", str(self.flush_count))
        if self.flush_count > 0:
            raise PatternError(
                f"pattern {self.pattern!r} lacks '<index>' but a second flush "
                "would overwrite the first file")
        return self.pattern

    def flush(self, up_to: Optional[float] = None) -> Optional[str]:
        """Write buffered rows (time <= up_to, or all) to the next file."""
        if up_to is None:
            times = sorted(self.rows)
        else:
            times = sorted(t for t in self.rows if t <= up_to)
        path = self._target_path()
        sink = self.open_sink(path)
        try:
            header = "time;" + ";".join(self.columns) if self.columns else "time"
            sink.write(header + "\n")
            for t in times:
                row = self.rows.pop(t)
                cells = [format_number(t)]
                for ch in self.columns:
                    v = row.get(ch, None)
                    cells.append("NA" if v is None else format_number(v))
                sink.write(";".join(cells) + "\n")
        finally:
            close = getattr(sink, "close", None)
            if close:
                close()
        self.flush_count += 1
        self.files_written.append(path)
        return path

    def close(self) -> None:
        """Final flush: remaining rows, or a header-only file if none were
        ever flushed."""
        if self.rows or self.flush_count == 0:
            self.flush()


def write_csv_synced(records: Iterable[Record], columns: Optional[Sequence[str]],
                     pattern: str, trigger_times: Optional[Sequence[float]] = None,
                     open_sink=None) -> List[str]:
    """Materialized form of :class:`CsvSyncWriter` for whole-stream writes."""
    if open_sink is None:
        open_sink = lambda path: open(path, "w", encoding="utf-8")
    writer = CsvSyncWriter(pattern, open_sink, columns)
    triggers = sorted(trigger_times) if trigger_times else []
    ti = 0
    for rec in records:
        while ti < len(triggers) and triggers[ti] < rec.time:
            writer.flush(up_to=triggers[ti])
            ti += 1
        writer.add(rec)
    while ti < len(triggers):
        writer.flush(up_to=triggers[ti])
        ti += 1
    if writer.rows or writer.flush_count == 0:
        writer.flush()
    return writer.files_written


# ----------------------------------------------------------------- sources

def merge_streams(streams: Sequence[Iterable[Record]]) -> Iterator[Record]:
    """Time-ordered k-way merge; ties go to the earlier stream, then arrival."""
    def keyed(idx: int, stream: Iterable[Record]):
        for seq, rec in enumerate(stream):
            yield (rec.time, idx, seq, rec)

    for _, _, _, rec in heapq.merge(*(keyed(i, s) for i, s in enumerate(streams))):
        yield rec


def group_by_time(records: Iterable[Record]) -> Iterator[Tuple[float, List[Record]]]:
    """Group a time-ordered record stream into (time, records) batches."""
    group: List[Record] = []
    t = None
    for rec in records:
        if t is None or rec.time == t:
            group.append(rec)
            t = rec.time
        else:
            yield t, group
            group = [rec]
            t = rec.time
    if group:
        yield t, group


def open_records(path: str) -> Iterator[Record]:
    """Record stream for a dataset path; format chosen by extension."""
    def gen():
        with open(path, "r", encoding="utf-8") as fh:
            reader = read_csv if path.endswith(".csv") else read_evt
            yield from reader(fh, source=os.path.basename(path))

    return gen()
