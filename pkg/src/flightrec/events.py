"""Trace event data model and the JSON Lines wire format.

One event per line, UTF-8. Required keys: ts (unsigned ns), src
("kernel"|"user"), name, pid, tid, fields (string -> string|integer).
Unknown top-level keys are rejected so corpus files stay canonical.
Field values are limited to strings and 64-bit integers; no floats
anywhere in an event, which keeps downstream arithmetic exact.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

MAX_U32 = 2**32 - 1
MAX_U64 = 2**64 - 1
MIN_I64 = -(2**63)

# Bounded reorder window for near-sorted multi-CPU streams.
DEFAULT_MAX_SKEW_NS = 1_000_000


class ParseError(ValueError):
    """A wire-format record is malformed; the message names the offending field."""


class RangeError(ParseError):
    """A numeric wire value is outside its permitted range."""


class Source(Enum):
    KERNEL = "kernel"
    USER = "user"


@dataclass(frozen=True)
class Event:
    """One timestamped trace record. Immutable after construction."""

    ts: int
    source: Source
    name: str
    pid: int
    tid: int
    fields: dict[str, str | int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.ts <= MAX_U64:
            raise RangeError(f"ts {self.ts} outside [0, 2^64)")
        if not self.name:
            raise ParseError("name must be non-empty")
        if not 0 <= self.pid <= MAX_U32:
            raise RangeError(f"pid {self.pid} outside [0, 2^32)")
        if not 0 <= self.tid <= MAX_U32:
            raise RangeError(f"tid {self.tid} outside [0, 2^32)")


class NameTable:
    """Bidirectional string <-> dense integer id map, first-seen order, ids from 0."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, name: str) -> int:
        ident = self._ids.get(name)
        if ident is None:
            ident = len(self._names)
            self._ids[name] = ident
            self._names.append(name)
        return ident

    def name_of(self, ident: int) -> str:
        return self._names[ident]

    def __len__(self) -> int:
        return len(self._names)

    def footprint_bytes(self) -> int:
        # Documented accounting estimate: utf-8 payload plus per-entry
        # overhead for the two directions of the mapping.
        return sum(len(n.encode()) + 64 for n in self._names)


@dataclass
class TraceStream:
    """A ts-ordered sequence of events plus ingest diagnostics."""

    events: list[Event]
    epoch: int = 0  # wall-clock anchor of ts=0, informational only
    late_events: int = 0


_REQUIRED_KEYS = ("ts", "src", "name", "pid", "tid", "fields")
_SOURCES = {"kernel": Source.KERNEL, "user": Source.USER}


def _reject_floats(_s: str) -> float:
    raise ParseError("floating-point values are not allowed in events")


def _no_duplicate_keys(pairs: list[tuple[str, object]]) -> dict:
    d = dict(pairs)
    if len(d) != len(pairs):
        seen: set[str] = set()
        for k, _ in pairs:
            if k in seen:
                raise ParseError(f"duplicate key {k!r}")
            seen.add(k)
    return d


def _require_int(obj: object, key: str, lo: int, hi: int) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise ParseError(f"{key} must be an integer")
    if not lo <= obj <= hi:
        raise RangeError(f"{key} {obj} outside [{lo}, {hi}]")
    return obj


def parse_event_line(line: str) -> Event:
    """Decode one wire-format line into an Event, strictly."""
    try:
        raw = json.loads(
            line, parse_float=_reject_floats, object_pairs_hook=_no_duplicate_keys
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError("record must be a JSON object")
    for key in raw:
        if key not in _REQUIRED_KEYS:
            raise ParseError(f"unknown key {key!r}")
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ParseError(f"missing key {key!r}")

    ts = _require_int(raw["ts"], "ts", 0, MAX_U64)
    src = raw["src"]
    if src not in _SOURCES:
        raise ParseError(f"src must be \"kernel\" or \"user\", got {src!r}")
    name = raw["name"]
    if not isinstance(name, str) or not name:
        raise ParseError("name must be a non-empty string")
    pid = _require_int(raw["pid"], "pid", 0, MAX_U32)
    tid = _require_int(raw["tid"], "tid", 0, MAX_U32)

    fields_raw = raw["fields"]
    if not isinstance(fields_raw, dict):
        raise ParseError("fields must be an object")
    fields: dict[str, str | int] = {}
    for k, v in fields_raw.items():
        if not isinstance(k, str):
            raise ParseError("fields keys must be strings")
        if isinstance(v, str):
            fields[k] = v
        elif isinstance(v, bool):
            raise ParseError(f"fields.{k} must be a string or integer")
        elif isinstance(v, int):
            fields[k] = _require_int(v, f"fields.{k}", MIN_I64, MAX_U64)
        else:
            raise ParseError(f"fields.{k} must be a string or integer")
    return Event(ts=ts, source=_SOURCES[src], name=name, pid=pid, tid=tid, fields=fields)


def serialize_event(e: Event) -> str:
    """Encode an Event as one wire-format line; field key order is preserved."""
    return json.dumps(
        {
            "ts": e.ts,
            "src": e.source.value,
            "name": e.name,
            "pid": e.pid,
            "tid": e.tid,
            "fields": e.fields,
        },
        separators=(",", ":"),
        ensure_ascii=False,
    )


class StreamReorderer:
    """Bounded reorder window over a near-sorted event stream.

    Events out of order by at most max_skew relative to the running maximum
    timestamp are buffered and released in ts order. Older events are
    rejected and counted, never raised.
    """

    def __init__(self, max_skew: int = DEFAULT_MAX_SKEW_NS) -> None:
        if max_skew < 0:
            raise ValueError("max_skew must be >= 0")
        self.max_skew = max_skew
        self.late_events = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._max_ts = -1

    def push(self, e: Event) -> list[Event]:
        """Accept one event; return any events now safe to release, in ts order."""
        if self._max_ts >= 0 and e.ts < self._max_ts - self.max_skew:
            self.late_events += 1
            return []
        heapq.heappush(self._heap, (e.ts, self._seq, e))
        self._seq += 1
        if e.ts > self._max_ts:
            self._max_ts = e.ts
        released: list[Event] = []
        horizon = self._max_ts - self.max_skew
        while self._heap and self._heap[0][0] <= horizon:
            released.append(heapq.heappop(self._heap)[2])
        return released

    def finish(self) -> list[Event]:
        """Drain the remaining window at end of input."""
        out = [heapq.heappop(self._heap)[2] for _ in range(len(self._heap))]
        return out


def iter_event_lines(lines: Iterable[str]) -> Iterator[Event]:
    for line in lines:
        line = line.strip()
        if line:
            yield parse_event_line(line)


def ingest_stream(lines: Iterable[str], max_skew: int = DEFAULT_MAX_SKEW_NS) -> TraceStream:
    """Parse wire-format lines into a ts-ordered TraceStream.

    Parse errors propagate (strict); late events are dropped and counted in
    the returned stream's late_events.
    """
    reorderer = StreamReorderer(max_skew)
    events: list[Event] = []
    for e in iter_event_lines(lines):
        events.extend(reorderer.push(e))
    events.extend(reorderer.finish())
    return TraceStream(events=events, late_events=reorderer.late_events)


def read_snapshot(path) -> TraceStream:
    """Read a snapshot file (already ts-ordered on disk); strict per line.

    Raises ParseError with the 1-based line number of the first corrupt line.
    """
    events: list[Event] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(parse_event_line(line))
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return TraceStream(events=events)
