"""Always-on in-memory flight recorder and its flush-to-disk snapshot.

Events are encoded into fixed 64-byte slots inside one preallocated byte
region, so the memory footprint is exactly capacity x 64 plus the name
table. Recording is infallible and never touches disk; a flush copies the
raw slot region under a brief lock and does all decoding and file I/O
outside it, in throttled batches, so the recording path keeps priority.

Slot layout (little-endian, 64 bytes):
    ts u64 | name u32 | pid u32 | tid u32 | source u8 | nfields u8 |
    ftags u8 | pad u8 | 4 x (key u16, value u64)
ftags holds two bits per stored field: 0 = non-negative int, 1 = negative
int (two's complement), 2 = interned string. Fields beyond the four inline
entries, and fields whose key id exceeds 16 bits, are dropped and counted.
"""

from __future__ import annotations

import json
import re
import struct
import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING

from .events import Event, NameTable, Source

if TYPE_CHECKING:
    from .light import Anomaly

SLOT_SIZE = 64
MAX_INLINE_FIELDS = 4
MAX_FIELD_KEY_ID = 0xFFFF
_U64 = 2**64
_I64_MIN = -(2**63)

_SLOT = struct.Struct("<QIIIBBBB" + "HQ" * MAX_INLINE_FIELDS)
assert _SLOT.size == SLOT_SIZE

_TAG_INT = 0
_TAG_NEG_INT = 1
_TAG_STR = 2

_SOURCE_CODE = {Source.KERNEL: 0, Source.USER: 1}
_SOURCE_FROM = {0: Source.KERNEL, 1: Source.USER}

# Flush encodes this many events per batch, then sleeps yield_ratio times
# the batch's own elapsed time so a concurrent recorder keeps the CPU.
FLUSH_BATCH = 8_192
DEFAULT_YIELD_RATIO = 1.0


class SnapshotError(Exception):
    """Flush precondition violated (e.g. empty buffer)."""


class FlushError(OSError):
    """Snapshot file I/O failed; .path points at the partial write."""

    def __init__(self, message: str, path: Path):
        super().__init__(message)
        self.path = path


@dataclass(frozen=True)
class RingView:
    """A consistent copy of the slot region, decodable outside any lock."""

    raw: bytes
    cursor: int
    capacity: int
    names: NameTable
    dropped_fields: int

    @property
    def event_count(self) -> int:
        return min(self.cursor, self.capacity)


class RingBuffer:
    """Fixed-capacity circular store of encoded events; overwrite is silent."""

    def __init__(self, capacity: int, names: NameTable | None = None) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.names = names if names is not None else NameTable()
        self._slots = bytearray(capacity * SLOT_SIZE)
        self._cursor = 0
        self._dropped_fields = 0
        self._lock = threading.Lock()

    @property
    def write_cursor(self) -> int:
        return self._cursor

    @property
    def event_count(self) -> int:
        return min(self._cursor, self.capacity)

    @property
    def dropped_fields(self) -> int:
        return self._dropped_fields

    @property
    def slots_footprint(self) -> int:
        return len(self._slots)

    def footprint_bytes(self) -> int:
        """Slot region plus name-table accounting."""
        return self.slots_footprint + self.names.footprint_bytes()

    def record(self, e: Event) -> None:
        """Encode one event into the next slot. Infallible; no file activity."""
        intern = self.names.intern
        name_id = intern(e.name)
        keys = [0] * MAX_INLINE_FIELDS
        values = [0] * MAX_INLINE_FIELDS
        ftags = 0
        stored = 0
        dropped = 0
        for k, v in e.fields.items():
            if stored == MAX_INLINE_FIELDS:
                dropped += 1
                continue
            key_id = intern(k)
            if key_id > MAX_FIELD_KEY_ID:
                dropped += 1
                continue
            if isinstance(v, str):
                tag = _TAG_STR
                value = intern(v)
            elif v >= 0:
                if v >= _U64:
                    dropped += 1
                    continue
                tag = _TAG_INT
                value = v
            else:
                if v < _I64_MIN:
                    dropped += 1
                    continue
                tag = _TAG_NEG_INT
                value = v + _U64
            keys[stored] = key_id
            values[stored] = value
            ftags |= tag << (2 * stored)
            stored += 1
        args = (
            e.ts,
            name_id,
            e.pid,
            e.tid,
            _SOURCE_CODE[e.source],
            stored,
            ftags,
            0,
            keys[0], values[0],
            keys[1], values[1],
            keys[2], values[2],
            keys[3], values[3],
        )
        with self._lock:
            offset = (self._cursor % self.capacity) * SLOT_SIZE
            _SLOT.pack_into(self._slots, offset, *args)
            self._cursor += 1
            self._dropped_fields += dropped

    def view(self) -> RingView:
        """Copy the raw slot region and cursor under brief exclusion."""
        with self._lock:
            return RingView(
                raw=bytes(self._slots),
                cursor=self._cursor,
                capacity=self.capacity,
                names=self.names,
                dropped_fields=self._dropped_fields,
            )

    def snapshot_events(self) -> list[Event]:
        """Decode the retained events in record order (oldest first)."""
        return decode_view(self.view())


def _decode_slot(view: RingView, logical_index: int) -> Event:
    offset = (logical_index % view.capacity) * SLOT_SIZE
    parts = _SLOT.unpack_from(view.raw, offset)
    ts, name_id, pid, tid, source, nfields, ftags = parts[:7]
    name_of = view.names.name_of
    fields: dict[str, str | int] = {}
    for i in range(nfields):
        tag = (ftags >> (2 * i)) & 3
        key = name_of(parts[8 + 2 * i])
        value = parts[9 + 2 * i]
        if tag == _TAG_STR:
            fields[key] = name_of(value)
        elif tag == _TAG_NEG_INT:
            fields[key] = value - _U64
        else:
            fields[key] = value
    return Event(
        ts=ts, source=_SOURCE_FROM[source], name=name_of(name_id),
        pid=pid, tid=tid, fields=fields,
    )


def decode_view(view: RingView) -> list[Event]:
    count = view.event_count
    first = view.cursor - count
    return [_decode_slot(view, i) for i in range(first, view.cursor)]


_SOURCE_STR = {0: Source.KERNEL.value, 1: Source.USER.value}


def _slot_to_line(view: RingView, logical_index: int) -> str:
    """Wire-format line straight from the slot; byte-identical to
    serialize_event(decode) but without Event construction."""
    parts = _SLOT.unpack_from(view.raw, (logical_index % view.capacity) * SLOT_SIZE)
    ts, name_id, pid, tid, source, nfields, ftags = parts[:7]
    name_of = view.names.name_of
    fields: dict[str, str | int] = {}
    for i in range(nfields):
        tag = (ftags >> (2 * i)) & 3
        value = parts[9 + 2 * i]
        if tag == _TAG_STR:
            fields[name_of(parts[8 + 2 * i])] = name_of(value)
        elif tag == _TAG_NEG_INT:
            fields[name_of(parts[8 + 2 * i])] = value - _U64
        else:
            fields[name_of(parts[8 + 2 * i])] = value
    return json.dumps(
        {
            "ts": ts,
            "src": _SOURCE_STR[source],
            "name": name_of(name_id),
            "pid": pid,
            "tid": tid,
            "fields": fields,
        },
        separators=(",", ":"),
        ensure_ascii=False,
    )


def _retained_timestamps(view: RingView) -> list[int]:
    count = view.event_count
    first = view.cursor - count
    raw = view.raw
    cap = view.capacity
    return [
        struct.unpack_from("<Q", raw, (i % cap) * SLOT_SIZE)[0]
        for i in range(first, view.cursor)
    ]


def sanitize_key(key: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "-", key)[:64] or "none"


def snapshot_name(flushed_at: int, spec_label: str, key: str) -> str:
    return f"snapshot_{flushed_at}_{sanitize_key(spec_label)}_{sanitize_key(key)}"


def snapshot_stem(snapshot_path) -> str:
    """'snapshot_123_apache_a1.jsonl' -> '123_apache_a1'."""
    name = Path(snapshot_path).name
    if name.endswith(".jsonl"):
        name = name[: -len(".jsonl")]
    if name.startswith("snapshot_"):
        name = name[len("snapshot_"):]
    return name


@dataclass(frozen=True)
class SnapshotMeta:
    """Sidecar describing one flushed snapshot."""

    trigger_spec: str
    trigger_key: str
    trigger_duration: int
    flushed_at: int
    event_count: int
    ts_first: int
    ts_last: int
    observed_event_rate: float | None
    dropped_fields: int
    suppressed_triggers: int
    snapshot_path: Path
    meta_path: Path

    def to_json(self) -> str:
        return json.dumps(
            {
                "trigger_spec": self.trigger_spec,
                "trigger_key": self.trigger_key,
                "trigger_duration_ns": self.trigger_duration,
                "flushed_at": self.flushed_at,
                "event_count": self.event_count,
                "ts_first": self.ts_first,
                "ts_last": self.ts_last,
                "observed_event_rate": self.observed_event_rate,
                "dropped_fields": self.dropped_fields,
                "suppressed_triggers": self.suppressed_triggers,
            },
            indent=2,
        )

    @staticmethod
    def load(meta_path) -> "SnapshotMeta":
        meta_path = Path(meta_path)
        with open(meta_path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        stem = meta_path.name[len("snapshot_"):-len(".meta.json")]
        return SnapshotMeta(
            trigger_spec=d["trigger_spec"],
            trigger_key=d["trigger_key"],
            trigger_duration=d["trigger_duration_ns"],
            flushed_at=d["flushed_at"],
            event_count=d["event_count"],
            ts_first=d["ts_first"],
            ts_last=d["ts_last"],
            observed_event_rate=d["observed_event_rate"],
            dropped_fields=d["dropped_fields"],
            suppressed_triggers=d["suppressed_triggers"],
            snapshot_path=meta_path.with_name(f"snapshot_{stem}.jsonl"),
            meta_path=meta_path,
        )


def flush_snapshot(
    buf: "RingBuffer | RingView",
    trigger: "Anomaly",
    out_dir,
    suppressed_triggers: int = 0,
    yield_ratio: float = DEFAULT_YIELD_RATIO,
) -> SnapshotMeta:
    """Write the retained events, ts-ordered, to a snapshot file plus meta.

    The buffer is not cleared: closely spaced anomalies may flush
    overlapping windows. Accepts a RingView copied earlier so callers can
    pin the snapshot to an exact trace position before handing off to a
    worker thread.
    """
    view = buf.view() if isinstance(buf, RingBuffer) else buf
    if view.event_count == 0:
        raise SnapshotError("cannot flush an empty buffer")
    out_dir = Path(out_dir)
    flushed_at = trigger.detected_at
    stem = snapshot_name(flushed_at, trigger.request.spec_label, trigger.request.key)
    snap_path = out_dir / f"{stem}.jsonl"
    meta_path = out_dir / f"{stem}.meta.json"

    timestamps = _retained_timestamps(view)
    first_logical = view.cursor - view.event_count
    order = range(len(timestamps))
    if any(timestamps[i] > timestamps[i + 1] for i in range(len(timestamps) - 1)):
        order = sorted(order, key=timestamps.__getitem__)
    ts_first = min(timestamps)
    ts_last = max(timestamps)

    try:
        with open(snap_path, "w", encoding="utf-8") as fh:
            batch: list[str] = []
            started = time.monotonic()
            for n, idx in enumerate(order, start=1):
                batch.append(_slot_to_line(view, first_logical + idx))
                if n % FLUSH_BATCH == 0:
                    fh.write("\n".join(batch) + "\n")
                    batch.clear()
                    elapsed = time.monotonic() - started
                    if yield_ratio > 0:
                        time.sleep(elapsed * yield_ratio)
                    started = time.monotonic()
            if batch:
                fh.write("\n".join(batch) + "\n")
    except OSError as exc:
        raise FlushError(f"snapshot write failed: {exc}", snap_path) from exc

    span = ts_last - ts_first
    rate = None
    if view.event_count >= 2 and span > 0:
        rate = float(Fraction((view.event_count - 1) * 1_000_000_000, span))
    meta = SnapshotMeta(
        trigger_spec=trigger.request.spec_label,
        trigger_key=trigger.request.key,
        trigger_duration=trigger.request.duration,
        flushed_at=flushed_at,
        event_count=view.event_count,
        ts_first=ts_first,
        ts_last=ts_last,
        observed_event_rate=rate,
        dropped_fields=view.dropped_fields,
        suppressed_triggers=suppressed_triggers,
        snapshot_path=snap_path,
        meta_path=meta_path,
    )
    try:
        with open(meta_path, "w", encoding="utf-8") as fh:
            fh.write(meta.to_json() + "\n")
    except OSError as exc:
        raise FlushError(f"meta write failed: {exc}", meta_path) from exc
    return meta


def window_duration(capacity: int, event_rate: int | float | Fraction) -> Fraction:
    """Retention span of a ring: capacity / event rate, exact, in seconds."""
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    if event_rate <= 0:
        raise ZeroDivisionError("event_rate must be > 0")
    return Fraction(capacity) / Fraction(event_rate)


def observed_event_rate(buf: RingBuffer | RingView) -> Fraction:
    """Measured events per second over the retained window, interval-based.

    n events spanning (ts_last - ts_first) ns hold n-1 inter-event
    intervals, so 11 events spaced 1 ms apart measure exactly 1000/s.
    """
    view = buf.view() if isinstance(buf, RingBuffer) else buf
    if view.event_count < 2:
        raise SnapshotError("need >= 2 events to observe a rate")
    timestamps = _retained_timestamps(view)
    span = max(timestamps) - min(timestamps)
    if span == 0:
        raise SnapshotError("zero time span; rate undefined")
    return Fraction((view.event_count - 1) * 1_000_000_000, span)
