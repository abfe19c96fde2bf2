"""Light tracing level: start/end pairing, anomaly detection, duration series.

The matcher inspects only events named by the configured request specs, so
its cost is independent of how much unrelated traffic flows past it. A
request is matched by an explicit correlation field when the spec names
one, otherwise by per-(pid, tid) FIFO order.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict, deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import IO, Iterable

from .events import Event

# Open requests kept per spec; beyond this the oldest is abandoned so an
# indefinitely running session cannot grow without bound.
DEFAULT_MAX_OPEN = 65_536


@dataclass(frozen=True)
class RequestSpec:
    """A request delimited by a start and an end event name."""

    label: str
    start_name: str
    end_name: str
    correlation_key: str | None = None
    threshold_ns: int = 1_000_000_000

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("label must be non-empty")
        if self.start_name == self.end_name:
            raise ValueError("start_name and end_name must differ")
        if self.threshold_ns <= 0:
            raise ValueError("threshold_ns must be > 0")


@dataclass(frozen=True)
class RequestRecord:
    """One completed request with its measured duration."""

    spec_label: str
    key: str
    ts_start: int
    ts_end: int
    duration: int
    pid: int
    tid: int

    def __post_init__(self) -> None:
        if self.duration != self.ts_end - self.ts_start or self.duration < 0:
            raise ValueError("duration must equal ts_end - ts_start and be >= 0")

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "spec": self.spec_label,
                "key": self.key,
                "ts_start": self.ts_start,
                "ts_end": self.ts_end,
                "duration": self.duration,
                "pid": self.pid,
                "tid": self.tid,
            },
            separators=(",", ":"),
        )

    @staticmethod
    def from_json_line(line: str) -> "RequestRecord":
        d = json.loads(line)
        return RequestRecord(
            spec_label=d["spec"],
            key=d["key"],
            ts_start=d["ts_start"],
            ts_end=d["ts_end"],
            duration=d["duration"],
            pid=d.get("pid", 0),
            tid=d.get("tid", 0),
        )


class AnomalyRule(Enum):
    THRESHOLD = "threshold"
    STATISTICAL = "statistical"


@dataclass(frozen=True)
class Anomaly:
    """A completed request flagged as unusual, plus when it was detected."""

    request: RequestRecord
    detected_at: int
    rule: AnomalyRule


@dataclass(frozen=True)
class DurationBucket:
    start_ts: int
    count: int
    max_duration: int
    mean_duration: int


@dataclass(frozen=True)
class DurationSeries:
    spec_label: str
    bucket_width: int
    buckets: tuple[DurationBucket, ...]


@dataclass
class _Open:
    ts: int
    pid: int
    tid: int
    key: str
    token: int


class RequestMatcher:
    """Pairs start/end events into RequestRecords for a set of specs.

    Orphan ends and abandoned starts are counted diagnostics, never errors;
    a long-running monitor must survive imperfect traces.
    """

    def __init__(self, specs: Iterable[RequestSpec], max_open: int = DEFAULT_MAX_OPEN) -> None:
        self.specs = list(specs)
        if max_open < 1:
            raise ValueError("max_open must be >= 1")
        self._max_open = max_open
        self._starts: dict[str, list[RequestSpec]] = {}
        self._ends: dict[str, list[RequestSpec]] = {}
        for spec in self.specs:
            self._starts.setdefault(spec.start_name, []).append(spec)
            self._ends.setdefault(spec.end_name, []).append(spec)
        # Per spec label: open requests and their insertion order for eviction.
        self._open: dict[str, dict[tuple, deque[_Open]]] = {s.label: {} for s in self.specs}
        self._order: dict[str, OrderedDict[int, tuple]] = {s.label: OrderedDict() for s in self.specs}
        self._synth_seq: dict[tuple[str, int, int], int] = {}
        self._token = 0
        self.orphan_ends = 0
        self.abandoned_starts = 0

    def observe(self, e: Event) -> list[RequestRecord]:
        """Feed one event; return requests completed by it (usually 0 or 1)."""
        completed: list[RequestRecord] = []
        ends = self._ends.get(e.name)
        if ends:
            for spec in ends:
                rec = self._close(spec, e)
                if rec is not None:
                    completed.append(rec)
        starts = self._starts.get(e.name)
        if starts:
            for spec in starts:
                self._register(spec, e)
        return completed

    def open_count(self, label: str) -> int:
        return len(self._order[label])

    def _slot(self, spec: RequestSpec, e: Event) -> tuple:
        if spec.correlation_key is not None:
            value = e.fields.get(spec.correlation_key)
            if value is not None:
                return ("key", str(value))
        return ("fifo", e.pid, e.tid)

    def _register(self, spec: RequestSpec, e: Event) -> None:
        slot = self._slot(spec, e)
        opens = self._open[spec.label]
        order = self._order[spec.label]
        if slot[0] == "key":
            key = slot[1]
            queue = opens.get(slot)
            if queue:  # duplicate start under a live correlation value
                old = queue.popleft()
                del order[old.token]
                self.abandoned_starts += 1
        else:
            seq_key = (spec.label, e.pid, e.tid)
            seq = self._synth_seq.get(seq_key, 0)
            self._synth_seq[seq_key] = seq + 1
            key = f"{e.pid}:{e.tid}#{seq}"
            queue = opens.get(slot)
        if queue is None:
            queue = opens[slot] = deque()
        self._token += 1
        queue.append(_Open(ts=e.ts, pid=e.pid, tid=e.tid, key=key, token=self._token))
        order[self._token] = slot
        if len(order) > self._max_open:
            self._evict_oldest(spec.label)

    def _evict_oldest(self, label: str) -> None:
        token, slot = self._order[label].popitem(last=False)
        queue = self._open[label][slot]
        for i, entry in enumerate(queue):
            if entry.token == token:
                del queue[i]
                break
        if not queue:
            del self._open[label][slot]
        self.abandoned_starts += 1

    def _close(self, spec: RequestSpec, e: Event) -> RequestRecord | None:
        slot = self._slot(spec, e)
        queue = self._open[spec.label].get(slot)
        if not queue:
            self.orphan_ends += 1
            return None
        entry = queue.popleft()
        if not queue:
            del self._open[spec.label][slot]
        del self._order[spec.label][entry.token]
        return RequestRecord(
            spec_label=spec.label,
            key=entry.key,
            ts_start=entry.ts,
            ts_end=e.ts,
            duration=e.ts - entry.ts,
            pid=entry.pid,
            tid=entry.tid,
        )


@dataclass(frozen=True)
class DetectorConfig:
    enabled: bool = True
    statistical: bool = False
    k: float = 3.0
    window: int = 100

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")


class Detector:
    """Anomaly rules over completed requests.

    Threshold: strict exceedance of the spec threshold. Statistical
    (optional): duration above mean + k*stddev of the previous `window`
    completed requests of the same spec; never fires during warm-up.
    """

    def __init__(self, config: DetectorConfig | None = None) -> None:
        self.config = config or DetectorConfig()
        self._history: dict[str, deque[int]] = {}

    def check(self, spec: RequestSpec, r: RequestRecord) -> Anomaly | None:
        cfg = self.config
        if not cfg.enabled:
            return None
        if r.duration > spec.threshold_ns:
            return Anomaly(request=r, detected_at=r.ts_end, rule=AnomalyRule.THRESHOLD)
        if cfg.statistical:
            hist = self._history.setdefault(spec.label, deque(maxlen=cfg.window))
            fired = None
            if len(hist) >= cfg.window:
                mean = sum(hist) / len(hist)
                var = sum((d - mean) ** 2 for d in hist) / len(hist)
                if r.duration > mean + cfg.k * math.sqrt(var):
                    fired = Anomaly(
                        request=r, detected_at=r.ts_end, rule=AnomalyRule.STATISTICAL
                    )
            hist.append(r.duration)
            return fired
        return None


def detect(spec: RequestSpec, r: RequestRecord, detector: Detector) -> Anomaly | None:
    """Single-record convenience wrapper over Detector.check."""
    return detector.check(spec, r)


def bucketize(
    records: Iterable[RequestRecord], bucket_width: int, spec_label: str | None = None
) -> DurationSeries:
    """Aggregate completed requests into contiguous time buckets by ts_end.

    Per bucket: count, max duration, and mean duration (integer ns, rounded
    half up). Empty buckets between the first and last are materialized.
    """
    if bucket_width <= 0:
        raise ValueError("bucket_width must be > 0")
    records = list(records)
    if spec_label is None:
        spec_label = records[0].spec_label if records else ""
    if not records:
        return DurationSeries(spec_label=spec_label, bucket_width=bucket_width, buckets=())
    per_bucket: dict[int, list[int]] = {}
    for r in records:
        per_bucket.setdefault(r.ts_end // bucket_width, []).append(r.duration)
    lo = min(per_bucket)
    hi = max(per_bucket)
    buckets = []
    for idx in range(lo, hi + 1):
        durations = per_bucket.get(idx)
        if durations:
            total = sum(durations)
            n = len(durations)
            buckets.append(
                DurationBucket(
                    start_ts=idx * bucket_width,
                    count=n,
                    max_duration=max(durations),
                    mean_duration=(total + n // 2) // n,
                )
            )
        else:
            buckets.append(
                DurationBucket(idx * bucket_width, count=0, max_duration=0, mean_duration=0)
            )
    return DurationSeries(spec_label=spec_label, bucket_width=bucket_width, buckets=tuple(buckets))


def relative_overhead(
    per_event_cost_ns: int | Fraction,
    events_per_request: int,
    mean_duration_ns: int | Fraction,
) -> Fraction:
    """Tracing impact as (per-event cost x events per request) / mean duration.

    Exact rational arithmetic; e.g. (100 ns, 1, 200 ms) -> 5e-7.
    """
    if mean_duration_ns == 0:
        raise ZeroDivisionError("mean_duration_ns must be non-zero")
    if per_event_cost_ns <= 0 or events_per_request <= 0 or mean_duration_ns < 0:
        raise ValueError("all inputs must be > 0")
    return Fraction(per_event_cost_ns) * events_per_request / Fraction(mean_duration_ns)


def append_request_log(fh: IO[str], records: Iterable[RequestRecord]) -> None:
    for r in records:
        fh.write(r.to_json_line() + "\n")


def read_request_log(path) -> list[RequestRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RequestRecord.from_json_line(line))
    return records
