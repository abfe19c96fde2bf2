"""Post-mortem analysis of a snapshot: top-N tables, histograms, statistics.

All operations are pure functions over a parsed event list. Sort orders are
total (value descending, then label ascending) so identical snapshots always
produce identical reports. Work cut off by the snapshot window edge is kept,
closed at the window's last timestamp, and flagged rather than dropped: the
slow outliers under investigation are exactly the ones a bounded window
tends to cut.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .events import Event, read_snapshot
from .light import RequestMatcher, RequestSpec
from .ring import SnapshotMeta, snapshot_stem
from .units import fmt_duration

SYSCALL_ENTRY_PREFIX = "syscall_entry_"
SYSCALL_EXIT_PREFIX = "syscall_exit_"
IO_ISSUE = "block_rq_issue"
IO_COMPLETE = "block_rq_complete"
IRQ_ENTRY = "irq_handler_entry"
IRQ_EXIT = "irq_handler_exit"

DEFAULT_TOP_N = 10
DEFAULT_HIST_BASE_NS = 1_000  # 1 µs
DEFAULT_HIST_BUCKETS = 30  # powers of two up to ~18 minutes


class Unit(Enum):
    NS = "ns"
    COUNT = "count"
    BYTES = "bytes"


@dataclass(frozen=True)
class TopRow:
    label: str
    value: int
    share: float
    flagged: bool = False


@dataclass(frozen=True)
class TopNSection:
    title: str
    unit: Unit
    rows: tuple[TopRow, ...]
    n: int

    @property
    def no_data(self) -> bool:
        return not self.rows


@dataclass(frozen=True)
class LatencyHistogram:
    """Counts over geometric latency buckets: [0, base), [base*2^k, base*2^(k+1)), overflow."""

    title: str
    edges: tuple[int, ...]
    counts: tuple[int, ...]  # len(edges) + 1: underflow, inner buckets, overflow
    total: int
    min_latency: int | None
    max_latency: int | None

    @property
    def no_data(self) -> bool:
        return self.total == 0

    def bucket_bounds(self, i: int) -> tuple[int, int | None]:
        """(lo, hi) of counts[i]; hi is None for the overflow bucket."""
        lo = 0 if i == 0 else self.edges[i - 1]
        hi = self.edges[i] if i < len(self.edges) else None
        return lo, hi


@dataclass(frozen=True)
class CallRecord:
    """One paired entry/exit with inclusive duration."""

    func: str
    tid: int
    ts_entry: int
    ts_exit: int
    duration: int
    depth: int
    truncated: bool = False


@dataclass
class Diagnostics:
    """Counters for imperfect pairings, reported but never raised."""

    orphan_ends: int = 0
    abandoned_starts: int = 0
    unbalanced_calls: int = 0
    truncated_calls: int = 0
    unmatched_syscalls: int = 0
    truncated_syscalls: int = 0
    unmatched_io: int = 0
    unmatched_irq: int = 0
    truncated_irq: int = 0

    def as_pairs(self) -> list[tuple[str, int]]:
        return [
            ("orphan request ends", self.orphan_ends),
            ("abandoned request starts", self.abandoned_starts),
            ("unbalanced call exits", self.unbalanced_calls),
            ("truncated call frames", self.truncated_calls),
            ("unmatched syscalls", self.unmatched_syscalls),
            ("truncated syscalls", self.truncated_syscalls),
            ("unmatched io requests", self.unmatched_io),
            ("unmatched irq handlers", self.unmatched_irq),
            ("truncated irq handlers", self.truncated_irq),
        ]


def _section(title: str, unit: Unit, candidates: list[TopRow], n: int) -> TopNSection:
    total = sum(r.value for r in candidates)
    rows = sorted(candidates, key=lambda r: (-r.value, r.label))[:n]
    if total > 0:
        rows = [replace(r, share=r.value / total) for r in rows]
    return TopNSection(title=title, unit=unit, rows=tuple(rows), n=n)


def top_requests(
    events: Sequence[Event],
    spec: RequestSpec,
    n: int = DEFAULT_TOP_N,
    diag: Diagnostics | None = None,
    title: str | None = None,
) -> TopNSection:
    """The n longest completed requests of one spec, labeled by correlation key."""
    if n < 1:
        raise ValueError("n must be >= 1")
    diag = diag if diag is not None else Diagnostics()
    matcher = RequestMatcher([spec])
    records = []
    for e in events:
        records.extend(matcher.observe(e))
    diag.orphan_ends += matcher.orphan_ends
    diag.abandoned_starts += matcher.abandoned_starts
    candidates = [TopRow(label=r.key, value=r.duration, share=0.0) for r in records]
    return _section(title or f"Top requests: {spec.label}", Unit.NS, candidates, n)


def top_function_calls(
    events: Sequence[Event],
    entry_name: str,
    exit_name: str,
    n: int = DEFAULT_TOP_N,
    diag: Diagnostics | None = None,
) -> tuple[TopNSection, list[CallRecord]]:
    """Inclusive time per function via per-tid stack pairing of entry/exit events.

    An exit whose function does not match the top frame (or with an empty
    stack) is skipped and counted unbalanced. Frames still open at the end
    of the snapshot are closed at the last timestamp and flagged truncated.
    """
    diag = diag if diag is not None else Diagnostics()
    stacks: dict[int, list[tuple[str, int]]] = {}
    calls: list[CallRecord] = []
    ts_last = events[-1].ts if events else 0
    for e in events:
        if e.name == entry_name:
            func = e.fields.get("func")
            if isinstance(func, str):
                stacks.setdefault(e.tid, []).append((func, e.ts))
        elif e.name == exit_name:
            func = e.fields.get("func")
            stack = stacks.get(e.tid)
            if not stack or stack[-1][0] != func:
                diag.unbalanced_calls += 1
                continue
            entry_func, ts_entry = stack.pop()
            calls.append(
                CallRecord(
                    func=entry_func,
                    tid=e.tid,
                    ts_entry=ts_entry,
                    ts_exit=e.ts,
                    duration=e.ts - ts_entry,
                    depth=len(stack),
                )
            )
    for tid, stack in sorted(stacks.items()):
        while stack:
            depth = len(stack) - 1
            func, ts_entry = stack.pop()
            diag.truncated_calls += 1
            calls.append(
                CallRecord(
                    func=func,
                    tid=tid,
                    ts_entry=ts_entry,
                    ts_exit=ts_last,
                    duration=ts_last - ts_entry,
                    depth=depth,
                    truncated=True,
                )
            )
    totals: dict[str, int] = {}
    flagged: set[str] = set()
    for c in calls:
        totals[c.func] = totals.get(c.func, 0) + c.duration
        if c.truncated:
            flagged.add(c.func)
    candidates = [
        TopRow(label=func, value=total, share=0.0, flagged=func in flagged)
        for func, total in totals.items()
    ]
    return _section("Top function calls", Unit.NS, candidates, n), calls


def top_queries(
    events: Sequence[Event],
    spec: RequestSpec,
    n: int = DEFAULT_TOP_N,
    statement_field: str = "statement",
    diag: Diagnostics | None = None,
) -> TopNSection:
    """Like top_requests for the query layer, labeled by the query statement."""
    if n < 1:
        raise ValueError("n must be >= 1")
    diag = diag if diag is not None else Diagnostics()
    statements: dict[str, str] = {}
    matcher = RequestMatcher([spec])
    records = []
    for e in events:
        if e.name == spec.start_name:
            stmt = e.fields.get(statement_field)
            if isinstance(stmt, str):
                key = (
                    str(e.fields.get(spec.correlation_key))
                    if spec.correlation_key is not None and spec.correlation_key in e.fields
                    else None
                )
                if key is not None:
                    statements[key] = stmt
        records.extend(matcher.observe(e))
    diag.orphan_ends += matcher.orphan_ends
    diag.abandoned_starts += matcher.abandoned_starts
    candidates = [
        TopRow(label=statements.get(r.key, r.key)[:120], value=r.duration, share=0.0)
        for r in records
    ]
    return _section("Top DB queries", Unit.NS, candidates, n)


def io_distribution(
    events: Sequence[Event],
    base_ns: int = DEFAULT_HIST_BASE_NS,
    num_buckets: int = DEFAULT_HIST_BUCKETS,
    diag: Diagnostics | None = None,
) -> LatencyHistogram:
    """Completion-latency histogram of block I/O issue/complete pairs."""
    diag = diag if diag is not None else Diagnostics()
    pending: dict[object, list[int]] = {}
    latencies: list[int] = []
    for e in events:
        if e.name == IO_ISSUE:
            rq = e.fields.get("rq")
            if rq is not None:
                pending.setdefault(rq, []).append(e.ts)
        elif e.name == IO_COMPLETE:
            rq = e.fields.get("rq")
            queue = pending.get(rq)
            if not queue:
                diag.unmatched_io += 1
                continue
            latencies.append(e.ts - queue.pop(0))
            if not queue:
                del pending[rq]
    diag.unmatched_io += sum(len(q) for q in pending.values())
    return build_histogram("I/O request latency distribution", latencies, base_ns, num_buckets)


def build_histogram(
    title: str, latencies: Iterable[int], base_ns: int, num_buckets: int
) -> LatencyHistogram:
    if base_ns < 1 or num_buckets < 1:
        raise ValueError("base_ns and num_buckets must be >= 1")
    edges = tuple(base_ns << k for k in range(num_buckets + 1))
    counts = [0] * (len(edges) + 1)
    total = 0
    lo = hi = None
    for lat in latencies:
        total += 1
        lo = lat if lo is None or lat < lo else lo
        hi = lat if hi is None or lat > hi else hi
        if lat < edges[0]:
            counts[0] += 1
        elif lat >= edges[-1]:
            counts[-1] += 1
        else:
            # Highest k with edges[k] <= lat; bucket i = k+1.
            counts[1 + (lat // base_ns).bit_length() - 1] += 1
    return LatencyHistogram(
        title=title,
        edges=edges,
        counts=tuple(counts),
        total=total,
        min_latency=lo,
        max_latency=hi,
    )


def syscall_stats(
    events: Sequence[Event],
    n: int = DEFAULT_TOP_N,
    diag: Diagnostics | None = None,
) -> TopNSection:
    """Top syscall names by total duration; call counts rendered in the label.

    Entry/exit are paired per (tid, syscall name) at depth one: a repeated
    entry replaces the outstanding one (counted unmatched), and entries
    still open at the snapshot edge are excluded from totals.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    diag = diag if diag is not None else Diagnostics()
    open_entries: dict[tuple[int, str], int] = {}
    totals: dict[str, int] = {}
    call_counts: dict[str, int] = {}
    for e in events:
        if e.name.startswith(SYSCALL_ENTRY_PREFIX):
            key = (e.tid, e.name[len(SYSCALL_ENTRY_PREFIX):])
            if key in open_entries:
                diag.unmatched_syscalls += 1
            open_entries[key] = e.ts
        elif e.name.startswith(SYSCALL_EXIT_PREFIX):
            key = (e.tid, e.name[len(SYSCALL_EXIT_PREFIX):])
            ts_entry = open_entries.pop(key, None)
            if ts_entry is None:
                diag.unmatched_syscalls += 1
                continue
            name = key[1]
            totals[name] = totals.get(name, 0) + (e.ts - ts_entry)
            call_counts[name] = call_counts.get(name, 0) + 1
    diag.truncated_syscalls += len(open_entries)
    candidates = [
        TopRow(label=f"{name} ({call_counts[name]} calls)", value=total, share=0.0)
        for name, total in totals.items()
    ]
    return _section("Top system calls", Unit.NS, candidates, n)


def irq_stats(events: Sequence[Event], diag: Diagnostics | None = None) -> TopNSection:
    """Per-interrupt-line handler counts, busiest first, total time in the label."""
    diag = diag if diag is not None else Diagnostics()
    stacks: dict[int, list[tuple[object, int]]] = {}
    counts: dict[object, int] = {}
    totals: dict[object, int] = {}
    for e in events:
        if e.name == IRQ_ENTRY:
            irq = e.fields.get("irq")
            if irq is not None:
                stacks.setdefault(e.tid, []).append((irq, e.ts))
        elif e.name == IRQ_EXIT:
            irq = e.fields.get("irq")
            stack = stacks.get(e.tid)
            if not stack or stack[-1][0] != irq:
                diag.unmatched_irq += 1
                continue
            _, ts_entry = stack.pop()
            counts[irq] = counts.get(irq, 0) + 1
            totals[irq] = totals.get(irq, 0) + (e.ts - ts_entry)
    diag.truncated_irq += sum(len(s) for s in stacks.values())
    candidates = [
        TopRow(
            label=f"irq {irq} (total {fmt_duration(totals[irq])})",
            value=count,
            share=0.0,
        )
        for irq, count in counts.items()
    ]
    return _section("Interrupt statistics", Unit.COUNT, candidates, n=len(candidates) or 1)


@dataclass(frozen=True)
class AnalyzerConfig:
    """Which event vocabulary the detailed report is computed over."""

    request_layers: tuple[RequestSpec, ...] = (
        RequestSpec(
            label="apache",
            start_name="apache_request_received",
            end_name="apache_request_handled",
            correlation_key="req_id",
        ),
        RequestSpec(
            label="php",
            start_name="php_request_start",
            end_name="php_request_end",
            correlation_key="req_id",
        ),
    )
    func_entry: str = "func_entry"
    func_exit: str = "func_exit"
    query_spec: RequestSpec = RequestSpec(
        label="db",
        start_name="db_query_start",
        end_name="db_query_end",
        correlation_key="query_id",
    )
    statement_field: str = "statement"
    top_n: int = DEFAULT_TOP_N
    histogram_base_ns: int = DEFAULT_HIST_BASE_NS
    histogram_buckets: int = DEFAULT_HIST_BUCKETS


@dataclass(frozen=True)
class ReportHeader:
    stem: str
    trigger_spec: str | None
    trigger_key: str | None
    trigger_duration: int | None
    flushed_at: int | None
    event_count: int
    ts_first: int | None
    ts_last: int | None
    observed_event_rate: float | None
    dropped_fields: int | None
    suppressed_triggers: int | None
    meta_missing: bool


@dataclass(frozen=True)
class DetailedReport:
    header: ReportHeader
    request_sections: tuple[TopNSection, ...]
    function_section: TopNSection
    call_records: tuple[CallRecord, ...]
    query_section: TopNSection
    io_histogram: LatencyHistogram
    syscall_section: TopNSection
    irq_section: TopNSection
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def analyze_events(
    events: Sequence[Event],
    stem: str,
    meta: SnapshotMeta | None,
    config: AnalyzerConfig | None = None,
) -> DetailedReport:
    config = config or AnalyzerConfig()
    diag = Diagnostics()
    ts_first = events[0].ts if events else None
    ts_last = events[-1].ts if events else None
    header = ReportHeader(
        stem=stem,
        trigger_spec=meta.trigger_spec if meta else None,
        trigger_key=meta.trigger_key if meta else None,
        trigger_duration=meta.trigger_duration if meta else None,
        flushed_at=meta.flushed_at if meta else None,
        event_count=len(events),
        ts_first=ts_first,
        ts_last=ts_last,
        observed_event_rate=meta.observed_event_rate if meta else None,
        dropped_fields=meta.dropped_fields if meta else None,
        suppressed_triggers=meta.suppressed_triggers if meta else None,
        meta_missing=meta is None,
    )
    request_sections = tuple(
        top_requests(events, spec, config.top_n, diag) for spec in config.request_layers
    )
    function_section, calls = top_function_calls(
        events, config.func_entry, config.func_exit, config.top_n, diag
    )
    query_section = top_queries(
        events, config.query_spec, config.top_n, config.statement_field, diag
    )
    io_hist = io_distribution(events, config.histogram_base_ns, config.histogram_buckets, diag)
    syscall_section = syscall_stats(events, config.top_n, diag)
    irq_section = irq_stats(events, diag)
    return DetailedReport(
        header=header,
        request_sections=request_sections,
        function_section=function_section,
        call_records=tuple(calls),
        query_section=query_section,
        io_histogram=io_hist,
        syscall_section=syscall_section,
        irq_section=irq_section,
        diagnostics=diag,
    )


def build_detailed_report(
    snapshot_path,
    meta: SnapshotMeta | None = None,
    config: AnalyzerConfig | None = None,
) -> DetailedReport:
    """Parse a snapshot file and assemble every report section in fixed order.

    meta=None runs degraded: header trigger fields are left unknown.
    """
    snapshot_path = Path(snapshot_path)
    stream = read_snapshot(snapshot_path)
    return analyze_events(stream.events, snapshot_stem(snapshot_path), meta, config)
