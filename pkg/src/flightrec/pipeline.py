"""Live dual-session loop: every event feeds the flight recorder, spec-named
events feed the light matcher, and anomalies (debounced by a trace-time
cooldown) flush a snapshot that is analyzed into a detailed report.

The raw slot region is copied synchronously at the anomaly event, pinning
snapshot contents to an exact trace position; decoding, file writes, the
report, and the external hook then run on a single worker thread so
ingestion is never blocked on disk.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .analyzer import AnalyzerConfig, analyze_events
from .config import Config
from .events import ParseError, StreamReorderer, parse_event_line
from .light import (
    Anomaly,
    Detector,
    RequestMatcher,
    RequestSpec,
    append_request_log,
    read_request_log,
    relative_overhead,
)
from .report import build_overview_model, render_detailed_text, render_overview
from .ring import (
    RingBuffer,
    RingView,
    SnapshotMeta,
    decode_view,
    flush_snapshot,
    snapshot_stem,
)

logger = logging.getLogger(__name__)

REQUEST_LOG_NAME = "requests.jsonl"
OVERVIEW_NAME = "overview.html"


@dataclass
class RunStats:
    """Summary of one live run, printed by the CLI and asserted by tests."""

    events: int = 0
    parse_errors: int = 0
    late_events: int = 0
    requests: int = 0
    anomalies: int = 0
    snapshots: int = 0
    suppressed_triggers: int = 0
    dropped_fields: int = 0
    elapsed_ns: int = 0
    ring_capacity: int = 0
    slots_footprint: int = 0
    total_footprint: int = 0
    mean_request_ns: int | None = None
    snapshot_stems: list[str] = field(default_factory=list)

    @property
    def per_event_ns(self) -> float | None:
        if self.events == 0:
            return None
        return self.elapsed_ns / self.events


def _run_hook(command: str, snapshot_path: Path) -> None:
    argv = shlex.split(command) + [str(snapshot_path)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except OSError as exc:
        logger.warning("on_anomaly_exec failed to start: %s", exc)
        return
    if proc.returncode != 0:
        logger.warning(
            "on_anomaly_exec exited %d: %s", proc.returncode, proc.stderr.strip()
        )


def _flush_and_analyze(
    view: RingView,
    anomaly: Anomaly,
    out_dir: Path,
    suppressed: int,
    yield_ratio: float,
    analyzer_config: AnalyzerConfig,
    hook: str | None,
) -> SnapshotMeta:
    meta = flush_snapshot(
        view, anomaly, out_dir, suppressed_triggers=suppressed, yield_ratio=yield_ratio
    )
    stem = snapshot_stem(meta.snapshot_path)
    report = analyze_events(decode_view(view), stem, meta, analyzer_config)
    render_detailed_text(report, out_dir / f"detailed_{stem}.txt")
    if hook:
        _run_hook(hook, meta.snapshot_path)
    return meta


def run_pipeline(config: Config, lines: Iterable[str], out_dir) -> RunStats:
    """Stream wire-format lines through both tracing levels.

    Per-event problems (parse failures, late events) are counted, never
    fatal. On input end the overview is rendered from the artifacts this
    run wrote into out_dir.
    """
    pipeline = config.pipeline
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ring = RingBuffer(pipeline.ring_capacity)
    matcher = RequestMatcher(pipeline.specs)
    detector = Detector(pipeline.detector)
    reorderer = StreamReorderer(pipeline.max_skew_ns)
    spec_by_label: dict[str, RequestSpec] = {s.label: s for s in pipeline.specs}

    stats = RunStats(ring_capacity=pipeline.ring_capacity)
    last_flush_ts: int | None = None
    suppressed_since_flush = 0
    pending: list[Future] = []
    duration_total = 0

    log_path = out_dir / REQUEST_LOG_NAME
    started = time.perf_counter_ns()
    with ThreadPoolExecutor(max_workers=1) as executor, open(
        log_path, "w", encoding="utf-8"
    ) as log_fh:

        def handle(e) -> None:
            nonlocal last_flush_ts, suppressed_since_flush, duration_total
            ring.record(e)
            completed = matcher.observe(e)
            if not completed:
                return
            append_request_log(log_fh, completed)
            stats.requests += len(completed)
            for record in completed:
                duration_total += record.duration
                anomaly = detector.check(spec_by_label[record.spec_label], record)
                if anomaly is None:
                    continue
                stats.anomalies += 1
                if (
                    last_flush_ts is not None
                    and anomaly.detected_at - last_flush_ts < pipeline.cooldown_ns
                ):
                    suppressed_since_flush += 1
                    stats.suppressed_triggers += 1
                    continue
                last_flush_ts = anomaly.detected_at
                view = ring.view()  # pin contents at the trigger position
                pending.append(
                    executor.submit(
                        _flush_and_analyze,
                        view,
                        anomaly,
                        out_dir,
                        suppressed_since_flush,
                        pipeline.flush_yield_ratio,
                        config.analyzer,
                        pipeline.on_anomaly_exec,
                    )
                )
                suppressed_since_flush = 0

        for line in lines:
            line = line.strip()
            if not line:
                continue
            try:
                event = parse_event_line(line)
            except ParseError:
                stats.parse_errors += 1
                continue
            stats.events += 1
            for released in reorderer.push(event):
                handle(released)
        for released in reorderer.finish():
            handle(released)

        for future in pending:
            meta = future.result()  # propagate flush/analyze failures
            stats.snapshots += 1
            stats.snapshot_stems.append(snapshot_stem(meta.snapshot_path))

    stats.elapsed_ns = time.perf_counter_ns() - started
    stats.late_events = reorderer.late_events
    stats.dropped_fields = ring.dropped_fields
    stats.slots_footprint = ring.slots_footprint
    stats.total_footprint = ring.footprint_bytes()
    if stats.requests:
        stats.mean_request_ns = duration_total // stats.requests

    if stats.requests:
        render_overview_from_dir(
            out_dir,
            thresholds={s.label: s.threshold_ns for s in pipeline.specs},
            bucket_width=pipeline.bucket_width_ns,
        )
    return stats


def render_overview_from_dir(out_dir, thresholds: dict[str, int], bucket_width: int) -> Path:
    """Build overview.html from the request log and snapshot metas in out_dir."""
    out_dir = Path(out_dir)
    records = read_request_log(out_dir / REQUEST_LOG_NAME)
    metas = [SnapshotMeta.load(p) for p in sorted(out_dir.glob("snapshot_*.meta.json"))]
    model = build_overview_model(records, thresholds, metas, bucket_width)
    return render_overview(model, out_dir / OVERVIEW_NAME)


def summary_lines(stats: RunStats) -> list[str]:
    """Human-readable run summary, including the measured tracing cost."""
    lines = [
        f"events ingested : {stats.events} "
        f"(parse errors {stats.parse_errors}, late {stats.late_events})",
        f"requests        : {stats.requests}  anomalies: {stats.anomalies}  "
        f"snapshots: {stats.snapshots}  suppressed: {stats.suppressed_triggers}",
        f"ring            : capacity={stats.ring_capacity} events, "
        f"slots={stats.slots_footprint} B, "
        f"total footprint={stats.total_footprint} B (incl. name table)",
    ]
    per_event = stats.per_event_ns
    if per_event is not None:
        lines.append(f"per-event cost  : {per_event:.1f} ns (measured over this run)")
        if stats.mean_request_ns:
            cost = max(1, int(per_event))
            per_event_ratio = relative_overhead(cost, 1, stats.mean_request_ns)
            per_request_ratio = relative_overhead(cost, 2, stats.mean_request_ns)
            lines.append(
                f"relative overhead: {float(per_event_ratio):.3g} per event, "
                f"{float(per_request_ratio):.3g} per request "
                f"(2 events/request, mean request "
                f"{stats.mean_request_ns / 1e6:.1f} ms)"
            )
    return lines
