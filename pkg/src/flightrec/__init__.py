"""flightrec: two-level request tracing at desk scale.

A light always-on session pairs request start/end events and watches for
over-threshold latencies; a parallel in-memory flight recorder keeps every
event in a fixed circular buffer and flushes a snapshot to disk when an
anomaly fires. A post-mortem analyzer turns snapshots into top-N reports,
and an overview chart links each anomaly to its detailed report.
"""

from .analyzer import (
    AnalyzerConfig,
    CallRecord,
    DetailedReport,
    Diagnostics,
    LatencyHistogram,
    TopNSection,
    analyze_events,
    build_detailed_report,
    io_distribution,
    irq_stats,
    syscall_stats,
    top_function_calls,
    top_queries,
    top_requests,
)
from .config import Config, ConfigError, PipelineConfig, load_config
from .events import (
    Event,
    NameTable,
    ParseError,
    RangeError,
    Source,
    StreamReorderer,
    TraceStream,
    ingest_stream,
    parse_event_line,
    serialize_event,
)
from .light import (
    Anomaly,
    AnomalyRule,
    Detector,
    DetectorConfig,
    DurationSeries,
    RequestMatcher,
    RequestRecord,
    RequestSpec,
    bucketize,
    detect,
    relative_overhead,
)
from .pipeline import RunStats, run_pipeline
from .report import OverviewModel, build_overview_model, render_detailed_text, render_overview
from .ring import (
    FlushError,
    RingBuffer,
    SnapshotError,
    SnapshotMeta,
    flush_snapshot,
    observed_event_rate,
    window_duration,
)
from .simulator import FaultSpec, LayerConfig, WorkloadConfig, Xorshift64Star, generate

__version__ = "0.1.0"

__all__ = [
    "AnalyzerConfig", "Anomaly", "AnomalyRule", "CallRecord", "Config",
    "ConfigError", "DetailedReport", "Detector", "DetectorConfig",
    "Diagnostics", "DurationSeries", "Event", "FaultSpec", "FlushError",
    "LatencyHistogram", "LayerConfig", "NameTable", "OverviewModel",
    "ParseError", "PipelineConfig", "RangeError", "RequestMatcher",
    "RequestRecord", "RequestSpec", "RingBuffer", "RunStats",
    "SnapshotError", "SnapshotMeta", "Source", "StreamReorderer",
    "TopNSection", "TraceStream", "WorkloadConfig", "Xorshift64Star",
    "analyze_events", "bucketize", "build_detailed_report",
    "build_overview_model", "detect", "flush_snapshot", "generate",
    "ingest_stream", "io_distribution", "irq_stats", "load_config",
    "observed_event_rate", "parse_event_line", "relative_overhead",
    "render_detailed_text", "render_overview", "run_pipeline",
    "serialize_event", "syscall_stats", "top_function_calls", "top_queries",
    "top_requests", "window_duration",
]
