"""Output artifacts: the overview HTML (inline SVG latency charts with
drill-down hyperlinks) and the deterministic plain-text detailed report.

Both renderers are pure: identical inputs produce byte-identical files.
The overview links each flushed anomaly to ``detailed_<stem>.txt`` by the
snapshot stem, so analyze/report runs over one output directory compose
without extra configuration.
"""

from __future__ import annotations

import html
from dataclasses import dataclass
from pathlib import Path

from .analyzer import DetailedReport, LatencyHistogram, TopNSection, Unit
from .light import DurationSeries, RequestRecord, bucketize
from .ring import SnapshotMeta, snapshot_stem
from .units import fmt_duration, fmt_share

RULE = "=" * 72
THIN_RULE = "-" * 72

CHART_W = 960
CHART_H = 280
MARGIN_L = 70
MARGIN_R = 20
MARGIN_T = 16
MARGIN_B = 34


@dataclass(frozen=True)
class SpecChart:
    label: str
    threshold_ns: int
    series: DurationSeries
    records: tuple[RequestRecord, ...]
    anomalies: tuple[tuple[RequestRecord, str | None], ...]  # (record, snapshot stem)


@dataclass(frozen=True)
class OverviewModel:
    charts: tuple[SpecChart, ...]
    ts_min: int
    ts_max: int

    @property
    def anomaly_count(self) -> int:
        return sum(len(c.anomalies) for c in self.charts)


def build_overview_model(
    records: list[RequestRecord],
    thresholds: dict[str, int],
    metas: list[SnapshotMeta],
    bucket_width: int,
    default_threshold: int = 1_000_000_000,
) -> OverviewModel:
    """Assemble per-spec charts from the light-mode log plus snapshot metas.

    An over-threshold record is linked to a snapshot when a meta matches its
    spec, key and end timestamp; otherwise its marker renders unlinked (the
    trigger was suppressed by the flush cooldown).
    """
    if not records:
        raise ValueError("no requests in the light-mode log")
    stem_by_trigger = {
        (m.trigger_spec, m.trigger_key, m.flushed_at): snapshot_stem(m.snapshot_path)
        for m in metas
    }
    labels: list[str] = []
    for r in records:
        if r.spec_label not in labels:
            labels.append(r.spec_label)
    charts = []
    for label in labels:
        spec_records = tuple(r for r in records if r.spec_label == label)
        threshold = thresholds.get(label, default_threshold)
        anomalies = []
        for r in spec_records:
            if r.duration > threshold:
                stem = stem_by_trigger.get((r.spec_label, r.key, r.ts_end))
                anomalies.append((r, stem))
        charts.append(
            SpecChart(
                label=label,
                threshold_ns=threshold,
                series=bucketize(spec_records, bucket_width, label),
                records=spec_records,
                anomalies=tuple(anomalies),
            )
        )
    return OverviewModel(
        charts=tuple(charts),
        ts_min=min(r.ts_start for r in records),
        ts_max=max(r.ts_end for r in records),
    )


def _chart_svg(chart: SpecChart, ts_min: int, ts_max: int) -> str:
    x_span = max(ts_max - ts_min, 1)
    y_max = max(
        int(1.25 * max(r.duration for r in chart.records)),
        int(1.25 * chart.threshold_ns),
        1,
    )
    plot_w = CHART_W - MARGIN_L - MARGIN_R
    plot_h = CHART_H - MARGIN_T - MARGIN_B

    def x(ts: int) -> float:
        return MARGIN_L + (ts - ts_min) / x_span * plot_w

    def y(duration: int) -> float:
        return MARGIN_T + plot_h - duration / y_max * plot_h

    parts = [
        f'<svg class="chart" viewBox="0 0 {CHART_W} {CHART_H}" width="{CHART_W}" '
        f'height="{CHART_H}" xmlns="http://www.w3.org/2000/svg" role="img">'
    ]
    parts.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'class="plot-bg"/>'
    )
    # y grid: 0, 1/4, 1/2, 3/4, full scale
    for i in range(5):
        duration = y_max * i // 4
        gy = y(duration)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{gy:.1f}" x2="{CHART_W - MARGIN_R}" y2="{gy:.1f}" '
            'class="grid"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 6}" y="{gy + 4:.1f}" class="tick" '
            f'text-anchor="end">{html.escape(fmt_duration(duration))}</text>'
        )
    # x ticks in seconds from the left edge of the axis
    for i in range(5):
        ts = ts_min + x_span * i // 4
        gx = x(ts)
        parts.append(
            f'<text x="{gx:.1f}" y="{CHART_H - 12}" class="tick" '
            f'text-anchor="middle">{(ts - ts_min) / 1e9:.1f} s</text>'
        )
    # per-bucket max-duration polyline
    points = " ".join(
        f"{x(b.start_ts + chart.series.bucket_width // 2):.1f},{y(b.max_duration):.1f}"
        for b in chart.series.buckets
    )
    if points:
        parts.append(f'<polyline points="{points}" class="series"/>')
    # threshold line
    ty = y(chart.threshold_ns)
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{ty:.1f}" x2="{CHART_W - MARGIN_R}" y2="{ty:.1f}" '
        'class="threshold"/>'
    )
    parts.append(
        f'<text x="{CHART_W - MARGIN_R}" y="{ty - 5:.1f}" class="threshold-label" '
        f'text-anchor="end">threshold {html.escape(fmt_duration(chart.threshold_ns))}</text>'
    )
    # anomaly markers, linked to their detailed report when a snapshot exists
    for record, stem in chart.anomalies:
        cx = x(record.ts_end)
        cy = y(min(record.duration, y_max))
        tooltip = (
            f"{record.spec_label} {record.key}: {fmt_duration(record.duration)}"
        )
        circle = (
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="5" class="anomaly">'
            f"<title>{html.escape(tooltip)}</title></circle>"
        )
        if stem is not None:
            parts.append(f'<a href="detailed_{html.escape(stem)}.txt">{circle}</a>')
        else:
            circle = (
                f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="5" class="anomaly suppressed">'
                f"<title>{html.escape(tooltip + ' (suppressed: no snapshot)')}"
                "</title></circle>"
            )
            parts.append(circle)
    parts.append("</svg>")
    return "".join(parts)


_OVERVIEW_CSS = """
body { font-family: sans-serif; margin: 2rem auto; max-width: 1000px; color: #222; }
h1 { font-size: 1.4rem; } h2 { font-size: 1.1rem; margin-top: 2rem; }
table.stats { border-collapse: collapse; font-size: 0.9rem; margin: 0.5rem 0; }
table.stats td { border: 1px solid #ccc; padding: 0.2rem 0.6rem; }
svg.chart { border: 1px solid #ddd; background: #fff; }
.plot-bg { fill: #fafafa; }
.grid { stroke: #e3e3e3; stroke-width: 1; }
.tick { font-size: 11px; fill: #555; }
.series { fill: none; stroke: #2563eb; stroke-width: 1.5; }
.threshold { stroke: #dc2626; stroke-width: 1; stroke-dasharray: 6 3; }
.threshold-label { font-size: 11px; fill: #dc2626; }
.anomaly { fill: #dc2626; stroke: #7f1d1d; }
.anomaly.suppressed { fill: #f59e0b; stroke: #92400e; }
""".strip()


def render_overview(model: OverviewModel, out_path) -> Path:
    """Write the self-contained overview HTML. No external resources."""
    out_path = Path(out_path)
    parts = [
        "<!doctype html>",
        '<html lang="en"><head><meta charset="utf-8"/>',
        "<title>Request latency overview</title>",
        f"<style>{_OVERVIEW_CSS}</style>",
        "</head><body>",
        "<h1>Request latency overview</h1>",
        "<p>Time on the X axis, response time on the Y axis. Markers are "
        "over-threshold requests; red markers link to their detailed report, "
        "amber markers were suppressed by the flush cooldown.</p>",
    ]
    for chart in model.charts:
        linked = sum(1 for _, stem in chart.anomalies if stem is not None)
        parts.append(f"<h2>{html.escape(chart.label)}</h2>")
        parts.append(
            '<table class="stats"><tr>'
            f"<td>requests {len(chart.records)}</td>"
            f"<td>anomalies {len(chart.anomalies)}</td>"
            f"<td>linked snapshots {linked}</td>"
            f"<td>threshold {html.escape(fmt_duration(chart.threshold_ns))}</td>"
            "</tr></table>"
        )
        parts.append(_chart_svg(chart, model.ts_min, model.ts_max))
    parts.append("</body></html>")
    out_path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out_path


def _render_top_section(lines: list[str], section: TopNSection) -> None:
    lines.append(THIN_RULE)
    lines.append(section.title)
    lines.append(THIN_RULE)
    if section.no_data:
        lines.append("  (no data)")
        lines.append("")
        return
    flagged_any = any(r.flagged for r in section.rows)
    for rank, row in enumerate(section.rows, start=1):
        value = fmt_duration(row.value) if section.unit is Unit.NS else str(row.value)
        flag = " *" if row.flagged else ""
        lines.append(f"  {rank:>3}  {value:>12}  {fmt_share(row.share):>6}  {row.label}{flag}")
    if flagged_any:
        lines.append("  * includes work truncated at the snapshot window edge")
    lines.append("")


def _render_histogram(lines: list[str], hist: LatencyHistogram) -> None:
    lines.append(THIN_RULE)
    lines.append(hist.title)
    lines.append(THIN_RULE)
    if hist.no_data:
        lines.append("  (no data)")
        lines.append("")
        return
    lines.append(
        f"  total {hist.total}, min {fmt_duration(hist.min_latency)}, "
        f"max {fmt_duration(hist.max_latency)}"
    )
    peak = max(hist.counts)
    for i, count in enumerate(hist.counts):
        if count == 0:
            continue
        lo, hi = hist.bucket_bounds(i)
        hi_text = fmt_duration(hi) if hi is not None else "inf"
        bar = "#" * max(1, round(count / peak * 40))
        lines.append(f"  [{fmt_duration(lo):>8} .. {hi_text:>8})  {count:>8}  {bar}")
    lines.append("")


def render_detailed_text(report: DetailedReport, out_path) -> Path:
    """Write the fixed-layout detailed report. Byte-identical for equal inputs."""
    h = report.header
    lines = [RULE, f"Detailed post-mortem report: {h.stem}", RULE]
    if h.meta_missing:
        lines.append("Trigger    : unknown (snapshot meta file missing)")
    else:
        lines.append(
            f"Trigger    : spec={h.trigger_spec} key={h.trigger_key} "
            f"duration={fmt_duration(h.trigger_duration)}"
        )
        lines.append(f"Flushed at : {h.flushed_at} ns (trace time)")
    if h.ts_first is not None:
        span = h.ts_last - h.ts_first
        lines.append(
            f"Window     : {h.ts_first} .. {h.ts_last} ns (span {fmt_duration(span)})"
        )
    rate = "unknown" if h.observed_event_rate is None else f"{h.observed_event_rate:.1f}/s"
    lines.append(f"Events     : {h.event_count} (observed rate {rate})")
    if not h.meta_missing:
        lines.append(
            f"Dropped fields: {h.dropped_fields}   "
            f"Suppressed triggers: {h.suppressed_triggers}"
        )
    lines.append("")
    lines.append(RULE)
    lines.append("USER SPACE")
    lines.append(RULE)
    for section in report.request_sections:
        _render_top_section(lines, section)
    _render_top_section(lines, report.function_section)
    _render_top_section(lines, report.query_section)
    lines.append(RULE)
    lines.append("KERNEL SPACE")
    lines.append(RULE)
    _render_histogram(lines, report.io_histogram)
    _render_top_section(lines, report.syscall_section)
    _render_top_section(lines, report.irq_section)
    lines.append(RULE)
    lines.append("DIAGNOSTICS")
    lines.append(RULE)
    for name, value in report.diagnostics.as_pairs():
        lines.append(f"  {name:<28} {value}")
    lines.append("")
    out_path = Path(out_path)
    out_path.write_text("\n".join(lines), encoding="utf-8")
    return out_path
