"""Command-line front end: simulate, run, analyze, report.

Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 data error.
All state lives under the output directory; no environment is required.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .analyzer import build_detailed_report
from .config import Config, ConfigError, load_config
from .events import ParseError, serialize_event
from .light import read_request_log
from .pipeline import run_pipeline, summary_lines
from .report import build_overview_model, render_detailed_text, render_overview
from .ring import FlushError, SnapshotMeta, snapshot_stem, window_duration
from .simulator import generate

USAGE_ERROR = 1
IO_ERROR = 2
DATA_ERROR = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flightrec",
        description=(
            "Two-level request tracing: a light always-on session measures "
            "request latencies; anomalies flush an in-memory flight recorder "
            "to disk for post-mortem analysis."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic workload stream")
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--out", default="workload.jsonl", help="output JSONL file or - for stdout")
    p.add_argument("--seed", type=int, help="override workload.seed")

    p = sub.add_parser("run", help="run the live dual-session monitor over a stream")
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--input", default="-", help="input JSONL file or - for stdin")
    p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("analyze", help="post-mortem analysis of one snapshot")
    p.add_argument("snapshot", help="snapshot .jsonl file")
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--out", help="output directory (default: snapshot directory)")

    p = sub.add_parser("report", help="render the overview from a request log")
    p.add_argument("log", help="light-mode request log (requests.jsonl)")
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--out", help="output directory (default: log directory)")
    return parser


def cmd_simulate(config: Config, out: str, seed: int | None) -> int:
    workload = config.workload
    if seed is not None:
        workload = replace(workload, seed=seed)
    stream = generate(workload, config.faults)
    requested = workload.request_count
    lines = "\n".join(serialize_event(e) for e in stream.events) + "\n"
    if out == "-":
        sys.stdout.write(lines)
    else:
        Path(out).write_text(lines, encoding="utf-8")
        print(f"wrote {len(stream.events)} events ({requested} requests) to {out}")
    window = window_duration(config.pipeline.ring_capacity, max(1, len(stream.events)) / workload.duration_s)
    print(
        f"ring capacity {config.pipeline.ring_capacity} at this event rate "
        f"retains ~{float(window):.2f} s",
        file=sys.stderr,
    )
    return 0


def cmd_run(config: Config, input_path: str, out: str) -> int:
    if input_path == "-":
        stats = run_pipeline(config, sys.stdin, out)
    else:
        with open(input_path, "r", encoding="utf-8") as fh:
            stats = run_pipeline(config, fh, out)
    for line in summary_lines(stats):
        print(line)
    if stats.requests:
        print(f"overview        : {Path(out) / 'overview.html'}")
    else:
        print("no completed requests; overview not rendered", file=sys.stderr)
    return 0


def cmd_analyze(config: Config, snapshot: str, out: str | None) -> int:
    snapshot_path = Path(snapshot)
    if not snapshot_path.exists():
        print(f"error: snapshot not found: {snapshot}", file=sys.stderr)
        return IO_ERROR
    stem = snapshot_stem(snapshot_path)
    meta_path = snapshot_path.with_name(f"snapshot_{stem}.meta.json")
    meta = None
    if meta_path.exists():
        meta = SnapshotMeta.load(meta_path)
    else:
        print(f"warning: meta file missing ({meta_path.name}); "
              "header fields will be unknown", file=sys.stderr)
    report = build_detailed_report(snapshot_path, meta, config.analyzer)
    out_dir = Path(out) if out else snapshot_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"detailed_{stem}.txt"
    render_detailed_text(report, path)
    print(f"wrote {path}")
    return 0


def cmd_report(config: Config, log: str, out: str | None) -> int:
    log_path = Path(log)
    if not log_path.exists():
        print(f"error: request log not found: {log}", file=sys.stderr)
        return IO_ERROR
    out_dir = Path(out) if out else log_path.parent
    records = read_request_log(log_path)
    if not records:
        print("error: no requests in the log", file=sys.stderr)
        return DATA_ERROR
    thresholds = {s.label: s.threshold_ns for s in config.pipeline.specs}
    metas = [
        SnapshotMeta.load(p) for p in sorted(out_dir.glob("snapshot_*.meta.json"))
    ]
    model = build_overview_model(
        records, thresholds, metas, config.pipeline.bucket_width_ns
    )
    path = render_overview(model, out_dir / "overview.html")
    print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit 2 for usage errors; remap per our contract
        return 0 if exc.code in (0, None) else USAGE_ERROR

    try:
        config = load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(config, args.out, args.seed)
        if args.command == "run":
            return cmd_run(config, args.input, args.out)
        if args.command == "analyze":
            return cmd_analyze(config, args.snapshot, args.out)
        if args.command == "report":
            return cmd_report(config, args.log, args.out)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, ParseError):
            print(f"error: {exc}", file=sys.stderr)
            return DATA_ERROR
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FlushError as exc:
        print(f"error: {exc} (partial file: {exc.path})", file=sys.stderr)
        return IO_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_ERROR
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
