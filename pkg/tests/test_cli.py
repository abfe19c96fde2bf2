from __future__ import annotations

import json
import re

import pytest

from flightrec.cli import main

BASE_DOC = {
    "workload": {
        "duration_s": 8.0,
        "request_rate": 5.0,
        "kernel_noise": 300.0,
        "seed": 42,
    },
    "faults": [
        {"at_ns": 4_000_000_000, "layer": "db", "extra_latency_ns": 2_000_000_000, "count": 1}
    ],
    "pipeline": {"ring_capacity": 60_000},
}


@pytest.fixture
def config_path(tmp_path):
    def write(doc):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(doc))
        return str(path)

    return write


def simulate_and_run(tmp_path, config_path, doc, capsys):
    cfg = config_path(doc)
    workload = tmp_path / "workload.jsonl"
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(workload)]) == 0
    assert main(["run", "--config", cfg, "--input", str(workload), "--out", str(out)]) == 0
    return out, capsys.readouterr().out


def test_simulate_writes_deterministic_stream(tmp_path, config_path):
    cfg = config_path(BASE_DOC)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) > 100


def test_simulate_seed_flag_overrides_config(tmp_path, config_path):
    cfg = config_path(BASE_DOC)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "1"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "2"]) == 0
    assert a.read_bytes() != b.read_bytes()


def test_simulate_invalid_jitter_names_field(tmp_path, config_path, capsys):
    doc = {"workload": {"layers": [
        {"label": "apache", "start": "s", "end": "e", "base_latency_ns": 1000, "jitter": 1.5}
    ]}}
    assert main(["simulate", "--config", config_path(doc), "--out", str(tmp_path / "x")]) == 1
    assert "jitter" in capsys.readouterr().err


def test_unknown_config_section_rejected(tmp_path, config_path, capsys):
    assert main(["simulate", "--config", config_path({"nope": {}}),
                 "--out", str(tmp_path / "x")]) == 1
    assert "nope" in capsys.readouterr().err


def test_run_with_fault_produces_one_snapshot_and_linked_overview(tmp_path, config_path, capsys):
    out, stdout = simulate_and_run(tmp_path, config_path, BASE_DOC, capsys)
    snapshots = list(out.glob("snapshot_*.jsonl"))
    reports = list(out.glob("detailed_*.txt"))
    assert len(snapshots) == 1
    assert len(reports) == 1
    html = (out / "overview.html").read_text()
    anchors = re.findall(r'<a href="([^"]+)"', html)
    assert len(anchors) == 1
    assert anchors[0] == f"detailed_{reports[0].name[len('detailed_'):-len('.txt')]}.txt"
    assert "anomalies: 1" in stdout
    assert "snapshots: 1" in stdout


def test_run_without_faults_produces_nothing(tmp_path, config_path, capsys):
    doc = dict(BASE_DOC, faults=[])
    out, stdout = simulate_and_run(tmp_path, config_path, doc, capsys)
    assert list(out.glob("snapshot_*")) == []
    assert list(out.glob("detailed_*")) == []
    assert re.findall(r"<a ", (out / "overview.html").read_text()) == []
    assert "anomalies: 0" in stdout


def test_run_prints_ring_footprint_and_overhead(tmp_path, config_path, capsys):
    _, stdout = simulate_and_run(tmp_path, config_path, BASE_DOC, capsys)
    assert re.search(r"slots=3840000 B", stdout)  # 60000 slots x 64 B
    assert "total footprint=" in stdout
    assert "per-event cost" in stdout
    assert "per event" in stdout and "per request" in stdout


def test_run_detector_disabled_writes_zero_snapshot_bytes(tmp_path, config_path, capsys):
    doc = json.loads(json.dumps(BASE_DOC))
    doc["pipeline"]["detector"] = {"enabled": False}
    out, stdout = simulate_and_run(tmp_path, config_path, doc, capsys)
    assert list(out.glob("snapshot_*")) == []
    assert "snapshots: 0" in stdout


def test_run_on_anomaly_exec_receives_snapshot_path(tmp_path, config_path, capsys):
    hook_log = tmp_path / "hook.log"
    script = tmp_path / "hook.sh"
    script.write_text(f'#!/bin/sh\necho "$1" >> {hook_log}\n')
    script.chmod(0o755)
    doc = json.loads(json.dumps(BASE_DOC))
    doc["pipeline"]["on_anomaly_exec"] = str(script)
    out, _ = simulate_and_run(tmp_path, config_path, doc, capsys)
    invocations = hook_log.read_text().splitlines()
    assert len(invocations) == 1
    assert invocations[0] == str(next(out.glob("snapshot_*.jsonl")))


def test_run_failing_hook_is_not_fatal(tmp_path, config_path, capsys):
    doc = json.loads(json.dumps(BASE_DOC))
    doc["pipeline"]["on_anomaly_exec"] = "/bin/false"
    out, stdout = simulate_and_run(tmp_path, config_path, doc, capsys)
    assert "snapshots: 1" in stdout


def test_analyze_standalone(tmp_path, config_path, capsys):
    out, _ = simulate_and_run(tmp_path, config_path, BASE_DOC, capsys)
    snapshot = next(out.glob("snapshot_*.jsonl"))
    redo = tmp_path / "redo"
    assert main(["analyze", str(snapshot), "--out", str(redo)]) == 0
    produced = list(redo.glob("detailed_*.txt"))
    assert len(produced) == 1
    # same analysis as the inline run
    assert produced[0].read_bytes() == (out / produced[0].name).read_bytes()


def test_analyze_missing_meta_degrades_with_warning(tmp_path, config_path, capsys):
    out, _ = simulate_and_run(tmp_path, config_path, BASE_DOC, capsys)
    snapshot = next(out.glob("snapshot_*.jsonl"))
    next(out.glob("snapshot_*.meta.json")).unlink()
    assert main(["analyze", str(snapshot), "--out", str(tmp_path / "redo")]) == 0
    err = capsys.readouterr().err
    assert "meta file missing" in err
    text = next((tmp_path / "redo").glob("detailed_*.txt")).read_text()
    assert "unknown" in text


def test_analyze_corrupt_line_names_line_number(tmp_path, capsys):
    snapshot = tmp_path / "snapshot_1_x_y.jsonl"
    snapshot.write_text(
        '{"ts":1,"src":"user","name":"a","pid":1,"tid":1,"fields":{}}\nnot json\n'
    )
    assert main(["analyze", str(snapshot)]) == 3
    assert ":2:" in capsys.readouterr().err


def test_analyze_missing_snapshot_is_io_error(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing.jsonl")]) == 2


def test_report_counts_anchors_per_meta(tmp_path, config_path, capsys):
    doc = json.loads(json.dumps(BASE_DOC))
    doc["faults"] = [
        {"at_ns": 2_000_000_000, "layer": "db", "extra_latency_ns": 2_000_000_000, "count": 1},
        {"at_ns": 6_000_000_000, "layer": "db", "extra_latency_ns": 2_000_000_000, "count": 1},
    ]
    out, _ = simulate_and_run(tmp_path, config_path, doc, capsys)
    assert len(list(out.glob("snapshot_*.meta.json"))) == 2
    (out / "overview.html").unlink()
    assert main(["report", str(out / "requests.jsonl"), "--config",
                 config_path(doc), "--out", str(out)]) == 0
    anchors = re.findall(r"<a ", (out / "overview.html").read_text())
    assert len(anchors) == 2


def test_report_no_over_threshold_no_anchors(tmp_path, config_path, capsys):
    doc = dict(BASE_DOC, faults=[])
    out, _ = simulate_and_run(tmp_path, config_path, doc, capsys)
    assert main(["report", str(out / "requests.jsonl"), "--out", str(out)]) == 0
    assert re.findall(r"<a ", (out / "overview.html").read_text()) == []


def test_report_empty_log_is_data_error(tmp_path, capsys):
    log = tmp_path / "requests.jsonl"
    log.write_text("")
    assert main(["report", str(log)]) == 3
    assert "no requests" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert main(["unknown-command"]) == 1
    assert main([]) == 1


def test_run_counts_parse_errors_not_fatal(tmp_path, config_path, capsys):
    cfg = config_path(dict(BASE_DOC, faults=[]))
    stream = tmp_path / "stream.jsonl"
    assert main(["simulate", "--config", cfg, "--out", str(stream)]) == 0
    lines = stream.read_text().splitlines()
    lines.insert(5, "garbage line")
    lines.insert(20, '{"ts": -1}')
    stream.write_text("\n".join(lines) + "\n")
    assert main(["run", "--config", cfg, "--input", str(stream), "--out", str(tmp_path / "o")]) == 0
    assert "parse errors 2" in capsys.readouterr().out
