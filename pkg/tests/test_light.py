from __future__ import annotations

import random
from fractions import Fraction

import pytest

from flightrec.light import (
    Anomaly,
    AnomalyRule,
    Detector,
    DetectorConfig,
    RequestMatcher,
    RequestRecord,
    RequestSpec,
    bucketize,
    relative_overhead,
)

from helpers import brute_force_pairs, ev, random_request_trace

APACHE = RequestSpec(
    label="apache",
    start_name="apache_request_received",
    end_name="apache_request_handled",
    correlation_key="req_id",
    threshold_ns=1_000_000_000,
)


def observe_all(matcher, events):
    records = []
    for e in events:
        records.extend(matcher.observe(e))
    return records


def test_spec_validation():
    with pytest.raises(ValueError):
        RequestSpec(label="x", start_name="a", end_name="a")
    with pytest.raises(ValueError):
        RequestSpec(label="x", start_name="a", end_name="b", threshold_ns=0)


def test_basic_pairing_duration():
    m = RequestMatcher([APACHE])
    records = observe_all(m, [
        ev(100, APACHE.start_name, req_id="a"),
        ev(300, APACHE.end_name, req_id="a"),
    ])
    assert len(records) == 1
    r = records[0]
    assert (r.key, r.ts_start, r.ts_end, r.duration) == ("a", 100, 300, 200)


def test_zero_duration_request_is_valid():
    m = RequestMatcher([APACHE])
    records = observe_all(m, [
        ev(50, APACHE.start_name, req_id="a"),
        ev(50, APACHE.end_name, req_id="a"),
    ])
    assert records[0].duration == 0


def test_interleaved_requests_by_key():
    m = RequestMatcher([APACHE])
    records = observe_all(m, [
        ev(0, APACHE.start_name, req_id="a"),
        ev(10, APACHE.start_name, req_id="b"),
        ev(50, APACHE.end_name, req_id="b"),
        ev(90, APACHE.end_name, req_id="a"),
    ])
    assert [(r.key, r.duration) for r in records] == [("b", 40), ("a", 90)]


def test_fifo_matching_without_key():
    spec = RequestSpec(label="t", start_name="s", end_name="e")
    m = RequestMatcher([spec])
    records = observe_all(m, [
        ev(0, "s", tid=1),
        ev(5, "s", tid=1),
        ev(7, "s", tid=2),
        ev(20, "e", tid=1),   # matches the ts=0 start (FIFO)
        ev(30, "e", tid=2),
        ev(40, "e", tid=1),
    ])
    assert [(r.tid, r.ts_start, r.ts_end) for r in records] == [(1, 0, 20), (2, 7, 30), (1, 5, 40)]
    assert all(r.key for r in records)  # synthesized ids are non-empty


def test_orphan_end_counted_not_error():
    m = RequestMatcher([APACHE])
    records = observe_all(m, [ev(5, APACHE.end_name, req_id="ghost")])
    assert records == []
    assert m.orphan_ends == 1


def test_duplicate_start_replaces_and_counts():
    m = RequestMatcher([APACHE])
    records = observe_all(m, [
        ev(0, APACHE.start_name, req_id="a"),
        ev(10, APACHE.start_name, req_id="a"),
        ev(50, APACHE.end_name, req_id="a"),
    ])
    assert [(r.ts_start, r.duration) for r in records] == [(10, 40)]
    assert m.abandoned_starts == 1


def test_open_table_bounded_evicts_oldest():
    m = RequestMatcher([APACHE], max_open=3)
    for i in range(5):
        m.observe(ev(i, APACHE.start_name, req_id=f"k{i}"))
    assert m.open_count("apache") == 3
    assert m.abandoned_starts == 2
    # oldest two were evicted; k2..k4 still close fine
    records = observe_all(m, [ev(100, APACHE.end_name, req_id=f"k{i}") for i in range(5)])
    assert sorted(r.key for r in records) == ["k2", "k3", "k4"]
    assert m.orphan_ends == 2


def test_selectivity_noise_events_change_nothing():
    signal = [
        ev(0, APACHE.start_name, req_id="a"),
        ev(10, APACHE.start_name, req_id="b"),
        ev(50, APACHE.end_name, req_id="b"),
        ev(90, APACHE.end_name, req_id="a"),
    ]
    noisy = []
    for i, e in enumerate(signal):
        noisy.append(e)
        noisy.append(ev(e.ts, f"noise_{i}", req_id="a"))  # same key, ignored name
    m_clean, m_noisy = RequestMatcher([APACHE]), RequestMatcher([APACHE])
    assert observe_all(m_clean, signal) == observe_all(m_noisy, noisy)
    assert (m_noisy.orphan_ends, m_noisy.abandoned_starts) == (0, 0)


def test_matching_equals_brute_force_oracle():
    rng = random.Random(23)
    for _ in range(60):
        events = random_request_trace(rng, rng.randint(1, 40), APACHE, noise_names=["other"])
        m = RequestMatcher([APACHE])
        got = {(r.key, r.ts_start, r.ts_end) for r in observe_all(m, events)}
        want = set(brute_force_pairs(events, APACHE))
        assert got == want


def test_threshold_detection_strict():
    det = Detector(DetectorConfig())
    over = RequestRecord("apache", "a", 0, 1_200_000_000, 1_200_000_000, 1, 1)
    exact = RequestRecord("apache", "b", 0, 1_000_000_000, 1_000_000_000, 1, 1)
    anomaly = det.check(APACHE, over)
    assert anomaly is not None and anomaly.rule is AnomalyRule.THRESHOLD
    assert anomaly.detected_at == over.ts_end
    assert det.check(APACHE, exact) is None  # strict exceedance


def test_detector_disabled_never_fires():
    det = Detector(DetectorConfig(enabled=False))
    over = RequestRecord("apache", "a", 0, 9_000_000_000, 9_000_000_000, 1, 1)
    assert det.check(APACHE, over) is None


def _record(duration, n):
    return RequestRecord("apache", f"k{n}", 0, duration, duration, 1, 1)


def test_statistical_zero_variance_constant_history():
    det = Detector(DetectorConfig(statistical=True, k=3.0, window=100))
    for i in range(100):
        assert det.check(APACHE, _record(200_000_000, i)) is None  # warm-up
    # same value as the whole window: mean + 3*0 is not strictly exceeded
    assert det.check(APACHE, _record(200_000_000, 999)) is None


def test_statistical_fires_on_spike_after_warmup():
    det = Detector(DetectorConfig(statistical=True, k=3.0, window=50))
    for i in range(50):
        det.check(APACHE, _record(200_000_000, i))
    anomaly = det.check(APACHE, _record(400_000_000, 999))
    assert anomaly is not None and anomaly.rule is AnomalyRule.STATISTICAL


def test_statistical_never_fires_during_warmup():
    det = Detector(DetectorConfig(statistical=True, k=0.0, window=10))
    for i in range(10):
        assert det.check(APACHE, _record(100 + 100 * i, i)) is None


def test_threshold_monotonicity():
    rng = random.Random(5)
    for _ in range(200):
        threshold = rng.randint(1, 10**9)
        spec = RequestSpec("s", "a", "b", threshold_ns=threshold)
        d = rng.randint(0, 2 * threshold)
        det = Detector(DetectorConfig())
        fired = det.check(spec, _record(d, 0)) is not None
        fired_larger = det.check(spec, _record(d + rng.randint(1, threshold), 1)) is not None
        if fired:
            assert fired_larger


def test_bucketize_singleton():
    series = bucketize([_record(77, 0)], bucket_width=1000)
    assert len(series.buckets) == 1
    b = series.buckets[0]
    assert (b.count, b.max_duration, b.mean_duration) == (1, 77, 77)


def test_bucketize_floor_division_edges():
    records = [
        RequestRecord("s", "a", 0, 0, 0, 1, 1),
        RequestRecord("s", "b", 0, 1, 1, 1, 1),
        RequestRecord("s", "c", 0, 2, 2, 1, 1),
    ]
    series = bucketize(records, bucket_width=2)
    assert [(b.start_ts, b.count) for b in series.buckets] == [(0, 2), (2, 1)]


def test_bucketize_materializes_empty_buckets():
    records = [
        RequestRecord("s", "a", 0, 5, 5, 1, 1),
        RequestRecord("s", "b", 0, 35, 35, 1, 1),
    ]
    series = bucketize(records, bucket_width=10)
    assert [b.start_ts for b in series.buckets] == [0, 10, 20, 30]
    assert [b.count for b in series.buckets] == [1, 0, 0, 1]


def test_bucketize_empty_records():
    series = bucketize([], bucket_width=10, spec_label="apache")
    assert series.buckets == ()
    assert series.spec_label == "apache"


def test_bucketize_matches_naive_recomputation():
    rng = random.Random(99)
    records = []
    for i in range(1000):
        start = rng.randint(0, 10**6)
        dur = rng.randint(0, 10**6)
        records.append(RequestRecord("s", f"k{i}", start, start + dur, dur, 1, 1))
    width = 12_345
    series = bucketize(records, width)
    assert sum(b.count for b in series.buckets) == len(records)  # conservation
    for b in series.buckets:
        durations = [r.duration for r in records if r.ts_end // width == b.start_ts // width]
        assert b.count == len(durations)
        if durations:
            assert b.max_duration == max(durations)
            total = sum(durations)
            assert b.mean_duration == (total + len(durations) // 2) // len(durations)


def test_relative_overhead_paper_figures():
    assert relative_overhead(100, 1, 200_000_000) == Fraction(1, 2_000_000)  # 5e-7
    assert relative_overhead(100, 2, 200_000_000) == Fraction(1, 1_000_000)  # 1e-6
    assert relative_overhead(100, 2, 200) == Fraction(1)


def test_relative_overhead_errors():
    with pytest.raises(ZeroDivisionError):
        relative_overhead(100, 1, 0)
    with pytest.raises(ValueError):
        relative_overhead(0, 1, 100)
    with pytest.raises(ValueError):
        relative_overhead(100, 0, 100)


def test_request_log_round_trip(tmp_path):
    records = [
        RequestRecord("apache", "a1", 10, 30, 20, 7, 8),
        RequestRecord("db", "q1", 0, 5, 5, 1, 2),
    ]
    path = tmp_path / "requests.jsonl"
    from flightrec.light import append_request_log, read_request_log

    with open(path, "w", encoding="utf-8") as fh:
        append_request_log(fh, records)
    assert read_request_log(path) == records
    line = path.read_text().splitlines()[0]
    for key in ('"spec"', '"key"', '"ts_start"', '"ts_end"', '"duration"'):
        assert key in line
