"""Shared event factories and independent brute-force oracles.

The oracles here deliberately re-derive results with the simplest possible
loops (full scans, direct classification) so the tests stay independent of
the library's own data structures.
"""

from __future__ import annotations

import random

from flightrec.events import Event, Source
from flightrec.light import RequestSpec


def ev(ts, name, src="user", pid=1, tid=1, **fields) -> Event:
    source = Source.USER if src == "user" else Source.KERNEL
    return Event(ts=ts, source=source, name=name, pid=pid, tid=tid, fields=fields)


def brute_force_pairs(events, spec: RequestSpec):
    """Oracle: per key, pair the first start with the first subsequent end.

    Returns a list of (key, ts_start, ts_end) tuples. Assumes the spec uses
    an explicit correlation key.
    """
    pairs = []
    keys = set()
    for e in events:
        if e.name in (spec.start_name, spec.end_name):
            value = e.fields.get(spec.correlation_key)
            if value is not None:
                keys.add(str(value))
    for key in keys:
        indices_start = [
            i for i, e in enumerate(events)
            if e.name == spec.start_name and str(e.fields.get(spec.correlation_key)) == key
        ]
        indices_end = [
            i for i, e in enumerate(events)
            if e.name == spec.end_name and str(e.fields.get(spec.correlation_key)) == key
        ]
        used = -1
        for si in indices_start:
            following = [ei for ei in indices_end if ei > si and ei > used]
            if following:
                used = following[0]
                pairs.append((key, events[si].ts, events[used].ts))
    return pairs


def random_request_trace(rng: random.Random, n_keys: int, spec: RequestSpec, noise_names=()):
    """Interleaved start/end pairs with unique keys plus optional noise events."""
    events = []
    ts = 0
    open_keys = []
    pending = list(range(n_keys))
    rng.shuffle(pending)
    while pending or open_keys:
        ts += rng.randint(1, 50)
        roll = rng.random()
        if noise_names and roll < 0.3:
            events.append(ev(ts, rng.choice(list(noise_names)), tid=rng.randint(1, 4)))
        elif open_keys and (not pending or roll < 0.65):
            key = open_keys.pop(rng.randrange(len(open_keys)))
            events.append(ev(ts, spec.end_name, tid=1, **{spec.correlation_key: f"k{key}"}))
        else:
            key = pending.pop()
            open_keys.append(key)
            events.append(ev(ts, spec.start_name, tid=1, **{spec.correlation_key: f"k{key}"}))
    return events


def random_nested_calls(rng: random.Random, tid: int, n_calls: int, entry="func_entry", exit_="func_exit"):
    """A well-nested entry/exit sequence on one tid; returns (events, totals oracle input)."""
    funcs = ["alpha", "beta", "gamma", "delta", "epsilon"]
    events = []
    ts = [0]

    def emit(depth_budget):
        ts[0] += rng.randint(1, 20)
        func = rng.choice(funcs)
        events.append(ev(ts[0], entry, tid=tid, func=func))
        if depth_budget > 0 and rng.random() < 0.5:
            for _ in range(rng.randint(1, 2)):
                emit(depth_budget - 1)
        ts[0] += rng.randint(1, 20)
        events.append(ev(ts[0], exit_, tid=tid, func=func))

    for _ in range(n_calls):
        emit(3)
    return events


def nested_calls_oracle(events, entry="func_entry", exit_="func_exit"):
    """Recursive-descent totals per function over a well-nested bracket sequence."""
    totals = {}
    stack = []
    for e in events:
        if e.name == entry:
            stack.append((e.fields["func"], e.ts))
        elif e.name == exit_:
            func, ts_entry = stack.pop()
            assert func == e.fields["func"], "oracle input must be well-nested"
            totals[func] = totals.get(func, 0) + (e.ts - ts_entry)
    assert not stack
    return totals


def random_syscall_trace(rng: random.Random, n: int):
    names = ["read", "write", "futex", "openat"]
    events = []
    ts = 0
    open_calls = {}
    for _ in range(n):
        ts += rng.randint(1, 30)
        tid = rng.randint(1, 3)
        name = rng.choice(names)
        if (tid, name) in open_calls and rng.random() < 0.8:
            events.append(ev(ts, f"syscall_exit_{name}", src="kernel", tid=tid))
            del open_calls[(tid, name)]
        else:
            events.append(ev(ts, f"syscall_entry_{name}", src="kernel", tid=tid))
            open_calls[(tid, name)] = ts
    return events


def syscall_oracle(events):
    """Direct per-(tid, name) scan: totals and counts of completed calls."""
    totals = {}
    counts = {}
    outstanding = {}
    for e in events:
        if e.name.startswith("syscall_entry_"):
            outstanding[(e.tid, e.name[len("syscall_entry_"):])] = e.ts
        elif e.name.startswith("syscall_exit_"):
            key = (e.tid, e.name[len("syscall_exit_"):])
            if key in outstanding:
                name = key[1]
                totals[name] = totals.get(name, 0) + (e.ts - outstanding.pop(key))
                counts[name] = counts.get(name, 0) + 1
    return totals, counts


def random_irq_trace(rng: random.Random, n_pairs: int):
    events = []
    ts = 0
    for _ in range(n_pairs):
        ts += rng.randint(1, 100)
        irq = rng.choice([1, 3, 7, 11])
        dur = rng.randint(1, 40)
        events.append(ev(ts, "irq_handler_entry", src="kernel", tid=0, irq=irq))
        events.append(ev(ts + dur, "irq_handler_exit", src="kernel", tid=0, irq=irq))
        ts += dur
    return events


def irq_oracle(events):
    """Count completed handler pairs per irq line by direct scan."""
    counts = {}
    open_irq = {}
    for e in events:
        if e.name == "irq_handler_entry":
            open_irq.setdefault(e.tid, []).append(e.fields["irq"])
        elif e.name == "irq_handler_exit":
            stack = open_irq.get(e.tid)
            if stack and stack[-1] == e.fields["irq"]:
                stack.pop()
                counts[e.fields["irq"]] = counts.get(e.fields["irq"], 0) + 1
    return counts


def random_io_trace(rng: random.Random, n_pairs: int):
    events = []
    latencies = []
    ts = 0
    for rq in range(n_pairs):
        ts += rng.randint(1, 1000)
        lat = rng.randint(500, 50_000_000)
        latencies.append(lat)
        events.append(ev(ts, "block_rq_issue", src="kernel", rq=rq))
        events.append(ev(ts + lat, "block_rq_complete", src="kernel", rq=rq))
    events.sort(key=lambda e: e.ts)
    return events, latencies


def classify_latencies(latencies, base_ns, num_buckets):
    """Direct classification oracle for the geometric histogram."""
    edges = [base_ns << k for k in range(num_buckets + 1)]
    counts = [0] * (len(edges) + 1)
    for lat in latencies:
        if lat < edges[0]:
            counts[0] += 1
            continue
        for i in range(len(edges) - 1):
            if edges[i] <= lat < edges[i + 1]:
                counts[i + 1] += 1
                break
        else:
            counts[-1] += 1
    return counts
