"""Deterministic synthetic workload generator.

Stands in for an instrumented web stack: nested request layers
(server -> application -> database), application function call sequences,
query statements, and kernel-side syscall/block-I/O/interrupt filler, all
emitted as one ts-sorted wire-format stream. Identical (config, faults,
seed) produce byte-identical output on every platform: randomness comes
from an explicit xorshift64* generator (constants below) and timing math
uses only integer and basic IEEE-754 operations.

xorshift64* step: s ^= s >> 12; s ^= s << 25; s ^= s >> 27;
output = s * 0x2545F4914F6CDD1D (all mod 2^64). The seed is mixed through
splitmix64 so seed 0 is usable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .events import Event, Source, TraceStream

_M = 2**64 - 1

WORKER_TIDS = (101, 102, 103, 104)
SERVER_PID = 1000
BACKGROUND_TID = 999
IRQ_TID = 0

_SYSCALL_POOL = ("read", "write", "futex", "epoll_wait", "openat", "close", "poll", "mmap")
_IRQ_POOL = (1, 3, 7, 11, 14)
_STATEMENT_POOL = (
    "SELECT * FROM posts WHERE id = ?",
    "SELECT name, email FROM users WHERE uid = ?",
    "SELECT body FROM comments WHERE post_id = ? ORDER BY ts",
    "UPDATE sessions SET last_seen = ? WHERE sid = ?",
    "INSERT INTO access_log (path, ts) VALUES (?, ?)",
)


class Xorshift64Star:
    """Seedable 64-bit generator; fixed algorithm, portable by construction."""

    def __init__(self, seed: int) -> None:
        state = _splitmix64(seed & _M)
        if state == 0:
            state = _splitmix64(1)
        self._state = state

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _M
        s ^= s >> 27
        self._state = s
        return (s * 0x2545F4914F6CDD1D) & _M

    def below(self, n: int) -> int:
        return self.next_u64() % n

    def float53(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def jittered(self, base: int, jitter: float) -> int:
        # base * (1 ± uniform jitter), never below 1 ns
        delta = (2.0 * self.float53() - 1.0) * jitter
        return max(1, int(base * (1.0 + delta)))

    def choice(self, seq):
        return seq[self.below(len(seq))]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M
    return z ^ (z >> 31)


@dataclass(frozen=True)
class LayerConfig:
    """One nesting level of the simulated stack, outermost first."""

    label: str
    start_name: str
    end_name: str
    base_latency_ns: int
    jitter: float

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("layer label must be non-empty")
        if self.base_latency_ns <= 0:
            raise ValueError(f"base_latency_ns must be > 0 for layer {self.label}")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError(f"jitter must be in [0, 1) for layer {self.label}")


DEFAULT_LAYERS = (
    LayerConfig("apache", "apache_request_received", "apache_request_handled", 5_000_000, 0.2),
    LayerConfig("php", "php_request_start", "php_request_end", 20_000_000, 0.3),
    LayerConfig("db", "db_query_start", "db_query_end", 8_000_000, 0.4),
)


@dataclass(frozen=True)
class WorkloadConfig:
    duration_s: float = 60.0
    request_rate: float = 4.0
    kernel_noise: float = 1_500.0  # filler events per second, kernel side
    seed: int = 1
    layers: tuple[LayerConfig, ...] = DEFAULT_LAYERS

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        if self.request_rate <= 0:
            raise ValueError("request_rate must be > 0")
        if self.kernel_noise < 0:
            raise ValueError("kernel_noise must be >= 0")
        if not 0 <= self.seed <= _M:
            raise ValueError("seed must fit in 64 bits")
        if not self.layers:
            raise ValueError("layers must not be empty")
        labels = [l.label for l in self.layers]
        if len(set(labels)) != len(labels):
            raise ValueError("layer labels must be unique")

    @property
    def duration_ns(self) -> int:
        return int(self.duration_s * 1_000_000_000)

    @property
    def request_count(self) -> int:
        return int(round(self.duration_s * self.request_rate))

    @property
    def interarrival_ns(self) -> int:
        return max(1, int(1_000_000_000 / self.request_rate))


@dataclass(frozen=True)
class FaultSpec:
    """Inject extra latency into `count` requests of one layer from `at_ns` on."""

    at_ns: int
    layer: str
    extra_latency_ns: int
    count: int = 1

    def __post_init__(self) -> None:
        if self.at_ns < 0:
            raise ValueError("at_ns must be >= 0")
        if self.extra_latency_ns <= 0:
            raise ValueError("extra_latency_ns must be > 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")


class _Emitter:
    def __init__(self) -> None:
        self.items: list[tuple[int, int, Event]] = []
        self._seq = 0

    def emit(self, ts: int, source: Source, name: str, pid: int, tid: int, fields=None) -> None:
        e = Event(ts=ts, source=source, name=name, pid=pid, tid=tid, fields=fields or {})
        self.items.append((ts, self._seq, e))
        self._seq += 1

    def sorted_events(self) -> list[Event]:
        self.items.sort(key=lambda item: (item[0], item[1]))
        return [item[2] for item in self.items]


def _fault_map(config: WorkloadConfig, faults) -> dict[int, dict[str, int]]:
    labels = {l.label for l in config.layers}
    n = config.request_count
    extras: dict[int, dict[str, int]] = {}
    for f in faults:
        if f.layer not in labels:
            raise ValueError(f"fault layer {f.layer!r} is not a configured layer")
        if f.at_ns >= config.duration_ns:
            raise ValueError("fault at_ns must fall within the workload duration")
        first = -(-f.at_ns // config.interarrival_ns)  # ceil division
        if first + f.count > n:
            raise ValueError(
                f"fault needs {f.count} requests after at_ns but only "
                f"{max(0, n - first)} are scheduled"
            )
        for k in range(first, first + f.count):
            extras.setdefault(k, {})
            extras[k][f.layer] = extras[k].get(f.layer, 0) + f.extra_latency_ns
    return extras


def _emit_query_layer(
    em: _Emitter,
    rng: Xorshift64Star,
    layer: LayerConfig,
    t: int,
    pid: int,
    tid: int,
    req_id: str,
    extra: int,
    io_seq: list[int],
) -> int:
    """Sequential query windows filling this layer's budget; returns end ts."""
    own = rng.jittered(layer.base_latency_ns, layer.jitter)
    nq = 1 + rng.below(2)
    gap = own // (5 * nq)
    budget = own - 2 * nq * gap
    durations = [budget // nq] * nq
    durations[-1] = budget - (budget // nq) * (nq - 1)
    durations[-1] += extra  # a fault shows up as one slow query
    for j, dur in enumerate(durations):
        t += gap
        qid = f"{req_id}-q{j}"
        stmt = rng.choice(_STATEMENT_POOL)
        em.emit(t, Source.USER, layer.start_name, pid, tid,
                {"query_id": qid, "statement": stmt})
        # block I/O raised by the query, completing inside its window
        io_seq[0] += 1
        issue = t + dur // 4
        em.emit(issue, Source.KERNEL, "block_rq_issue", pid, tid,
                {"rq": io_seq[0], "bytes": 4096 * (1 << rng.below(4))})
        em.emit(issue + dur // 2, Source.KERNEL, "block_rq_complete", pid, tid,
                {"rq": io_seq[0]})
        t += dur
        em.emit(t, Source.USER, layer.end_name, pid, tid, {"query_id": qid})
        t += gap
    return t


def _emit_function_layer(
    em: _Emitter,
    rng: Xorshift64Star,
    config: WorkloadConfig,
    depth: int,
    t: int,
    pid: int,
    tid: int,
    req_id: str,
    extras: dict[str, int],
    io_seq: list[int],
) -> int:
    """The application layer: function call sequences around the query layer."""
    layer = config.layers[depth]
    own = rng.jittered(layer.base_latency_ns, layer.jitter)
    post_extra = extras.get(layer.label, 0)
    q1 = own * 3 // 20
    q2 = own * 3 // 20
    q4 = own * 3 // 20
    q3 = own // 20
    q5 = own - q1 - q2 - q4 - 4 * q3 + post_extra
    fields = {"req_id": req_id}
    em.emit(t, Source.USER, layer.start_name, pid, tid, fields)
    t += q1
    em.emit(t, Source.USER, "func_entry", pid, tid, {"func": "handle_request"})
    t += q3
    em.emit(t, Source.USER, "func_entry", pid, tid, {"func": "parse_input"})
    t += q2
    em.emit(t, Source.USER, "func_exit", pid, tid, {"func": "parse_input"})
    t += q3
    t = _emit_inner(em, rng, config, depth + 1, t, pid, tid, req_id, extras, io_seq)
    t += q3
    em.emit(t, Source.USER, "func_entry", pid, tid, {"func": "render_output"})
    t += q4
    em.emit(t, Source.USER, "func_exit", pid, tid, {"func": "render_output"})
    t += q3
    em.emit(t, Source.USER, "func_exit", pid, tid, {"func": "handle_request"})
    t += q5
    em.emit(t, Source.USER, layer.end_name, pid, tid, fields)
    return t


def _emit_plain_layer(
    em: _Emitter,
    rng: Xorshift64Star,
    config: WorkloadConfig,
    depth: int,
    t: int,
    pid: int,
    tid: int,
    req_id: str,
    extras: dict[str, int],
    io_seq: list[int],
) -> int:
    layer = config.layers[depth]
    own = rng.jittered(layer.base_latency_ns, layer.jitter)
    pre = own // 2
    post = own - pre + extras.get(layer.label, 0)
    fields = {"req_id": req_id}
    em.emit(t, Source.USER, layer.start_name, pid, tid, fields)
    t = _emit_inner(em, rng, config, depth + 1, t + pre, pid, tid, req_id, extras, io_seq)
    t += post
    em.emit(t, Source.USER, layer.end_name, pid, tid, fields)
    return t


def _emit_inner(em, rng, config, depth, t, pid, tid, req_id, extras, io_seq) -> int:
    if depth == len(config.layers) - 1:
        layer = config.layers[depth]
        return _emit_query_layer(
            em, rng, layer, t, pid, tid, req_id, extras.get(layer.label, 0), io_seq
        )
    if depth == len(config.layers) - 2:
        return _emit_function_layer(
            em, rng, config, depth, t, pid, tid, req_id, extras, io_seq
        )
    return _emit_plain_layer(em, rng, config, depth, t, pid, tid, req_id, extras, io_seq)


def _emit_request_syscalls(em, t_start: int, t_end: int, pid: int, tid: int) -> None:
    span = max(t_end - t_start, 8)
    entry = t_start + span // 8
    em.emit(entry, Source.KERNEL, "syscall_entry_recvfrom", pid, tid, {})
    em.emit(entry + span // 16, Source.KERNEL, "syscall_exit_recvfrom", pid, tid, {})
    entry = t_end - span // 8
    em.emit(entry, Source.KERNEL, "syscall_entry_sendto", pid, tid, {})
    em.emit(entry + span // 16, Source.KERNEL, "syscall_exit_sendto", pid, tid, {})


def _emit_noise(em: _Emitter, rng: Xorshift64Star, config: WorkloadConfig, io_seq: list[int]) -> None:
    units = int(config.duration_s * config.kernel_noise / 2)
    if units <= 0:
        return
    interval = max(1, config.duration_ns // units)
    for u in range(units):
        t = u * interval + rng.below(interval)
        kind = u % 4
        if u % 2 == 0:
            pid, tid = BACKGROUND_TID, BACKGROUND_TID
        else:
            pid, tid = SERVER_PID, WORKER_TIDS[rng.below(len(WORKER_TIDS))]
        if kind <= 1:
            name = rng.choice(_SYSCALL_POOL)
            dur = 1_000 * (1 << rng.below(10)) + rng.below(1_000)
            em.emit(t, Source.KERNEL, f"syscall_entry_{name}", pid, tid, {})
            em.emit(t + dur, Source.KERNEL, f"syscall_exit_{name}", pid, tid, {})
        elif kind == 2:
            io_seq[0] += 1
            dur = 50_000 * (1 << rng.below(5)) + rng.below(50_000)
            em.emit(t, Source.KERNEL, "block_rq_issue", pid, tid,
                    {"rq": io_seq[0], "bytes": 4096 * (1 << rng.below(4))})
            em.emit(t + dur, Source.KERNEL, "block_rq_complete", pid, tid, {"rq": io_seq[0]})
        else:
            irq = rng.choice(_IRQ_POOL)
            dur = 1_000 + rng.below(29_000)
            em.emit(t, Source.KERNEL, "irq_handler_entry", 0, IRQ_TID, {"irq": irq})
            em.emit(t + dur, Source.KERNEL, "irq_handler_exit", 0, IRQ_TID, {"irq": irq})


def generate(config: WorkloadConfig, faults: tuple[FaultSpec, ...] = ()) -> TraceStream:
    """Produce the full synthetic event stream, ts-sorted and balanced.

    Requests are dispatched round-robin over a fixed worker pool; a worker
    busy with a slow request delays its next one, so per-tid event windows
    never interleave.
    """
    extras_by_request = _fault_map(config, faults)
    rng = Xorshift64Star(config.seed)
    em = _Emitter()
    io_seq = [0]
    worker_free = {tid: 0 for tid in WORKER_TIDS}
    for k in range(config.request_count):
        scheduled = k * config.interarrival_ns
        tid = WORKER_TIDS[k % len(WORKER_TIDS)]
        t_start = max(scheduled, worker_free[tid])
        req_id = f"r{k:06d}"
        extras = extras_by_request.get(k, {})
        t_end = _emit_inner(em, rng, config, 0, t_start, SERVER_PID, tid, req_id, extras, io_seq)
        _emit_request_syscalls(em, t_start, t_end, SERVER_PID, tid)
        worker_free[tid] = t_end + 1
    _emit_noise(em, rng, config, io_seq)
    return TraceStream(events=em.sorted_events())
