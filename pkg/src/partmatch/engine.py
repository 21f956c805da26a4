"""Asynchronous, partition-local execution of compiled query plans.

Every partition owns an inbound queue of packets.  A packet carries the index
of the next operator and a block of matching states (one row per state, one
column per query variable, ``-1`` for unbound).  Each state row counts as one
message; packets only batch them for transport.  A broadcast enqueues the same
read-only block on every partition.

Worker threads belong to a node and loop over that node's partitions.  A
worker claims a partition with pending work by a non-blocking lock acquire,
drains up to ``batch_size`` messages, runs the operator kernels against the
partition's store, routes the successors and releases the claim.

Completion is detected with an outstanding-message counter: it grows before a
message becomes visible in a queue and shrinks only after the message and all
of its successors' enqueues are done.
"""
from __future__ import annotations

import itertools
import threading
import time
import warnings
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, InternalError
from .query import QEP, SEMANTICS, Addressing, OpKind, PlanOp
from .routing import RoutingPair
from .store import PartitionSet, PartitionStore

UNBOUND = -1

Clock = Callable[[], int]

_query_ids = itertools.count()


@dataclass
class Message:
    query_id: int
    op_index: int
    state: np.ndarray
    target: int


@dataclass(frozen=True)
class EngineConfig:
    workers_per_node: int = 1
    nodes: int = 1
    partitions: int | None = None
    batch_size: int = 64
    bucket_width_ns: int = 1_000_000
    semantics: str | None = None
    redundancy: bool | None = None
    idle_wait_s: float = 0.002

    def __post_init__(self) -> None:
        if self.workers_per_node < 1:
            raise ConfigurationError("workers per node must be >= 1")
        if self.nodes < 1:
            raise ConfigurationError("node count must be >= 1")
        if self.partitions is not None and self.partitions < 1:
            raise ConfigurationError("partition count must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.bucket_width_ns < 1:
            raise ConfigurationError("bucket width must be >= 1 ns")
        if self.semantics is not None and self.semantics not in SEMANTICS:
            raise ConfigurationError(f"unknown semantics {self.semantics!r}")

    @property
    def workers(self) -> int:
        return self.workers_per_node * self.nodes

    @property
    def deterministic(self) -> bool:
        return self.workers == 1


@dataclass
class Metrics:
    runtime_ns: int = 0
    routing_ns: list[int] = field(default_factory=list)
    routing_calls: list[int] = field(default_factory=list)
    msgs_sent: list[int] = field(default_factory=list)
    msgs_processed: list[int] = field(default_factory=list)
    unicasts: int = 0
    broadcast_fanout: int = 0
    local_sends: int = 0
    remote_sends: int = 0
    results: int = 0
    distinct_results: int = 0
    buckets: list[int] = field(default_factory=list)
    completions: int = 0
    outstanding: int = 0
    queues_empty: bool = True

    @property
    def total_sent(self) -> int:
        return sum(self.msgs_sent)

    @property
    def total_processed(self) -> int:
        return sum(self.msgs_processed)

    def rows(self) -> Iterator[tuple[str, str, str, int]]:
        """``(metric, op_index, worker, value)`` rows; blank fields are not applicable."""
        yield "runtime_ns", "", "", self.runtime_ns
        for w, ns in enumerate(self.routing_ns):
            yield "routing_ns", "", str(w), ns
        for i, n in enumerate(self.msgs_sent):
            yield "msgs_sent", str(i), "", n
        for i, n in enumerate(self.msgs_processed):
            yield "msgs_processed", str(i), "", n
        yield "broadcast_fanout", "", "", self.broadcast_fanout
        yield "unicasts", "", "", self.unicasts
        yield "local_sends", "", "", self.local_sends
        yield "remote_sends", "", "", self.remote_sends
        yield "results", "", "", self.results
        yield "distinct_results", "", "", self.distinct_results
        for i, n in enumerate(self.buckets):
            yield f"bucket_{i}", "", "", n


def _unique_rows(arr: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically with duplicates removed."""
    base = int(arr.max()) + 1 if arr.size else 1
    if arr.min(initial=0) >= 0 and base ** arr.shape[1] < 2**62:
        # Pack each row into one mixed-radix key; order of keys = row order.
        key = np.zeros(len(arr), dtype=np.int64)
        for c in range(arr.shape[1]):
            key = key * base + arr[:, c]
        _, first = np.unique(key, return_index=True)
        return np.ascontiguousarray(arr[first])
    arr = arr[np.lexsort(arr.T[::-1])]
    keep = np.ones(len(arr), dtype=bool)
    keep[1:] = np.any(arr[1:] != arr[:-1], axis=1)
    return np.ascontiguousarray(arr[keep])


class ResultSet:
    """Deduplicated binding tuples, one column per query variable."""

    def __init__(self, rows, width: int | None = None):
        arr = np.asarray(rows, dtype=np.int64)
        if arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, width or 0)
        if arr.ndim != 2:
            raise ValueError("result rows must form a 2-D array")
        if len(arr) > 1:
            arr = _unique_rows(arr)
        arr.setflags(write=False)
        self.rows = arr

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return iter(map(tuple, self.rows.tolist()))

    def __contains__(self, item) -> bool:
        return tuple(item) in self.as_set()

    def as_set(self) -> frozenset[tuple[int, ...]]:
        return frozenset(self)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ResultSet):
            return self.rows.shape == other.rows.shape and bool(np.array_equal(self.rows, other.rows))
        if isinstance(other, (set, frozenset)):
            return self.as_set() == other
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"ResultSet({len(self)} tuples)"


def translate_results(raw: ResultSet, dictionary: np.ndarray | None) -> ResultSet:
    """Map engine (virtual) ids back to original ids; identity without a dictionary."""
    if dictionary is None:
        return raw
    d = np.asarray(dictionary, dtype=np.int64)
    if len(raw) and (raw.rows.min() < 0 or raw.rows.max() >= len(d)):
        raise InternalError("result references a virtual id outside the dictionary")
    return ResultSet(d[raw.rows], raw.width)


class CompletionTracker:
    """Outstanding-message counter for one query.

    ``add`` must run before the messages become consumable and ``done`` after
    their processing (including successor enqueues) has finished.  The event
    fires once, when the count returns to zero after seeding is over.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._count = 0
        self._seeded = False
        self.completions = 0
        self.event = threading.Event()

    @property
    def outstanding(self) -> int:
        return self._count

    def add(self, n: int) -> None:
        with self._lock:
            if self.event.is_set():
                raise InternalError("message enqueued after completion")
            self._count += n

    def done(self, n: int) -> None:
        with self._lock:
            self._count -= n
            if self._count < 0:
                raise InternalError("outstanding message counter underflow")
            self._check()

    def finish_seeding(self) -> None:
        with self._lock:
            self._seeded = True
            self._check()

    def _check(self) -> None:
        if self._seeded and self._count == 0 and not self.event.is_set():
            self.completions += 1
            self.event.set()


def terminate_detect(tracker: CompletionTracker, timeout: float | None = None) -> bool:
    """Block until the query's completion signal fires; False on timeout."""
    return tracker.event.wait(timeout)


def _as_rows(states) -> np.ndarray:
    arr = np.ascontiguousarray(states, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def _apply(op: PlanOp, store: PartitionStore, states: np.ndarray, label: int, injective: bool) -> np.ndarray:
    # Every row of a block shares one binding pattern, so the first row speaks for all.
    if len(states) and any(states[0, c] != UNBOUND for c in op.binds):
        raise InternalError(f"operator {op.predicate_index} would rebind an already bound variable")
    s, d = op.src_var, op.dst_var
    if op.kind is OpKind.UNBOUND:
        return K.unbound(states, s, d, *store.forward.arrays, label, injective)
    if op.kind is OpKind.VERTEX_BOUND_SRC:
        return K.expand(states, s, d, *store.forward.arrays, label, injective)
    if op.kind is OpKind.VERTEX_BOUND_DST:
        if op.addressing is Addressing.UNICAST_REVERSE:
            if store.reverse is None:
                raise ConfigurationError("target-bound unicast needs reverse stores")
            adj = store.reverse
        else:
            adj = store.by_target
        return K.expand(states, d, s, *adj.arrays, label, injective)
    return K.edge_check(states, s, d, *store.forward.arrays, label)


def apply_op(op: PlanOp, store: PartitionStore, state, semantics: str = "homomorphism", *,
             last: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Run one operator on ``state`` (a binding row or block of rows) against ``store``.

    Returns ``(successors, results)``; exactly one of them is non-empty-capable:
    a last operator emits results, any other emits successors.
    """
    if semantics not in SEMANTICS:
        raise ConfigurationError(f"unknown semantics {semantics!r}")
    rows = _as_rows(state)
    out = _apply(op, store, rows, store.label_id(op.label), semantics == "injective")
    empty = out[:0]
    return (empty, out) if last else (out, empty)


def _route_split(states: np.ndarray, op: PlanOp, pair: RoutingPair) -> tuple[list[tuple[int, np.ndarray]], int]:
    """Split a block of states by the partition that must run ``op`` on them.

    Returns the per-target blocks and the nanoseconds spent in the routing table.
    """
    P = pair.P
    if op.addressing is Addressing.BROADCAST:
        return [(p, states) for p in range(P)], 0
    table = pair.table("forward" if op.addressing is Addressing.UNICAST_FORWARD else "reverse")
    keys = states[:, op.routing_var]
    t0 = time.perf_counter_ns()
    targets = np.asarray(table.route_many(keys), dtype=np.int64)
    elapsed = time.perf_counter_ns() - t0
    if len(targets) and (targets.min() < 0 or targets.max() >= P):
        raise InternalError("routing table returned a partition outside [0, P)")
    first = int(targets[0]) if len(targets) else 0
    if np.all(targets == first):
        return [(first, states)], elapsed
    ordered, bounds = K.bucket_rows(states, targets, P)
    blocks = []
    for p in range(P):
        lo, hi = bounds[p], bounds[p + 1]
        if hi > lo:
            blocks.append((p, ordered[lo:hi]))
    return blocks, elapsed


def dispatch(message: Message, op: PlanOp, routing_pair: RoutingPair) -> list[Message]:
    """Address ``message`` for ``op``: one copy per target partition."""
    rows = _as_rows(message.state)
    blocks, _ = _route_split(rows, op, routing_pair)
    return [Message(message.query_id, message.op_index, b[0] if b.shape[0] == 1 else b, p)
            for p, b in blocks]


@dataclass
class _Packet:
    op_index: int
    states: np.ndarray


class _WorkerStats:
    def __init__(self, n_ops: int) -> None:
        self.sent = [0] * n_ops
        self.processed = [0] * n_ops
        self.unicasts = 0
        self.fanout = 0
        self.local = 0
        self.remote = 0
        self.routing_ns = 0
        self.routing_calls = 0
        self.buckets: dict[int, int] = defaultdict(int)
        self.results: list[np.ndarray] = []


class _Run:
    def __init__(self, qep: QEP, pset: PartitionSet, pair: RoutingPair, config: EngineConfig,
                 clock: Clock, semantics: str):
        self.qep = qep
        self.pset = pset
        self.pair = pair
        self.config = config
        self.clock = clock
        self.ops = qep.ops
        self.nvars = len(qep.query.variables)
        self.P = pset.P
        self.injective = semantics == "injective"
        self.labels = [pset.label_id(op.label) for op in self.ops]
        for op, lab in zip(self.ops, self.labels):
            if lab == K.NO_LABEL:
                warnings.warn(f"label {op.label!r} does not occur in the graph; "
                              f"predicate {op.predicate_index} matches nothing", stacklevel=3)
        self.query_id = next(_query_ids)
        self.placement = pset.placement
        self.queues: list[deque[_Packet]] = [deque() for _ in range(self.P)]
        self.claims = [threading.Lock() for _ in range(self.P)]
        self.holder = [-1] * self.P
        self.node_parts = [[p for p in range(self.P) if self.placement[p] == n]
                           for n in range(config.nodes)]
        self.node_cond = [threading.Condition() for _ in range(config.nodes)]
        self.tracker = CompletionTracker()
        self.errors: list[BaseException] = []
        self.stop = threading.Event()
        self.start_ns = 0

    # -- queueing -----------------------------------------------------------

    def _enqueue(self, p: int, packet: _Packet, stats: _WorkerStats, node: int) -> None:
        self.tracker.add(len(packet.states))
        self.queues[p].append(packet)
        target_node = self.placement[p]
        if target_node == node:
            stats.local += len(packet.states)
        else:
            stats.remote += len(packet.states)
        if not self.config.deterministic:
            cond = self.node_cond[target_node]
            with cond:
                cond.notify()

    def _send(self, states: np.ndarray, op_index: int, stats: _WorkerStats, node: int) -> None:
        k = len(states)
        if k == 0:
            return
        states.setflags(write=False)
        op = self.ops[op_index]
        blocks, elapsed = _route_split(states, op, self.pair)
        if op.addressing is Addressing.BROADCAST:
            stats.fanout += k * self.P
            sent = k * self.P
        else:
            stats.unicasts += k
            stats.routing_ns += elapsed
            stats.routing_calls += k
            sent = k
        stats.sent[op_index] += sent
        stats.buckets[(self.clock() - self.start_ns) // self.config.bucket_width_ns] += sent
        for p, block in blocks:
            self._enqueue(p, _Packet(op_index, block), stats, node)

    def _drain(self, p: int) -> list[_Packet]:
        q = self.queues[p]
        budget = self.config.batch_size
        taken = []
        while budget > 0 and q:
            pkt = q.popleft()
            k = len(pkt.states)
            if k > budget:
                q.appendleft(_Packet(pkt.op_index, pkt.states[budget:]))
                pkt = _Packet(pkt.op_index, pkt.states[:budget])
                k = budget
            taken.append(pkt)
            budget -= k
        return taken

    # -- processing ---------------------------------------------------------

    def _process(self, p: int, packets: list[_Packet], stats: _WorkerStats, node: int) -> None:
        by_op: dict[int, list[np.ndarray]] = defaultdict(list)
        for pkt in packets:
            by_op[pkt.op_index].append(pkt.states)
        store = self.pset[p]
        last = len(self.ops) - 1
        total = 0
        for i in sorted(by_op):
            blocks = by_op[i]
            states = blocks[0] if len(blocks) == 1 else np.concatenate(blocks)
            k = len(states)
            out = _apply(self.ops[i], store, states, self.labels[i], self.injective)
            stats.processed[i] += k
            total += k
            if i == last:
                if len(out):
                    stats.results.append(out)
            else:
                self._send(out, i + 1, stats, node)
        self.tracker.done(total)

    def _try_partition(self, p: int, wid: int, stats: _WorkerStats, node: int) -> bool:
        if not self.queues[p]:
            return False
        lock = self.claims[p]
        if not lock.acquire(blocking=False):
            return False
        try:
            if self.holder[p] != -1:
                raise InternalError(f"partition {p} claimed by workers {self.holder[p]} and {wid}")
            self.holder[p] = wid
            try:
                packets = self._drain(p)
                if packets:
                    self._process(p, packets, stats, node)
            finally:
                self.holder[p] = -1
        finally:
            lock.release()
        return bool(packets)

    def worker_loop(self, wid: int, node: int, stats: _WorkerStats) -> None:
        parts = self.node_parts[node]
        cond = self.node_cond[node]
        done = self.tracker.event
        while not done.is_set() and not self.stop.is_set():
            busy = False
            for p in parts:
                if self._try_partition(p, wid, stats, node):
                    busy = True
            if busy:
                continue
            if self.config.deterministic:
                if not done.is_set():
                    raise InternalError("single worker found no pending work before completion")
                break
            with cond:
                if not done.is_set():
                    cond.wait(self.config.idle_wait_s)

    def _thread_main(self, wid: int, node: int, stats: _WorkerStats) -> None:
        try:
            self.worker_loop(wid, node, stats)
        except BaseException as exc:  # surfaced to the caller after join
            self.errors.append(exc)
            self.stop.set()
            self._wake_all()

    def _wake_all(self) -> None:
        for cond in self.node_cond:
            with cond:
                cond.notify_all()

    def _seed(self, stats: _WorkerStats) -> None:
        state = np.full((1, self.nvars), UNBOUND, dtype=np.int64)
        self._send(state, 0, stats, 0)
        self.tracker.finish_seeding()

    # -- driver -------------------------------------------------------------

    def run(self) -> tuple[ResultSet, Metrics]:
        cfg = self.config
        n_ops = len(self.ops)
        coord = _WorkerStats(n_ops)
        workers = [_WorkerStats(n_ops) for _ in range(cfg.workers)]
        self.start_ns = self.clock()
        if cfg.deterministic:
            self._seed(coord)
            self.worker_loop(0, 0, workers[0])
        else:
            threads = []
            for wid in range(cfg.workers):
                node = wid // cfg.workers_per_node
                t = threading.Thread(target=self._thread_main, args=(wid, node, workers[wid]),
                                     name=f"partmatch-w{wid}", daemon=True)
                threads.append(t)
                t.start()
            try:
                self._seed(coord)
                while not self.tracker.event.wait(0.05):
                    if self.errors:
                        break
            finally:
                self.stop.set()
                self._wake_all()
                for t in threads:
                    t.join()
            if self.errors:
                raise self.errors[0]
        runtime = self.clock() - self.start_ns
        return self._finish(coord, workers, runtime)

    def _finish(self, coord: _WorkerStats, workers: list[_WorkerStats], runtime: int) -> tuple[ResultSet, Metrics]:
        everyone = [coord, *workers]
        n_ops = len(self.ops)
        result_blocks = [b for s in workers for b in s.results]
        multiset = sum(len(b) for b in result_blocks)
        raw = ResultSet(np.concatenate(result_blocks) if result_blocks
                        else np.zeros((0, self.nvars), dtype=np.int64))
        results = translate_results(raw, self.pair.dictionary)
        nb = max((b for s in everyone for b in s.buckets), default=-1) + 1
        buckets = [sum(s.buckets.get(i, 0) for s in everyone) for i in range(nb)]
        m = Metrics(
            runtime_ns=runtime,
            routing_ns=[s.routing_ns for s in workers],
            routing_calls=[s.routing_calls for s in workers],
            msgs_sent=[sum(s.sent[i] for s in everyone) for i in range(n_ops)],
            msgs_processed=[sum(s.processed[i] for s in everyone) for i in range(n_ops)],
            unicasts=sum(s.unicasts for s in everyone),
            broadcast_fanout=sum(s.fanout for s in everyone),
            local_sends=sum(s.local for s in everyone),
            remote_sends=sum(s.remote for s in everyone),
            results=multiset,
            distinct_results=len(results),
            buckets=buckets,
            completions=self.tracker.completions,
            outstanding=self.tracker.outstanding,
            queues_empty=all(not q for q in self.queues),
        )
        return results, m


def _validate(qep: QEP, pset: PartitionSet, pair: RoutingPair, config: EngineConfig) -> str:
    semantics = config.semantics or qep.semantics
    if config.semantics is not None and config.semantics != qep.semantics:
        raise ConfigurationError(
            f"plan compiled for {qep.semantics} semantics but engine configured for {config.semantics}")
    if config.redundancy is not None and config.redundancy != qep.redundancy:
        raise ConfigurationError("redundancy flag differs between plan and engine configuration")
    if config.partitions is not None and config.partitions != pset.P:
        raise ConfigurationError(f"configured for {config.partitions} partitions, store has {pset.P}")
    if pair.P != pset.P:
        raise ConfigurationError(f"routing covers {pair.P} partitions, store has {pset.P}")
    if qep.needs_reverse and (not pset.redundant or pair.reverse is None):
        raise ConfigurationError("plan uses target-bound unicasts but reverse stores or routing are missing")
    if max(pset.placement, default=0) >= config.nodes:
        raise ConfigurationError(
            f"partition placement uses {max(pset.placement) + 1} nodes, engine has {config.nodes}")
    return semantics


def execute(qep: QEP, partition_set: PartitionSet, routing_pair: RoutingPair,
            config: EngineConfig | None = None, clock: Clock = time.perf_counter_ns) -> tuple[ResultSet, Metrics]:
    """Run ``qep`` to completion; results are in original vertex ids."""
    config = config or EngineConfig()
    semantics = _validate(qep, partition_set, routing_pair, config)
    return _Run(qep, partition_set, routing_pair, config, clock, semantics).run()


__all__ = [
    "CompletionTracker", "EngineConfig", "Message", "Metrics", "ResultSet", "apply_op",
    "dispatch", "execute", "terminate_detect", "translate_results",
]
