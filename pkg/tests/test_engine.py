from __future__ import annotations

import threading

import numpy as np
import pytest

import partmatch.engine as engine
from partmatch.engine import (CompletionTracker, EngineConfig, Message, ResultSet, apply_op, dispatch, execute,
                              terminate_detect, translate_results)
from partmatch.errors import ConfigurationError, InternalError
from partmatch.graph import Graph, synth_graph
from partmatch.oracle import brute_force
from partmatch.query import Addressing, OpKind, PlanOp, bundled_query, compile, parse_query
from partmatch.routing import DESIGNS, ComputeTable, RoutingPair, build_pair
from partmatch.store import build_partitions

from conftest import ids, tokens

UNB = -1


def run(graph, query, design="compute", P=2, workers=1, nodes=1, redundancy=False, semantics="homomorphism",
        batch_size=64, seed=0):
    pair, ps, _ = build_pair(design, graph, P, seed=seed, redundancy=redundancy, nodes=nodes)
    qep = compile(query if not isinstance(query, str) else bundled_query(query), redundancy, semantics)
    return execute(qep, ps, pair, EngineConfig(workers_per_node=workers, nodes=nodes, batch_size=batch_size))


def single_store(graph, redundancy=False):
    zeros = np.zeros(graph.vertex_count, dtype=np.int64)
    return build_partitions(graph, zeros, zeros if redundancy else None, P=1)[0]


# -- apply_op ------------------------------------------------------------------------


def test_unbound_wildcard_yields_one_state_per_edge(gex):
    op = PlanOp(OpKind.UNBOUND, 0, Addressing.BROADCAST, 0, 1, "*")
    succ, res = apply_op(op, single_store(gex), [UNB, UNB])
    assert len(succ) == 7 and len(res) == 0
    assert {tuple(r) for r in succ.tolist()} == set((s, d) for s, _, d in gex.edges())


def test_edge_bound_missing_edge(gex):
    D, C = ids(gex, "D", "C")
    op = PlanOp(OpKind.EDGE_BOUND, 1, Addressing.UNICAST_FORWARD, 0, 1, "*")
    succ, _ = apply_op(op, single_store(gex), [D, C])
    assert len(succ) == 0
    G, F = ids(gex, "G", "F")
    assert apply_op(op, single_store(gex), [G, F])[0].tolist() == [[G, F]]


def test_vertex_bound_dst_scans_targets(gex):
    (B,) = ids(gex, "B")
    op = PlanOp(OpKind.VERTEX_BOUND_DST, 1, Addressing.BROADCAST, 0, 1, "*")
    succ, _ = apply_op(op, single_store(gex), [UNB, B])
    assert {r[0] for r in succ.tolist()} == set(ids(gex, "A", "D", "E", "G"))
    rev = PlanOp(OpKind.VERTEX_BOUND_DST, 1, Addressing.UNICAST_REVERSE, 0, 1, "*")
    assert sorted(apply_op(rev, single_store(gex, True), [UNB, B])[0].tolist()) == sorted(succ.tolist())


def test_vertex_bound_src_and_injective_filter(gex):
    A, B, C = ids(gex, "A", "B", "C")
    op = PlanOp(OpKind.VERTEX_BOUND_SRC, 1, Addressing.UNICAST_FORWARD, 0, 2, "l")
    succ, _ = apply_op(op, single_store(gex), [A, B, UNB])
    assert sorted(succ.tolist()) == [[A, B, B], [A, B, C]]
    succ, _ = apply_op(op, single_store(gex), [A, B, UNB], "injective")
    assert succ.tolist() == [[A, B, C]]


def test_last_operator_emits_results(gex):
    op = PlanOp(OpKind.UNBOUND, 0, Addressing.BROADCAST, 0, 1, "*")
    succ, res = apply_op(op, single_store(gex), [UNB, UNB], last=True)
    assert len(succ) == 0 and len(res) == 7


def test_rebinding_is_an_internal_error(gex):
    A, B = ids(gex, "A", "B")
    op = PlanOp(OpKind.VERTEX_BOUND_SRC, 1, Addressing.UNICAST_FORWARD, 0, 1, "*")
    with pytest.raises(InternalError):
        apply_op(op, single_store(gex), [A, B])


# -- dispatch, translation, termination -------------------------------------------------


def test_broadcast_dispatch_fans_out():
    pair = RoutingPair(ComputeTable(4))
    op = PlanOp(OpKind.VERTEX_BOUND_DST, 2, Addressing.BROADCAST, 3, 2, "*")
    out = dispatch(Message(0, 2, np.array([1, 2, 3, UNB]), -1), op, pair)
    assert sorted(m.target for m in out) == [0, 1, 2, 3]


def test_unicast_dispatch_routes_bound_vertex():
    pair = RoutingPair(ComputeTable(4), ComputeTable(4))
    fwd = PlanOp(OpKind.VERTEX_BOUND_SRC, 1, Addressing.UNICAST_FORWARD, 0, 2, "*")
    out = dispatch(Message(0, 1, np.array([7, 2, UNB]), -1), fwd, pair)
    assert [m.target for m in out] == [3]
    rev = PlanOp(OpKind.VERTEX_BOUND_DST, 1, Addressing.UNICAST_REVERSE, 2, 1, "*")
    assert [m.target for m in dispatch(Message(0, 1, np.array([7, 5, UNB]), -1), rev, pair)] == [1]


def test_translate_results():
    raw = ResultSet([[1, 3]])
    assert list(translate_results(raw, np.array([0, 2, 1, 3]))) == [(2, 3)]
    assert translate_results(raw, None) is raw
    with pytest.raises(InternalError):
        translate_results(ResultSet([[4, 0]]), np.array([0, 2, 1, 3]))


def test_result_set_dedups_and_sorts():
    rs = ResultSet([[2, 1], [0, 5], [2, 1]])
    assert list(rs) == [(0, 5), (2, 1)] and len(rs) == 2
    assert rs == {(0, 5), (2, 1)} and (2, 1) in rs
    big = ResultSet([[10**12, 1], [10**12, 1], [3, 4]])
    assert list(big) == [(3, 4), (10**12, 1)]


def test_completion_tracker():
    t = CompletionTracker()
    t.add(3)
    t.done(3)
    assert not terminate_detect(t, timeout=0)  # seeding not finished yet
    t.add(1)
    t.finish_seeding()
    t.done(1)
    assert terminate_detect(t, timeout=0) and t.completions == 1 and t.outstanding == 0
    with pytest.raises(InternalError):
        t.done(1)


def test_no_enqueue_after_completion():
    t = CompletionTracker()
    t.finish_seeding()
    with pytest.raises(InternalError):
        t.add(1)


# -- execute --------------------------------------------------------------------------


@pytest.mark.parametrize("design", DESIGNS)
@pytest.mark.parametrize("workers", [1, 3])
@pytest.mark.parametrize("redundancy", [False, True])
def test_gex_quad(gex, design, workers, redundancy):
    res, m = run(gex, "quad", design, P=2, workers=workers, redundancy=redundancy)
    assert len(res) == 31
    inj, _ = run(gex, "quad", design, P=2, workers=workers, redundancy=redundancy, semantics="injective")
    assert tokens(gex, inj) == {("E", "F", "B", "G"), ("E", "B", "F", "G"), ("G", "F", "B", "E"),
                                ("G", "B", "F", "E")}
    assert len(run(gex, "v", design, P=2, workers=workers, redundancy=redundancy)[0]) == 0


@pytest.mark.parametrize("workers", [1, 4])
def test_empty_graph_terminates(workers):
    g = Graph.from_arrays(5, [], [], [])
    res, m = run(g, "quad", P=3, workers=workers)
    assert len(res) == 0
    assert m.msgs_sent == [3, 0, 0, 0] and m.msgs_processed == [3, 0, 0, 0]
    assert m.completions == 1 and m.outstanding == 0 and m.queues_empty


def test_zero_vertex_graph():
    res, m = run(Graph.from_arrays(0, [], [], []), "edge", P=2)
    assert len(res) == 0 and m.completions == 1


def test_deterministic_mode_conserves_messages():
    g = synth_graph(300, 1500, labels=2, model="clustered", seed=2)
    res, m = run(g, "quad", "lookup-kway", P=5, workers=1)
    assert m.total_processed == m.total_sent
    assert m.msgs_processed == m.msgs_sent
    assert m.results >= len(res) == m.distinct_results
    assert sum(m.buckets) == m.total_sent


def test_deterministic_mode_is_repeatable():
    g = synth_graph(200, 900, seed=3)
    a = run(g, "v", "hybrid", P=4)
    b = run(g, "v", "hybrid", P=4)
    assert a[0] == b[0]
    assert a[1].msgs_sent == b[1].msgs_sent


def test_configuration_independence():
    g = synth_graph(150, 600, labels=2, model="clustered", seed=6)
    for name in ("quad", "v", "triangle"):
        reference = None
        for P in (1, 2, 7, 16):
            for workers in (1, 2, 8):
                for design in DESIGNS:
                    for red in (False, True):
                        res, _ = run(g, name, design, P=P, workers=workers, redundancy=red, seed=P)
                        if reference is None:
                            reference = res
                        assert res == reference, (name, P, workers, design, red)
        assert reference == brute_force(g, bundled_query(name)).tuples


def prefix_count(graph, cq, k):
    """Matches of the first ``k`` predicates (single label, so one state per match)."""
    prefix = parse_query("\n".join(
        f"{cq.variables[p.src_var]} {p.label} {cq.variables[p.dst_var]}" for p in cq.predicates[:k]))
    return brute_force(graph, prefix).count


@pytest.mark.parametrize("name", ["quad", "v"])
@pytest.mark.parametrize("P", [3, 8])
def test_broadcast_accounting_recount(name, P):
    g = synth_graph(300, 1200, model="clustered", seed=4)
    cq = bundled_query(name)
    _, on = run(g, cq, "compute", P=P, redundancy=True, workers=2)
    assert on.broadcast_fanout == P
    _, off = run(g, cq, "compute", P=P, redundancy=False, workers=2)
    qep = compile(cq)
    entering = sum(prefix_count(g, cq, op.predicate_index) for op in qep.ops
                   if op.kind is OpKind.VERTEX_BOUND_DST)
    assert off.broadcast_fanout == P * (1 + entering)


def test_nodes_split_sends():
    g = synth_graph(400, 2000, model="clustered", seed=5)
    res, m = run(g, "quad", "hybrid", P=6, workers=2, nodes=3)
    assert m.local_sends + m.remote_sends == m.total_sent
    assert m.remote_sends > 0
    assert res == brute_force(g, bundled_query("quad")).tuples
    assert len(m.routing_ns) == 6


def test_partition_claims_are_exclusive(monkeypatch):
    active: set[int] = set()
    guard = threading.Lock()
    violations = []
    real = engine._apply

    def watched(op, store, states, label, injective):
        with guard:
            if store.partition_id in active:
                violations.append(store.partition_id)
            active.add(store.partition_id)
        try:
            return real(op, store, states, label, injective)
        finally:
            with guard:
                active.discard(store.partition_id)

    monkeypatch.setattr(engine, "_apply", watched)
    g = synth_graph(500, 3000, model="clustered", seed=1)
    res, m = run(g, "quad", "compute", P=4, workers=8, batch_size=4)
    assert not violations
    assert m.completions == 1 and m.msgs_processed == m.msgs_sent


def test_worker_failure_propagates(monkeypatch):
    def boom(*args):
        raise RuntimeError("kernel exploded")

    monkeypatch.setattr(engine, "_apply", boom)
    with pytest.raises(RuntimeError, match="kernel exploded"):
        run(synth_graph(50, 100, seed=1), "edge", P=2, workers=3)


def test_reverse_plan_without_reverse_stores_is_rejected():
    g = synth_graph(50, 200, seed=1)
    pair, ps, _ = build_pair("compute", g, 2, redundancy=False)
    with pytest.raises(ConfigurationError):
        execute(compile(bundled_query("quad"), redundancy=True), ps, pair)


def test_config_mismatches_are_rejected():
    g = synth_graph(50, 200, seed=1)
    pair, ps, _ = build_pair("compute", g, 2)
    qep = compile(bundled_query("edge"))
    with pytest.raises(ConfigurationError):
        execute(qep, ps, pair, EngineConfig(partitions=3))
    with pytest.raises(ConfigurationError):
        execute(qep, ps, pair, EngineConfig(semantics="injective"))
    with pytest.raises(ConfigurationError):
        execute(qep, ps, pair, EngineConfig(redundancy=True))
    pair2, ps2, _ = build_pair("compute", g, 2, nodes=2)
    with pytest.raises(ConfigurationError):
        execute(qep, ps2, pair2, EngineConfig(nodes=1))


@pytest.mark.parametrize("kwargs", [{"workers_per_node": 0}, {"nodes": 0}, {"batch_size": 0},
                                    {"partitions": 0}, {"semantics": "iso"}])
def test_engine_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        EngineConfig(**kwargs)


def test_unknown_label_matches_nothing():
    g = synth_graph(30, 90, seed=2)
    with pytest.warns(UserWarning, match="does not occur"):
        res, m = run(g, parse_query("X nosuch Y"), P=2)
    assert len(res) == 0 and m.completions == 1


def test_metrics_rows():
    g = synth_graph(60, 200, seed=3)
    _, m = run(g, "v", P=3, workers=2)
    names = {r[0] for r in m.rows()}
    assert {"runtime_ns", "routing_ns", "msgs_sent", "msgs_processed", "broadcast_fanout",
            "unicasts"} <= names
    assert any(n.startswith("bucket_") for n in names)
    assert m.runtime_ns > 0


def test_injected_clock_drives_runtime():
    ticks = iter(range(0, 10**9, 1000))
    g = synth_graph(30, 60, seed=1)
    pair, ps, _ = build_pair("compute", g, 2)
    _, m = execute(compile(bundled_query("edge")), ps, pair, EngineConfig(bucket_width_ns=10**6),
                   clock=lambda: next(ticks))
    assert m.runtime_ns % 1000 == 0 and m.buckets == [m.total_sent]
