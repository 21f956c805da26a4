"""Randomized invariants over small generated graphs and queries."""
from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from partmatch.engine import EngineConfig, execute
from partmatch.graph import ANY_LABEL, Graph, graph_to_text, parse_graph
from partmatch.oracle import brute_force
from partmatch.partition import kway_assign, relabel_virtual
from partmatch.query import ConjunctiveQuery, compile
from partmatch.routing import DESIGNS, RangeTable, build_pair
from partmatch.store import build_partitions, has_edge, in_edges, out_edges, scan_by_target

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def graphs(draw, max_n=12, max_m=40, max_labels=3):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(0, max_m))
    L = draw(st.integers(1, max_labels))
    src = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    dst = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    lab = draw(st.lists(st.integers(0, L - 1), min_size=m, max_size=m))
    return Graph.from_arrays(n, src, lab, dst, labels=L)


@st.composite
def connected_queries(draw, labels=("l0", "l1", "*")):
    k = draw(st.integers(1, 4))
    names = ["X0"]
    triples = []
    for _ in range(k):
        anchor = draw(st.sampled_from(names))
        other = draw(st.sampled_from(names + [f"X{len(names)}"]))
        if other not in names:
            names.append(other)
        s, d = (anchor, other) if draw(st.booleans()) else (other, anchor)
        triples.append((s, draw(st.sampled_from(labels)), d))
    return ConjunctiveQuery.from_triples(triples)


@SETTINGS
@given(graphs(), st.integers(1, 5))
def test_edge_conservation_and_access(g, P):
    parts = np.arange(g.vertex_count) % P
    ps = build_partitions(g, parts, parts, P=P)
    assert sum(s.local_edge_count for s in ps.partitions) == g.edge_count
    assert sum(len(s.reverse) for s in ps.partitions) == g.edge_count
    for v in range(g.vertex_count):
        owner = ps[int(parts[v])]
        assert sorted(out_edges(owner, v)) == sorted((l, d) for s, l, d in g.edges() if s == v)
        incoming = sorted((l, s) for s, l, d in g.edges() if d == v)
        assert in_edges(owner, v) == incoming
        assert sorted(e for st_ in ps.partitions for e in scan_by_target(st_, v)) == incoming
    for s, l, d in g.edges():
        assert has_edge(ps[int(parts[s])], s, l, d)
        assert has_edge(ps[int(parts[s])], s, ANY_LABEL, d)


@SETTINGS
@given(graphs())
def test_parse_is_idempotent(g):
    text = graph_to_text(g)
    once = parse_graph(text)
    assert graph_to_text(once) == text
    assert parse_graph(graph_to_text(once)) == once


@SETTINGS
@given(graphs(max_n=30, max_m=80), st.integers(1, 4), st.integers(0, 3))
def test_relabel_invariants(g, P, seed):
    P = min(P, g.vertex_count)
    a = kway_assign(g, P, seed=seed)
    rel = relabel_virtual(g, a)
    assert sorted(rel.dictionary.tolist()) == list(range(g.vertex_count))
    assert np.array_equal(RangeTable(rel.bounds).route_many(rel.virt), a.parts)
    assert np.array_equal(rel.dictionary[rel.virt], np.arange(g.vertex_count))
    assert rel.virtual_graph.edge_count == g.edge_count


@pytest.mark.filterwarnings("ignore:label .* does not occur")
@SETTINGS
@given(graphs(), connected_queries(), st.sampled_from(DESIGNS), st.booleans(),
       st.sampled_from(["homomorphism", "injective"]), st.integers(1, 3), st.integers(1, 4))
def test_engine_matches_oracle(g, cq, design, redundancy, semantics, workers, P):
    P = min(P, g.vertex_count)
    pair, ps, _ = build_pair(design, g, P, redundancy=redundancy)
    res, m = execute(compile(cq, redundancy, semantics), ps, pair,
                     EngineConfig(workers_per_node=workers, batch_size=3))
    assert res.as_set() == brute_force(g, cq, semantics).tuples
    assert m.msgs_processed == m.msgs_sent and m.completions == 1 and m.outstanding == 0


@SETTINGS
@given(graphs(), connected_queries())
def test_homomorphism_contains_injective(g, cq):
    assert brute_force(g, cq, "injective").tuples <= brute_force(g, cq).tuples


@SETTINGS
@given(graphs(), connected_queries(), st.randoms(use_true_random=False))
def test_predicate_order_does_not_change_results(g, cq, rnd: random.Random):
    preds = list(cq.predicates)
    rnd.shuffle(preds)
    shuffled = ConjunctiveQuery(cq.variables, tuple(preds))
    assert brute_force(g, shuffled).tuples == brute_force(g, cq).tuples
