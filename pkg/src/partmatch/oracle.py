"""Brute-force conjunctive-query matcher used as ground truth.

Works from the graph's flat edge list only; shares no code with the
partitioned stores, routing or the engine.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .graph import WILDCARD, Graph
from .query import ConjunctiveQuery


@dataclass(frozen=True)
class OracleResult:
    tuples: frozenset[tuple[int, ...]]

    @property
    def count(self) -> int:
        return len(self.tuples)

    def __len__(self) -> int:
        return len(self.tuples)

    def __contains__(self, item) -> bool:
        return tuple(item) in self.tuples


def brute_force(graph: Graph, cq: ConjunctiveQuery, semantics: str = "homomorphism") -> OracleResult:
    """Enumerate every binding of the query variables that satisfies all predicates.

    Backtracks over the predicates in order.  For each predicate it walks the
    edges consistent with the variables bound so far (all edges, the bound
    endpoint's out- or in-edges, or a membership test when both are bound).
    Injective semantics additionally rejects bindings that reuse a vertex.
    """
    edges = list(graph.edges())
    by_src: dict[int, list[tuple[int, int]]] = defaultdict(list)
    by_dst: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for s, l, d in edges:
        by_src[s].append((l, d))
        by_dst[d].append((l, s))
    edge_set = set(edges)
    labels_between: dict[tuple[int, int], set[int]] = defaultdict(set)
    for s, l, d in edges:
        labels_between[(s, d)].add(l)

    preds = []
    for p in cq.predicates:
        if p.label == WILDCARD:
            lab = None
        else:
            lab = graph.label_dict.get(p.label)
            if lab is None:
                return OracleResult(frozenset())
        preds.append((p.src_var, lab, p.dst_var))

    injective = semantics == "injective"
    nvars = len(cq.variables)
    binding: list[int | None] = [None] * nvars
    found: set[tuple[int, ...]] = set()

    def ok_label(l: int, want: int | None) -> bool:
        return want is None or l == want

    def try_bind(var: int, v: int) -> bool:
        cur = binding[var]
        if cur is not None:
            return cur == v
        if injective and v in binding:
            return False
        return True

    def step(i: int) -> None:
        if i == len(preds):
            found.add(tuple(binding))  # type: ignore[arg-type]
            return
        sv, lab, dv = preds[i]
        s, d = binding[sv], binding[dv]
        if s is not None and d is not None:
            if lab is None:
                present = (s, d) in labels_between
            else:
                present = (s, lab, d) in edge_set
            if present:
                step(i + 1)
            return
        if s is not None:
            candidates = [(s, l, x) for l, x in by_src.get(s, ()) if ok_label(l, lab)]
        elif d is not None:
            candidates = [(x, l, d) for l, x in by_dst.get(d, ()) if ok_label(l, lab)]
        else:
            candidates = [e for e in edges if ok_label(e[1], lab)]
        for es, _, ed in candidates:
            if sv == dv and es != ed:
                continue
            new = []
            if not try_bind(sv, es):
                continue
            if binding[sv] is None:
                binding[sv] = es
                new.append(sv)
            if not try_bind(dv, ed):
                for var in new:
                    binding[var] = None
                continue
            if binding[dv] is None:
                binding[dv] = ed
                new.append(dv)
            step(i + 1)
            for var in new:
                binding[var] = None

    step(0)
    return OracleResult(frozenset(found))
