"""Routing tables: vertex -> owning partition.

Three designs:

* :class:`ComputeTable` hashes on the fly (``v mod P``), no stored entries.
* :class:`LookupTable` keeps one entry per vertex.
* :class:`RangeTable` keeps ``P`` exclusive upper bounds over relabeled
  (virtual) ids; used by the hybrid design together with a dictionary that
  maps virtual ids back to original ones.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, RedundancyRequiredError, RoutingError
from .graph import Graph
from .partition import hash_assign, kway_assign, relabel_virtual, DEFAULT_EPSILON
from .store import PartitionSet, build_partitions, round_robin_placement

DESIGNS = ("compute", "lookup-hash", "lookup-kway", "hybrid")

Clock = Callable[[], int]


class ComputeTable:
    __slots__ = ("P",)

    def __init__(self, P: int):
        if P < 1:
            raise ConfigurationError("partition count must be >= 1")
        self.P = P

    def route(self, v: int) -> int:
        return v % self.P

    def route_many(self, vs: np.ndarray) -> np.ndarray:
        return vs % self.P

    @property
    def entry_count(self) -> int:
        return 0

    def __repr__(self) -> str:
        return f"ComputeTable(P={self.P})"


class LookupTable:
    __slots__ = ("parts", "P")

    def __init__(self, parts, P: int | None = None):
        self.parts = np.ascontiguousarray(getattr(parts, "parts", parts), dtype=np.int64)
        self.P = P if P is not None else getattr(parts, "P", int(self.parts.max(initial=0)) + 1)

    def route(self, v: int) -> int:
        if not 0 <= v < len(self.parts):
            raise RoutingError(f"vertex {v} outside lookup table of {len(self.parts)} entries")
        return int(self.parts[v])

    def route_many(self, vs: np.ndarray) -> np.ndarray:
        return self.parts[vs]

    @property
    def entry_count(self) -> int:
        return len(self.parts)

    def __repr__(self) -> str:
        return f"LookupTable(entries={len(self.parts)}, P={self.P})"


class RangeTable:
    __slots__ = ("bounds", "P")

    def __init__(self, bounds):
        b = np.ascontiguousarray(bounds, dtype=np.int64)
        if len(b) == 0 or np.any(np.diff(b) < 0) or b[0] < 0:
            raise ConfigurationError("range bounds must be non-empty and non-decreasing")
        self.bounds = b
        self.P = len(b)

    def route(self, v: int) -> int:
        if not 0 <= v < self.bounds[-1]:
            raise RoutingError(f"vertex {v} outside range table [0, {int(self.bounds[-1])})")
        return int(np.searchsorted(self.bounds, v, side="right"))

    def route_many(self, vs: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.bounds, vs, side="right")

    @property
    def entry_count(self) -> int:
        return len(self.bounds)

    def __repr__(self) -> str:
        return f"RangeTable(bounds={self.bounds.tolist()})"


RoutingTable = ComputeTable | LookupTable | RangeTable


@dataclass(frozen=True)
class RoutingPair:
    forward: RoutingTable
    reverse: RoutingTable | None = None
    dictionary: np.ndarray | None = None
    design: str = "compute"

    @property
    def P(self) -> int:
        return self.forward.P

    def table(self, direction: str) -> RoutingTable:
        if direction == "forward":
            return self.forward
        if direction == "reverse":
            if self.reverse is None:
                raise RedundancyRequiredError("reverse routing needs redundancy mode")
            return self.reverse
        raise ValueError(f"unknown direction {direction!r}")


class RoutingTimer:
    """Accumulates time spent inside routing-table accesses for one worker."""

    __slots__ = ("elapsed_ns", "calls")

    def __init__(self) -> None:
        self.elapsed_ns = 0
        self.calls = 0

    def add(self, ns: int, calls: int = 1) -> None:
        self.elapsed_ns += ns
        self.calls += calls


def timed_route(pair: RoutingPair, v: int, direction: str = "forward",
                clock: Clock = time.perf_counter_ns, timer: RoutingTimer | None = None) -> tuple[int, int]:
    """Route ``v`` and return ``(partition, elapsed_ns)``.

    The clock is sampled around the table access only.
    """
    table = pair.table(direction)
    t0 = clock()
    p = table.route(v)
    elapsed = clock() - t0
    if timer is not None:
        timer.add(elapsed)
    return p, elapsed


def build_pair(design: str, graph: Graph, P: int, epsilon: float = DEFAULT_EPSILON, seed: int = 0,
               redundancy: bool = False, nodes: int = 1) -> tuple[RoutingPair, PartitionSet, Graph]:
    """Build routing tables, partition stores and the graph the engine runs on.

    For ``hybrid`` the returned graph is the relabeled (virtual-id) graph and
    the pair carries the virtual->original dictionary.  With redundancy the
    reverse tables reuse the forward vertex->partition mapping, so target-keyed
    stores are owned by the same partition as source-keyed ones.
    """
    if design not in DESIGNS:
        raise ConfigurationError(f"unknown design {design!r}; expected one of {', '.join(DESIGNS)}")
    if nodes < 1:
        raise ConfigurationError("node count must be >= 1")
    placement = round_robin_placement(P, nodes)
    dictionary = None
    effective = graph
    table: RoutingTable
    if design in ("compute", "lookup-hash"):
        parts = hash_assign(graph.vertex_count, P).parts
        table = ComputeTable(P) if design == "compute" else LookupTable(parts, P)
    else:
        assign = kway_assign(graph, P, epsilon, seed)
        parts = assign.parts
        table = LookupTable(parts, P)
        if design == "hybrid":
            rel = relabel_virtual(graph, assign)
            effective, dictionary = rel.virtual_graph, rel.dictionary
            table = RangeTable(rel.bounds)
            parts = parts[rel.dictionary]  # partition of each virtual id
    pset = build_partitions(effective, parts, parts if redundancy else None, placement, P=P)
    pair = RoutingPair(table, table if redundancy else None, dictionary, design)
    return pair, pset, effective
