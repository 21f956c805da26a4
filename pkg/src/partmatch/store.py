"""Per-partition adjacency stores.

Each :class:`PartitionStore` holds the edges whose source vertex it owns,
grouped by source and sorted by ``(label, dst)``.  A local target index over
those same edges serves the broadcast fragment of target-bound matching.
With redundancy, a second (reverse) adjacency holds the edges whose target
the partition owns under the reverse assignment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, OwnershipError, RedundancyRequiredError
from .graph import ANY_LABEL, NO_LABEL, WILDCARD, Graph


@dataclass(frozen=True)
class Adjacency:
    keys: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray
    nbrs: np.ndarray

    @classmethod
    def build(cls, key: np.ndarray, label: np.ndarray, other: np.ndarray) -> Adjacency:
        order = np.lexsort((other, label, key))
        key, label, other = key[order], label[order], other[order]
        keys, counts = np.unique(key, return_counts=True)
        offsets = np.zeros(len(keys) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        arrs = [np.ascontiguousarray(a, dtype=np.int64) for a in (keys, offsets, label, other)]
        for a in arrs:
            a.setflags(write=False)
        return cls(*arrs)

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.keys, self.offsets, self.labels, self.nbrs

    def __len__(self) -> int:
        return len(self.nbrs)

    def lookup(self, v: int, label: int) -> list[tuple[int, int]]:
        lo, hi = K.segment(self.keys, self.offsets, v)
        lo, hi = K.label_range(self.labels, lo, hi, label)
        return list(zip(self.labels[lo:hi].tolist(), self.nbrs[lo:hi].tolist()))


@dataclass(frozen=True)
class PartitionStore:
    partition_id: int
    forward: Adjacency
    by_target: Adjacency
    reverse: Adjacency | None
    forward_owner: np.ndarray
    reverse_owner: np.ndarray | None
    label_tokens: tuple[str, ...] = ()

    def label_id(self, token: str) -> int:
        """Resolve a query label token against the stored graph's labels."""
        if token == WILDCARD:
            return ANY_LABEL
        try:
            return self.label_tokens.index(token)
        except ValueError:
            return NO_LABEL

    @property
    def local_edge_count(self) -> int:
        return len(self.forward)

    def _check_forward(self, src: int) -> None:
        if not (0 <= src < len(self.forward_owner)) or self.forward_owner[src] != self.partition_id:
            raise OwnershipError(f"vertex {src} is not owned by partition {self.partition_id}")


@dataclass(frozen=True)
class PartitionSet:
    partitions: tuple[PartitionStore, ...]
    forward_assignment: np.ndarray
    reverse_assignment: np.ndarray | None
    placement: tuple[int, ...]
    label_tokens: tuple[str, ...] = ()

    @property
    def P(self) -> int:
        return len(self.partitions)

    @property
    def redundant(self) -> bool:
        return self.reverse_assignment is not None

    @property
    def vertex_count(self) -> int:
        return len(self.forward_assignment)

    def __getitem__(self, p: int) -> PartitionStore:
        return self.partitions[p]

    def label_id(self, token: str) -> int:
        """Resolve a query label token against the stored graph's labels."""
        if token == WILDCARD:
            return ANY_LABEL
        try:
            return self.label_tokens.index(token)
        except ValueError:
            return NO_LABEL


def round_robin_placement(P: int, nodes: int) -> tuple[int, ...]:
    return tuple(p % nodes for p in range(P))


def _as_assignment(a, n: int, P: int, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(getattr(a, "parts", a), dtype=np.int64)
    if arr.shape != (n,):
        raise ConfigurationError(f"{what} assignment has {arr.shape[0]} entries for {n} vertices")
    if n and (arr.min() < 0 or arr.max() >= P):
        raise ConfigurationError(f"{what} assignment references a partition outside [0, {P})")
    arr.setflags(write=False)
    return arr


def build_partitions(graph: Graph, fwd, rev=None, placement=None, *, P: int | None = None) -> PartitionSet:
    """Split ``graph`` into per-partition stores.

    ``fwd``/``rev`` are vertex->partition arrays (or objects with ``.parts``).
    ``P`` defaults to ``fwd.P`` when available, else ``len(placement)``, else
    ``max(fwd) + 1``.
    """
    if P is None:
        P = getattr(fwd, "P", None) or (len(placement) if placement is not None else None)
    if P is None:
        P = int(np.max(fwd)) + 1 if len(fwd) else 1
    if P < 1:
        raise ConfigurationError("partition count must be >= 1")
    n = graph.vertex_count
    fa = _as_assignment(fwd, n, P, "forward")
    ra = _as_assignment(rev, n, P, "reverse") if rev is not None else None
    if placement is None:
        placement = round_robin_placement(P, 1)
    placement = tuple(int(x) for x in placement)
    if len(placement) != P:
        raise ConfigurationError(f"placement lists {len(placement)} partitions, expected {P}")

    src, lab, dst = graph.src, graph.label, graph.dst
    fpart = fa[src] if len(src) else np.zeros(0, np.int64)
    rpart = ra[dst] if ra is not None and len(dst) else np.zeros(0, np.int64)
    stores = []
    for p in range(P):
        m = fpart == p
        fwd_adj = Adjacency.build(src[m], lab[m], dst[m])
        tgt_adj = Adjacency.build(dst[m], lab[m], src[m])
        rev_adj = None
        if ra is not None:
            rm = rpart == p
            rev_adj = Adjacency.build(dst[rm], lab[rm], src[rm])
        stores.append(PartitionStore(p, fwd_adj, tgt_adj, rev_adj, fa, ra, graph.label_tokens))
    return PartitionSet(tuple(stores), fa, ra, placement, graph.label_tokens)


def out_edges(store: PartitionStore, src: int, label: int = ANY_LABEL) -> list[tuple[int, int]]:
    """Local edges leaving ``src`` as ``(label, dst)`` pairs, sorted."""
    store._check_forward(src)
    return store.forward.lookup(src, label)


def in_edges(store: PartitionStore, dst: int, label: int = ANY_LABEL) -> list[tuple[int, int]]:
    """Edges entering ``dst`` from the reverse store, as sorted ``(label, src)``."""
    if store.reverse is None:
        raise RedundancyRequiredError("in_edges needs the reverse store (redundancy mode)")
    if not (0 <= dst < len(store.reverse_owner)) or store.reverse_owner[dst] != store.partition_id:
        raise OwnershipError(f"vertex {dst} is not reverse-owned by partition {store.partition_id}")
    return store.reverse.lookup(dst, label)


def scan_by_target(store: PartitionStore, dst: int, label: int = ANY_LABEL) -> list[tuple[int, int]]:
    """Local forward edges whose target is ``dst``; valid on any partition."""
    return store.by_target.lookup(dst, label)


def has_edge(store: PartitionStore, src: int, label: int, dst: int) -> bool:
    store._check_forward(src)
    return bool(K.contains(*store.forward.arrays, src, label, dst))
