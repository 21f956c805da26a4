"""Vertex -> partition assignments and their quality metrics.

Two strategies: ``hash_assign`` (locality-agnostic, ``v mod P``) and
``kway_assign``, a self-contained multilevel k-way partitioner:

1. coarsen with randomized heavy-edge matching,
2. grow ``P`` regions greedily from spread-out seed vertices on the
   coarsest graph,
3. project back level by level, running boundary Fiduccia-Mattheyses passes
   (best-prefix rollback, balance-respecting moves) at each level.

Edge direction is ignored for partitioning quality.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .graph import Graph

MAX_REFINE_PASSES = 10
INITIAL_TRIALS = 8
# percent of the part-size cap a relaxed FM pass may overfill temporarily
RELAXED_SLACK = 3
DEFAULT_EPSILON = 0.05


@dataclass(frozen=True, eq=False)
class Assignment:
    parts: np.ndarray
    P: int

    def __post_init__(self) -> None:
        parts = np.ascontiguousarray(self.parts, dtype=np.int64)
        if self.P < 1:
            raise ConfigurationError("partition count must be >= 1")
        if len(parts) and (parts.min() < 0 or parts.max() >= self.P):
            raise ConfigurationError("assignment entry outside [0, P)")
        parts.setflags(write=False)
        object.__setattr__(self, "parts", parts)

    def __len__(self) -> int:
        return len(self.parts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Assignment):
            return NotImplemented
        return self.P == other.P and np.array_equal(self.parts, other.parts)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.parts, minlength=self.P)


@dataclass(frozen=True)
class RelabelResult:
    virtual_graph: Graph
    dictionary: np.ndarray
    bounds: np.ndarray
    virt: np.ndarray


def hash_assign(vertex_count: int, P: int) -> Assignment:
    if P < 1:
        raise ConfigurationError("partition count must be >= 1")
    return Assignment(np.arange(vertex_count, dtype=np.int64) % P, P)


def _parts_of(assignment) -> np.ndarray:
    return np.asarray(getattr(assignment, "parts", assignment), dtype=np.int64)


def edge_cut(graph: Graph, assignment) -> int:
    """Number of edges whose endpoints sit in different partitions."""
    parts = _parts_of(assignment)
    if graph.edge_count == 0:
        return 0
    return int(np.count_nonzero(parts[graph.src] != parts[graph.dst]))


def balance(assignment, P: int | None = None) -> float:
    """``max part size * P / |V|``; 1.0 means perfectly even."""
    parts = _parts_of(assignment)
    if P is None:
        P = assignment.P
    if len(parts) == 0:
        return 1.0
    return float(np.bincount(parts, minlength=P).max()) * P / len(parts)


def max_part_size(n: int, P: int, epsilon: float) -> int:
    """Largest part size the k-way partitioner accepts.

    ``floor((1+eps) n / P)`` keeps ``balance <= 1 + eps``; it is raised to
    ``ceil(n / P)`` when the floor would make the problem infeasible.
    """
    return max(math.ceil(n / P), math.floor((1.0 + epsilon) * n / P + 1e-9))


def relabel_virtual(graph: Graph, assignment) -> RelabelResult:
    """Renumber vertices so each partition occupies one dense id range."""
    parts = _parts_of(assignment)
    P = getattr(assignment, "P", int(parts.max()) + 1 if len(parts) else 1)
    n = graph.vertex_count
    dictionary = np.lexsort((np.arange(n), parts)).astype(np.int64)
    virt = np.empty(n, dtype=np.int64)
    virt[dictionary] = np.arange(n, dtype=np.int64)
    bounds = np.cumsum(np.bincount(parts, minlength=P)).astype(np.int64)
    vgraph = Graph(
        tuple(graph.vertex_tokens[i] for i in dictionary.tolist()),
        graph.label_tokens,
        virt[graph.src], graph.label, virt[graph.dst],
    )
    for a in (dictionary, bounds, virt):
        a.setflags(write=False)
    return RelabelResult(vgraph, dictionary, bounds, virt)


# ---------------------------------------------------------------------------
# multilevel k-way


class _Level:
    """Undirected weighted graph in adjacency-list form."""

    __slots__ = ("n", "vw", "adj", "cmap")

    def __init__(self, n: int, vw: list[int], adj: list[list[tuple[int, int]]]):
        self.n = n
        self.vw = vw
        self.adj = adj
        self.cmap: list[int] | None = None  # fine vertex -> vertex of next coarser level

    @classmethod
    def from_pairs(cls, n: int, vw: list[int], u: np.ndarray, v: np.ndarray, w: np.ndarray) -> _Level:
        keep = u != v
        u, v, w = u[keep], v[keep], w[keep]
        a = np.concatenate([u, v])
        b = np.concatenate([v, u])
        ww = np.concatenate([w, w])
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        if len(a):
            codes, inv = np.unique(a * n + b, return_inverse=True)
            wsum = np.bincount(inv.ravel(), weights=ww).astype(np.int64)
            for code, wt in zip(codes.tolist(), wsum.tolist()):
                x, y = divmod(code, n)
                adj[x].append((y, wt))
        return cls(n, vw, adj)

    def cut(self, part: list[int]) -> int:
        return sum(w for x in range(self.n) for y, w in self.adj[x] if part[x] != part[y]) // 2


def _coarsen(level: _Level, rng: np.random.Generator, max_vw: int) -> _Level:
    n, vw, adj = level.n, level.vw, level.adj
    match = [-1] * n
    for v in rng.permutation(n).tolist():
        if match[v] != -1:
            continue
        best, bw = -1, -1
        for u, w in adj[v]:
            if match[u] == -1 and vw[u] + vw[v] <= max_vw and (w > bw or (w == bw and u < best)):
                best, bw = u, w
        if best == -1:
            match[v] = v
        else:
            match[v], match[best] = best, v
    cmap = [-1] * n
    c = 0
    for v in range(n):
        if cmap[v] == -1:
            cmap[v] = cmap[match[v]] = c
            c += 1
    cvw = [0] * c
    for v in range(n):
        cvw[cmap[v]] += vw[v]
    us, vs, ws = [], [], []
    for x in range(n):
        cx = cmap[x]
        for y, w in adj[x]:
            if x < y:
                us.append(cx)
                vs.append(cmap[y])
                ws.append(w)
    level.cmap = cmap
    return _Level.from_pairs(c, cvw, np.array(us, np.int64), np.array(vs, np.int64), np.array(ws, np.int64))


def _pick_seeds(level: _Level, P: int, rng: np.random.Generator) -> list[int]:
    """First seed random, each further seed farthest (BFS hops) from the chosen ones."""
    n = level.n
    seeds = [int(rng.integers(n))]
    dist = [-1] * n
    while len(seeds) < P:
        dist = [-1] * n
        q = deque(seeds)
        for s in seeds:
            dist[s] = 0
        while q:
            x = q.popleft()
            for y, _ in level.adj[x]:
                if dist[y] == -1:
                    dist[y] = dist[x] + 1
                    q.append(y)
        chosen = set(seeds)
        best, bd = -1, -2
        for v in range(n):
            d = math.inf if dist[v] == -1 else dist[v]
            if v not in chosen and d > bd:
                best, bd = v, d
        seeds.append(best)
    return seeds


def _grow(level: _Level, P: int, max_w: int, seeds: list[int]) -> list[int]:
    n, vw, adj = level.n, level.vw, level.adj
    total = sum(vw)
    target = total / P
    part = [-1] * n
    pw = [0] * P
    conn: list[dict[int, int]] = [dict() for _ in range(P)]
    # frontier entries: (-connectivity, discovery order, vertex); discovery
    # order breaks ties so regions expand breadth-first instead of by id
    heaps: list[list[tuple[int, int, int]]] = [[] for _ in range(P)]
    found: list[dict[int, int]] = [dict() for _ in range(P)]
    remaining = n

    def add(v: int, p: int) -> None:
        nonlocal remaining
        part[v] = p
        pw[p] += vw[v]
        remaining -= 1
        for u, w in adj[v]:
            if part[u] == -1:
                c = conn[p].get(u, 0) + w
                conn[p][u] = c
                seq = found[p].setdefault(u, len(found[p]))
                heapq.heappush(heaps[p], (-c, seq, u))

    def pop_best(p: int) -> int:
        h = heaps[p]
        while h:
            negc, _, u = heapq.heappop(h)
            if part[u] == -1 and conn[p].get(u) == -negc:
                return u
        return -1

    for p, s in enumerate(seeds):
        add(s, p)
    unassigned = deque(range(n))
    while remaining:
        order = sorted(range(P), key=lambda p: (pw[p], p))
        # regions below the mean grow first; afterwards any region with room
        # under the cap may absorb adjacent leftovers
        grown = False
        for limit in (target, max_w):
            for p in order:
                if pw[p] >= limit:
                    continue
                u = pop_best(p)
                if u == -1:
                    continue
                if pw[p] + vw[u] > max_w:
                    heapq.heappush(heaps[p], (-conn[p][u], found[p][u], u))
                    continue
                add(u, p)
                grown = True
                break
            if grown:
                break
        if grown:
            continue
        # unreachable leftovers (other components): seed them into the lightest part
        while part[unassigned[0]] != -1:
            unassigned.popleft()
        add(unassigned.popleft(), order[0])
    return part


def _repair_fragments(level: _Level, part: list[int], P: int, max_w: int) -> None:
    """Dissolve every region's non-largest components into adjacent regions."""
    n, vw, adj = level.n, level.vw, level.adj
    comp = [-1] * n
    sizes: list[int] = []
    for v in range(n):
        if comp[v] != -1:
            continue
        c = len(sizes)
        comp[v] = c
        stack, size = [v], 0
        while stack:
            x = stack.pop()
            size += vw[x]
            for y, _ in adj[x]:
                if comp[y] == -1 and part[y] == part[v]:
                    comp[y] = c
                    stack.append(y)
        sizes.append(size)
    keep = {}
    for v in range(n):
        p, c = part[v], comp[v]
        if p not in keep or sizes[c] > sizes[keep[p]]:
            keep[p] = c
    pw = [0] * P
    orphans = deque()
    for v in range(n):
        if comp[v] == keep[part[v]]:
            pw[part[v]] += vw[v]
        else:
            part[v] = -1
            orphans.append(v)
    stalled = 0
    while orphans:
        v = orphans.popleft()
        conn: dict[int, int] = {}
        for u, w in adj[v]:
            if part[u] != -1:
                conn[part[u]] = conn.get(part[u], 0) + w
        if not conn and stalled <= len(orphans):
            orphans.append(v)
            stalled += 1
            continue
        stalled = 0
        if conn:
            fits = [q for q in conn if pw[q] + vw[v] <= max_w]
            q = max(fits, key=lambda q: (conn[q], -q)) if fits else min(conn, key=lambda q: (pw[q], q))
        else:
            q = min(range(P), key=lambda q: (pw[q], q))
        part[v] = q
        pw[q] += vw[v]


def _connectivity(level: _Level, part: list[int]) -> list[dict[int, int]]:
    """Per vertex: part -> total edge weight from the vertex into that part."""
    out = []
    for v in range(level.n):
        c: dict[int, int] = {}
        for u, w in level.adj[v]:
            c[part[u]] = c.get(part[u], 0) + w
        out.append(c)
    return out


def _move(level: _Level, conn: list[dict[int, int]], part: list[int], pw: list[int],
          v: int, q: int) -> None:
    src = part[v]
    part[v] = q
    pw[src] -= level.vw[v]
    pw[q] += level.vw[v]
    for u, w in level.adj[v]:
        cu = conn[u]
        left = cu[src] - w
        if left:
            cu[src] = left
        else:
            del cu[src]
        cu[q] = cu.get(q, 0) + w


def _best_move(v: int, own: int, conn_v: dict[int, int], pw: list[int], wv: int,
               cap: int) -> tuple[int, int]:
    """Best (gain, target part) for moving ``v``; target -1 if no part fits."""
    internal = conn_v.get(own, 0)
    best_gain, best_q = 0, -1
    for q, c in conn_v.items():
        if q == own or pw[q] + wv > cap:
            continue
        g = c - internal
        if best_q == -1 or g > best_gain or (g == best_gain and q < best_q):
            best_gain, best_q = g, q
    return best_gain, best_q


def _excess(pw: list[int], max_w: int) -> int:
    return sum(w - max_w for w in pw if w > max_w)


def _fm_pass(level: _Level, part: list[int], pw: list[int], max_w: int, slack: int) -> bool:
    """One boundary FM pass with best-prefix rollback.

    Moves may overfill a part by up to ``slack`` while the pass explores, but
    the kept prefix minimizes ``(overweight, cut)``, so a balanced start stays
    balanced.  Returns whether the pass improved anything.
    """
    n, vw, adj = level.n, level.vw, level.adj
    cap = max_w + slack
    conn = _connectivity(level, part)
    heap: list[tuple[int, int, int]] = []
    for v in range(n):
        g, q = _best_move(v, part[v], conn[v], pw, vw[v], cap)
        if q >= 0:
            heap.append((-g, v, q))
    heapq.heapify(heap)
    locked = [False] * n
    moves: list[tuple[int, int]] = []
    delta = 0
    best_key = (_excess(pw, max_w), 0)
    best_len = 0
    stall_limit = max(50, n // 20)
    while heap:
        negg, v, q = heapq.heappop(heap)
        if locked[v]:
            continue
        g, q2 = _best_move(v, part[v], conn[v], pw, vw[v], cap)
        if q2 < 0:
            continue
        if (g, q2) != (-negg, q):
            heapq.heappush(heap, (-g, v, q2))
            continue
        moves.append((v, part[v]))
        _move(level, conn, part, pw, v, q)
        locked[v] = True
        delta -= g
        key = (_excess(pw, max_w), delta)
        if key < best_key:
            best_key, best_len = key, len(moves)
        elif len(moves) - best_len > stall_limit:
            break
        for u, _ in adj[v]:
            if not locked[u]:
                gu, qu = _best_move(u, part[u], conn[u], pw, vw[u], cap)
                if qu >= 0:
                    heapq.heappush(heap, (-gu, u, qu))
    for v, src in reversed(moves[best_len:]):
        _move(level, conn, part, pw, v, src)
    return best_len > 0


def _rebalance(level: _Level, part: list[int], pw: list[int], max_w: int, P: int) -> None:
    """Move vertices out of overweight parts, cheapest cut increase first."""
    n, vw, adj = level.n, level.vw, level.adj
    while True:
        over = [p for p in range(P) if pw[p] > max_w]
        if not over:
            return
        p = over[0]
        best = None
        for v in range(n):
            if part[v] != p:
                continue
            conn: dict[int, int] = {}
            for u, w in adj[v]:
                conn[part[u]] = conn.get(part[u], 0) + w
            internal = conn.get(p, 0)
            for q in range(P):
                if q == p or pw[q] + vw[v] > max_w:
                    continue
                cand = (conn.get(q, 0) - internal, -vw[v], -v, -q)
                if best is None or cand > best:
                    best = cand
        if best is None:
            return  # coarse vertices too heavy to fit anywhere; finer levels fix it
        v, q = -best[2], -best[3]
        part[v] = q
        pw[p] -= vw[v]
        pw[q] += vw[v]


def _overweight(level: _Level, part: list[int], max_w: int, P: int) -> int:
    pw = [0] * P
    for v in range(level.n):
        pw[part[v]] += level.vw[v]
    return sum(max(0, w - max_w) for w in pw)


def _refine(level: _Level, part: list[int], max_w: int, P: int) -> None:
    """Relaxed FM passes, then strict ones, at most ``MAX_REFINE_PASSES`` in all."""
    pw = [0] * P
    for v in range(level.n):
        pw[part[v]] += level.vw[v]
    _rebalance(level, part, pw, max_w, P)
    slack = max(max(level.vw, default=1), (max_w * RELAXED_SLACK) // 100)
    for _ in range(MAX_REFINE_PASSES):
        if not _fm_pass(level, part, pw, max_w, slack):
            if slack == 0:
                break
            slack = 0


def kway_assign(graph: Graph, P: int, epsilon: float = DEFAULT_EPSILON, seed: int = 0) -> Assignment:
    """Balanced, cut-minimizing assignment of vertices to ``P`` partitions.

    Every part holds at most :func:`max_part_size` vertices.  Deterministic
    for a given ``(graph, P, epsilon, seed)``.
    """
    n = graph.vertex_count
    if P < 1:
        raise ConfigurationError("partition count must be >= 1")
    if not (0.0 <= epsilon < 1.0):
        raise ConfigurationError("epsilon must lie in [0, 1)")
    if P > n:
        raise ConfigurationError(f"cannot split {n} vertices into {P} non-empty partitions")
    if P == 1:
        return Assignment(np.zeros(n, dtype=np.int64), 1)
    rng = np.random.default_rng(seed)
    max_w = max_part_size(n, P, epsilon)
    ones = np.ones(graph.edge_count, dtype=np.int64)
    levels = [_Level.from_pairs(n, [1] * n, graph.src, graph.dst, ones)]
    threshold = max(20 * P, 200)
    max_vw = max(1, int(1.5 * n / threshold))
    while levels[-1].n > threshold:
        coarse = _coarsen(levels[-1], rng, max_vw)
        if coarse.n > 0.95 * levels[-1].n:
            levels[-1].cmap = None
            break
        levels.append(coarse)

    coarsest = levels[-1]
    best = None
    for _ in range(INITIAL_TRIALS):
        trial = _grow(coarsest, P, max_w, _pick_seeds(coarsest, P, rng))
        _repair_fragments(coarsest, trial, P, max_w)
        _refine(coarsest, trial, max_w, P)
        key = (_overweight(coarsest, trial, max_w, P), coarsest.cut(trial))
        if best is None or key < best[0]:
            best = (key, trial)
    part = best[1]
    for fine in reversed(levels[:-1]):
        part = [part[c] for c in fine.cmap]
        _refine(fine, part, max_w, P)
    return Assignment(np.array(part, dtype=np.int64), P)
