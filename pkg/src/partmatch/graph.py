"""Edge-labeled multigraph model, text I/O and a synthetic generator.

Vertices and labels are interned to dense integer ids in order of first
appearance.  Edges are stored as three parallel int64 arrays; exact
duplicate triples are collapsed on construction.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, TextIO

import numpy as np

from .errors import ConfigurationError, ParseError, ReservedTokenError

WILDCARD = "*"
# label ids used by stores and kernels; real labels are >= 0
ANY_LABEL = -1
NO_LABEL = -2


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable interned edge-labeled multigraph.

    ``src``, ``label`` and ``dst`` are parallel arrays, one entry per edge,
    in edge-id order.  ``vertex_tokens[i]`` is the original token of vertex
    ``i``; ``label_tokens`` likewise for labels.
    """

    vertex_tokens: tuple[str, ...]
    label_tokens: tuple[str, ...]
    src: np.ndarray = field(repr=False)
    label: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("src", "label", "dst"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.src) == len(self.label) == len(self.dst)):
            raise ValueError("edge arrays differ in length")
        n = len(self.vertex_tokens)
        if len(self.src) and (
            self.src.min() < 0 or self.dst.min() < 0
            or self.src.max() >= n or self.dst.max() >= n
        ):
            raise ValueError("edge endpoint outside vertex range")
        if len(self.label) and (self.label.min() < 0 or self.label.max() >= len(self.label_tokens)):
            raise ValueError("edge label outside label dictionary")

    @property
    def vertex_count(self) -> int:
        return len(self.vertex_tokens)

    @property
    def edge_count(self) -> int:
        return len(self.src)

    @cached_property
    def vertex_dict(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.vertex_tokens)}

    @cached_property
    def label_dict(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.label_tokens)}

    def edges(self) -> Iterator[tuple[int, int, int]]:
        """Yield ``(src, label, dst)`` id triples in edge-id order."""
        return zip(self.src.tolist(), self.label.tolist(), self.dst.tolist())

    def label_id(self, token: str) -> int:
        """Resolve a query label token; unknown tokens map to ``NO_LABEL``."""
        if token == WILDCARD:
            return ANY_LABEL
        return self.label_dict.get(token, NO_LABEL)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.vertex_tokens == other.vertex_tokens
            and self.label_tokens == other.label_tokens
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.label, other.label)
            and np.array_equal(self.dst, other.dst)
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]]) -> Graph:
        """Intern token triples in first-appearance order, dropping duplicates."""
        vdict: dict[str, int] = {}
        ldict: dict[str, int] = {}
        seen: set[tuple[int, int, int]] = set()
        edges: list[tuple[int, int, int]] = []
        for s, l, d in triples:
            if l == WILDCARD:
                raise ReservedTokenError(f"{WILDCARD!r} is reserved and cannot be an edge label")
            si = vdict.setdefault(s, len(vdict))
            li = ldict.setdefault(l, len(ldict))
            di = vdict.setdefault(d, len(vdict))
            key = (si, li, di)
            if key not in seen:
                seen.add(key)
                edges.append(key)
        arr = np.array(edges, dtype=np.int64).reshape(-1, 3)
        return cls(tuple(vdict), tuple(ldict), arr[:, 0], arr[:, 1], arr[:, 2])

    @classmethod
    def from_arrays(cls, n: int, src, label, dst, *, labels: int | None = None,
                    vertex_prefix: str = "v", label_prefix: str = "l") -> Graph:
        """Build a graph directly from id arrays (duplicates removed, order kept)."""
        trip = np.stack([np.asarray(src, np.int64), np.asarray(label, np.int64),
                         np.asarray(dst, np.int64)], axis=1).reshape(-1, 3)
        if len(trip):
            _, first = np.unique(trip, axis=0, return_index=True)
            trip = trip[np.sort(first)]
        if labels is None:
            labels = int(trip[:, 1].max()) + 1 if len(trip) else 0
        return cls(
            tuple(f"{vertex_prefix}{i}" for i in range(n)),
            tuple(f"{label_prefix}{i}" for i in range(labels)),
            trip[:, 0], trip[:, 1], trip[:, 2],
        )


def _lines(text_stream: TextIO | str | Iterable[str]) -> Iterable[str]:
    if isinstance(text_stream, str):
        return io.StringIO(text_stream)
    return text_stream


def _triples(text_stream, what: str) -> Iterator[tuple[int, str, str, str]]:
    for line_no, raw in enumerate(_lines(text_stream), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 3 tokens in {what} line, got {len(parts)}", line_no)
        yield line_no, parts[0], parts[1], parts[2]


def parse_graph(text_stream: TextIO | str | Iterable[str]) -> Graph:
    """Parse ``src label dst`` lines into a :class:`Graph`.

    Blank lines and ``#`` comments are skipped.  A line with a token count
    other than three raises :class:`ParseError` carrying its line number;
    ``*`` as a label raises :class:`ReservedTokenError`.
    """
    def checked():
        for line_no, s, l, d in _triples(text_stream, "graph"):
            if l == WILDCARD:
                raise ReservedTokenError(
                    f"{WILDCARD!r} is reserved and cannot be an edge label", line_no)
            yield s, l, d

    return Graph.from_triples(checked())


def load_graph(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh)


def write_graph(graph: Graph, stream: TextIO) -> None:
    """Canonical serialization: one line per edge, in edge-id order."""
    vt, lt = graph.vertex_tokens, graph.label_tokens
    for s, l, d in graph.edges():
        stream.write(f"{vt[s]} {lt[l]} {vt[d]}\n")


def graph_to_text(graph: Graph) -> str:
    buf = io.StringIO()
    write_graph(graph, buf)
    return buf.getvalue()


def cluster_size(n: int) -> int:
    """Group size used by the clustered generator."""
    return max(1, math.isqrt(n))


def synth_graph(n: int, m: int, labels: int = 1, model: str = "uniform", seed: int = 0) -> Graph:
    """Generate a deterministic random multigraph with exactly ``m`` edges.

    ``uniform`` draws endpoints uniformly.  ``clustered`` splits vertices into
    consecutive groups of ``isqrt(n)`` and sends 80% of edges inside the
    source's group.  When ``m >= n`` every vertex gets at least one outgoing
    edge, so the text form round-trips to the same vertex count.
    Vertex ``i`` is named ``v<i>``; label ``j`` is ``l<j>``.
    """
    if n < 0 or m < 0 or labels < 0:
        raise ConfigurationError("synth parameters must be non-negative")
    if model not in ("uniform", "clustered"):
        raise ConfigurationError(f"unknown synth model {model!r}")
    if m > n * n * labels:
        raise ConfigurationError(f"cannot place {m} distinct edges on n={n}, labels={labels}")
    rng = np.random.default_rng(seed)
    if m == 0:
        return Graph.from_arrays(n, [], [], [], labels=labels)

    group = cluster_size(n)

    def draw(count: int, covering: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if covering:
            src = rng.permutation(n)[:count]
        else:
            src = rng.integers(0, n, size=count)
        if model == "uniform":
            dst = rng.integers(0, n, size=count)
        else:
            lo = (src // group) * group
            size = np.minimum(lo + group, n) - lo
            inside = rng.random(count) < 0.8
            if n > group:
                # outside draws skip over the source's own group
                outside = rng.integers(0, n - size)
                outside = np.where(outside >= lo, outside + size, outside)
            else:
                inside[:] = True
                outside = lo
            dst = np.where(inside, lo + (rng.random(count) * size).astype(np.int64), outside)
        lab = rng.integers(0, labels, size=count)
        return src.astype(np.int64), lab.astype(np.int64), dst.astype(np.int64)

    if m > (n * n * labels) // 2:
        # dense request: sample distinct triple codes without replacement
        codes = np.sort(rng.choice(n * n * labels, size=m, replace=False))
        rng.shuffle(codes)
        src, rest = np.divmod(codes, n * labels)
        lab, dst = np.divmod(rest, n)
        return Graph.from_arrays(n, src, lab, dst, labels=labels)

    seen: set[tuple[int, int, int]] = set()
    out: list[tuple[int, int, int]] = []
    covering = m >= n
    while len(out) < m:
        need = m - len(out)
        src, lab, dst = draw(min(need, n) if covering else need, covering)
        covering = False
        for e in zip(src.tolist(), lab.tolist(), dst.tolist()):
            if e not in seen:
                seen.add(e)
                out.append(e)
                if len(out) == m:
                    break
    arr = np.array(out, dtype=np.int64)
    return Graph.from_arrays(n, arr[:, 0], arr[:, 1], arr[:, 2], labels=labels)
