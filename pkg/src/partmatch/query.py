"""Conjunctive queries and their compilation into operator plans.

A query file lists one edge predicate per line, ``src_var label dst_var``,
with ``*`` as the wildcard label.  Predicates are evaluated in file order;
each compiles to one operator whose kind depends on which of its variables
earlier predicates already bound.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, TextIO

from .errors import ConfigurationError, EmptyQueryError, UnsupportedQueryError
from .graph import WILDCARD, _triples

SEMANTICS = ("homomorphism", "injective")


class OpKind(enum.Enum):
    UNBOUND = "unbound"
    VERTEX_BOUND_SRC = "vertex-bound-src"
    VERTEX_BOUND_DST = "vertex-bound-dst"
    EDGE_BOUND = "edge-bound"


class Addressing(enum.Enum):
    BROADCAST = "broadcast"
    UNICAST_FORWARD = "unicast-forward"
    UNICAST_REVERSE = "unicast-reverse"


@dataclass(frozen=True)
class Predicate:
    src_var: int
    label: str  # token, or WILDCARD
    dst_var: int


@dataclass(frozen=True)
class ConjunctiveQuery:
    variables: tuple[str, ...]
    predicates: tuple[Predicate, ...]

    def __post_init__(self) -> None:
        if not self.predicates:
            raise EmptyQueryError("query has no edge predicates")

    @property
    def variable_dict(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.variables)}

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]]) -> ConjunctiveQuery:
        names: dict[str, int] = {}
        preds = []
        for s, l, d in triples:
            si = names.setdefault(s, len(names))
            di = names.setdefault(d, len(names))
            preds.append(Predicate(si, l, di))
        return cls(tuple(names), tuple(preds))


@dataclass(frozen=True)
class PlanOp:
    kind: OpKind
    predicate_index: int
    addressing: Addressing
    src_var: int
    dst_var: int
    label: str

    @property
    def binds(self) -> tuple[int, ...]:
        """Variables this operator binds."""
        if self.kind is OpKind.UNBOUND:
            return (self.src_var,) if self.src_var == self.dst_var else (self.src_var, self.dst_var)
        if self.kind is OpKind.VERTEX_BOUND_SRC:
            return (self.dst_var,)
        if self.kind is OpKind.VERTEX_BOUND_DST:
            return (self.src_var,)
        return ()

    @property
    def routing_var(self) -> int | None:
        """Bound variable whose owner receives the message (unicast only)."""
        if self.addressing is Addressing.UNICAST_FORWARD:
            return self.src_var
        if self.addressing is Addressing.UNICAST_REVERSE:
            return self.dst_var
        return None


@dataclass(frozen=True)
class QEP:
    query: ConjunctiveQuery
    ops: tuple[PlanOp, ...]
    semantics: str = "homomorphism"
    redundancy: bool = False

    def __len__(self) -> int:
        return len(self.ops)

    @property
    def needs_reverse(self) -> bool:
        return any(op.addressing is Addressing.UNICAST_REVERSE for op in self.ops)


def parse_query(text_stream: TextIO | str | Iterable[str]) -> ConjunctiveQuery:
    """Parse a query file; variables are numbered by first appearance."""
    return ConjunctiveQuery.from_triples((s, l, d) for _, s, l, d in _triples(text_stream, "query"))


def bundled_query(name: str) -> ConjunctiveQuery:
    """Load one of the shipped query files (``quad``, ``v``, ``triangle``, ``edge``)."""
    fname = name if name.endswith(".cq") else f"{name}.cq"
    try:
        text = resources.files("partmatch.queries").joinpath(fname).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"no bundled query named {name!r}") from None
    return parse_query(text)


def compile(cq: ConjunctiveQuery, redundancy: bool = False, semantics: str = "homomorphism") -> QEP:
    """Assign each predicate an operator kind and addressing mode, in order."""
    if semantics not in SEMANTICS:
        raise ConfigurationError(f"unknown semantics {semantics!r}")
    bound: set[int] = set()
    ops = []
    for i, pred in enumerate(cq.predicates):
        s_b, d_b = pred.src_var in bound, pred.dst_var in bound
        if not s_b and not d_b:
            if i > 0:
                raise UnsupportedQueryError(
                    f"predicate {i} shares no variable with earlier predicates; "
                    "disconnected patterns are not supported")
            kind, addr = OpKind.UNBOUND, Addressing.BROADCAST
        elif s_b and d_b:
            kind, addr = OpKind.EDGE_BOUND, Addressing.UNICAST_FORWARD
        elif s_b:
            kind, addr = OpKind.VERTEX_BOUND_SRC, Addressing.UNICAST_FORWARD
        else:
            kind = OpKind.VERTEX_BOUND_DST
            addr = Addressing.UNICAST_REVERSE if redundancy else Addressing.BROADCAST
        ops.append(PlanOp(kind, i, addr, pred.src_var, pred.dst_var, pred.label))
        bound.update((pred.src_var, pred.dst_var))
    return QEP(cq, tuple(ops), semantics, redundancy)


__all__ = [
    "Addressing", "ConjunctiveQuery", "OpKind", "PlanOp", "Predicate", "QEP", "SEMANTICS",
    "WILDCARD", "bundled_query", "compile", "parse_query",
]
