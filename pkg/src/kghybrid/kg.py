"""Knowledge-graph values and the slot abstraction used by the rule miner.

A state is a set of ``(head, relation, tail)`` triples over plain string
tokens. Abstract edges and match patterns reuse the same three-position shape
but positions may be tagged strings:

* ``"$OBJ"``  a slot reference, filled from action bindings,
* ``"?1"``    an existential wildcard, index-consistent within one pattern,
* anything else is a literal token.
"""
from __future__ import annotations

import json
from enum import Enum
from typing import Iterable, Iterator, Mapping, NamedTuple

SLOT_PREFIX = "$"
WILDCARD_PREFIX = "?"


class Triple(NamedTuple):
    head: str
    relation: str
    tail: str

    def to_json(self) -> list[str]:
        return [self.head, self.relation, self.tail]


class AbstractEdge(NamedTuple):
    """An edge whose positions may be slot references or wildcards."""

    head: str
    relation: str
    tail: str

    def to_json(self) -> list[str]:
        return [self.head, self.relation, self.tail]


class MatchPattern(NamedTuple):
    """An instantiated edge: literals plus existential wildcards only."""

    head: str
    relation: str
    tail: str

    @property
    def is_concrete(self) -> bool:
        return not any(is_wildcard(p) for p in self)

    def to_json(self) -> list[str]:
        return [self.head, self.relation, self.tail]


def is_slot(position: str) -> bool:
    return position.startswith(SLOT_PREFIX)


def is_wildcard(position: str) -> bool:
    return position.startswith(WILDCARD_PREFIX)


def slot(name: str) -> str:
    return SLOT_PREFIX + name


def wildcard(index: int) -> str:
    return f"{WILDCARD_PREFIX}{index}"


def validate_token(token: object) -> str:
    if not isinstance(token, str) or not token:
        raise ValueError(f"token must be a non-empty string, got {token!r}")
    if token[0] in (SLOT_PREFIX, WILDCARD_PREFIX):
        raise ValueError(f"literal token may not start with '$' or '?': {token!r}")
    return token


class KnowledgeGraph:
    """Immutable, duplicate-free set of triples.

    Iteration and serialization are lexicographic so that dumps of equal
    graphs are byte-identical.
    """

    __slots__ = ("_edges", "_sorted", "_by_relation")

    def __init__(self, edges: Iterable[Iterable[str]] = ()):
        self._edges = frozenset(e if type(e) is Triple else Triple(*e) for e in edges)
        self._sorted: tuple[Triple, ...] | None = None
        self._by_relation: dict[str, tuple[Triple, ...]] | None = None

    @classmethod
    def _wrap(cls, edges: frozenset) -> "KnowledgeGraph":
        g = cls.__new__(cls)
        g._edges = edges
        g._sorted = None
        g._by_relation = None
        return g

    @property
    def edges(self) -> frozenset:
        return self._edges

    @property
    def nodes(self) -> frozenset:
        return frozenset(t for e in self._edges for t in (e.head, e.tail))

    @property
    def relations(self) -> frozenset:
        return frozenset(e.relation for e in self._edges)

    def sorted_edges(self) -> tuple[Triple, ...]:
        if self._sorted is None:
            self._sorted = tuple(sorted(self._edges))
        return self._sorted

    def by_relation(self, relation: str) -> tuple[Triple, ...]:
        if self._by_relation is None:
            index: dict[str, list[Triple]] = {}
            for e in self.sorted_edges():
                index.setdefault(e.relation, []).append(e)
            self._by_relation = {r: tuple(v) for r, v in index.items()}
        return self._by_relation.get(relation, ())

    def with_edges(self, add: Iterable = (), remove: Iterable = ()) -> "KnowledgeGraph":
        edges = set(self._edges)
        edges.difference_update(Triple(*e) for e in remove)
        edges.update(Triple(*e) for e in add)
        return KnowledgeGraph._wrap(frozenset(edges))

    def __contains__(self, edge) -> bool:
        return edge in self._edges

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.sorted_edges())

    def __len__(self) -> int:
        return len(self._edges)

    def __eq__(self, other) -> bool:
        return isinstance(other, KnowledgeGraph) and self._edges == other._edges

    def __hash__(self) -> int:
        return hash(self._edges)

    def __repr__(self) -> str:
        return f"KnowledgeGraph({len(self._edges)} edges)"

    def to_json(self) -> list[list[str]]:
        return [list(e) for e in self.sorted_edges()]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    @classmethod
    def from_json(cls, data: Iterable) -> "KnowledgeGraph":
        edges = []
        for item in data:
            if len(item) != 3:
                raise ValueError(f"triple must have 3 elements: {item!r}")
            edges.append(Triple(*(validate_token(t) for t in item)))
        return cls(edges)


class Provenance(str, Enum):
    ACTION = "action-slot"
    MORPHOLOGY = "derived-morphology"
    CONTEXT = "derived-context"


class Bindings(Mapping):
    """Slot name -> token, with a provenance tag per entry."""

    __slots__ = ("_values", "_provenance", "_reverse")

    def __init__(self, values: Mapping[str, str] | None = None,
                 provenance: Mapping[str, Provenance] | None = None):
        self._values = dict(values or {})
        provenance = dict(provenance or {})
        self._provenance = {k: Provenance(provenance.get(k, Provenance.ACTION)) for k in self._values}
        action_tokens = [v for k, v in self._values.items() if self._provenance[k] is Provenance.ACTION]
        if len(set(action_tokens)) != len(action_tokens):
            raise ValueError(f"action-slot bindings must be injective: {self._values}")
        self._reverse: dict[str, str] | None = None

    def __getitem__(self, key: str) -> str:
        return self._values[key]

    def __iter__(self):
        return iter(sorted(self._values))

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"Bindings({dict(sorted(self._values.items()))})"

    def __eq__(self, other) -> bool:
        if isinstance(other, Bindings):
            return self._values == other._values and self._provenance == other._provenance
        return NotImplemented

    def provenance(self, key: str) -> Provenance:
        return self._provenance[key]

    def extended(self, entries: Mapping[str, str], provenance: Provenance) -> "Bindings":
        """Return a copy with derived entries added; action slots are kept."""
        values = dict(self._values)
        prov = dict(self._provenance)
        for k, v in entries.items():
            if k in values and prov[k] is Provenance.ACTION:
                continue
            values[k] = v
            prov[k] = provenance
        return Bindings(values, prov)

    def reverse(self) -> dict[str, str]:
        """token -> slot name, resolving collisions deterministically.

        Action slots win over derived ones; ties fall to the smallest slot name.
        """
        if self._reverse is None:
            rev: dict[str, str] = {}
            ranked = sorted(self._values, key=lambda k: (self._provenance[k] is not Provenance.ACTION, k))
            for k in ranked:
                rev.setdefault(self._values[k], k)
            self._reverse = rev
        return self._reverse

    def to_json(self) -> dict[str, str]:
        return dict(sorted(self._values.items()))


def abstract_edge(t: Iterable[str], b: Bindings) -> AbstractEdge:
    rev = b.reverse()
    h, r, tl = t
    return AbstractEdge(
        SLOT_PREFIX + rev[h] if h in rev else h,
        SLOT_PREFIX + rev[r] if r in rev else r,
        SLOT_PREFIX + rev[tl] if tl in rev else tl,
    )


def abstract_graph(g: Iterable[Triple], b: Bindings) -> frozenset:
    rev = b.reverse()
    if not rev:
        return frozenset(AbstractEdge(*e) for e in g)
    out = set()
    for h, r, t in g:
        out.add(AbstractEdge(
            SLOT_PREFIX + rev[h] if h in rev else h,
            SLOT_PREFIX + rev[r] if r in rev else r,
            SLOT_PREFIX + rev[t] if t in rev else t,
        ))
    return frozenset(out)


def instantiate(ae: Iterable[str], b: Mapping[str, str]) -> MatchPattern:
    positions = list(ae)
    used = [int(p[1:]) for p in positions if is_wildcard(p)]
    next_index = max(used, default=0) + 1
    fresh: dict[str, str] = {}
    out = []
    for p in positions:
        if is_slot(p):
            name = p[1:]
            if name in b:
                out.append(b[name])
            else:
                if name not in fresh:
                    fresh[name] = wildcard(next_index)
                    next_index += 1
                out.append(fresh[name])
        else:
            out.append(p)
    return MatchPattern(*out)


def _unify(pattern: tuple, edge: tuple) -> bool:
    assignment: dict[str, str] = {}
    for p, tok in zip(pattern, edge):
        if p[0] == WILDCARD_PREFIX:
            bound = assignment.setdefault(p, tok)
            if bound != tok:
                return False
        elif p != tok:
            return False
    return True


def match_pattern(g: KnowledgeGraph, p: Iterable[str]) -> bool:
    p = tuple(p)
    if not any(is_wildcard(x) for x in p):
        return Triple(*p) in g
    pool = g.sorted_edges() if is_wildcard(p[1]) else g.by_relation(p[1])
    return any(_unify(p, e) for e in pool)


def parse_position(text: str) -> str:
    """Validate a serialized abstract-edge position (literal, ``$SLOT`` or ``?n``)."""
    if not isinstance(text, str) or not text:
        raise ValueError(f"bad edge position {text!r}")
    if is_slot(text) and len(text) == 1:
        raise ValueError("empty slot name")
    if is_wildcard(text) and not text[1:].isdigit():
        raise ValueError(f"wildcard index must be an integer: {text!r}")
    return text
