"""The two-step hybrid policy: pruner picks an action type, a rule-based
selector picks the action of that type whose supporting edges are best
covered by the current graph."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from . import vocab
from .grouping import derive_bindings, parse_action
from .kg import (AbstractEdge, Bindings, KnowledgeGraph, MatchPattern, instantiate, is_slot, is_wildcard,
                 match_pattern)
from .miner import RuleBook
from .pruner import PrunerModel, predict_type


@lru_cache(maxsize=200_000)
def _parse(action: str) -> tuple[str, Bindings]:
    return parse_action(action)


@dataclass(frozen=True)
class EdgeCheck:
    edge: AbstractEdge
    pattern: MatchPattern
    matched: bool
    importance: float


@dataclass
class CandidateScore:
    action: str
    type_name: str
    score: float
    checks: list[EdgeCheck] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "action": self.action,
            "type": self.type_name,
            "score": self.score,
            "edges": [
                {"edge": c.edge.to_json(), "pattern": c.pattern.to_json(), "matched": c.matched,
                 "importance": c.importance}
                for c in self.checks
            ],
        }


@dataclass
class Explanation:
    action: str
    predicted_type: str
    distribution: list[float]
    chosen_type: str
    candidates: list[CandidateScore]

    @property
    def fallback(self) -> bool:
        return self.chosen_type != self.predicted_type

    def chosen(self) -> CandidateScore:
        return next(c for c in self.candidates if c.action == self.action)

    def to_json(self) -> dict:
        return {
            "action": self.action,
            "predicted_type": self.predicted_type,
            "chosen_type": self.chosen_type,
            "distribution": dict(zip(vocab.ACTION_TYPES, self.distribution)),
            "candidates": [c.to_json() for c in self.candidates],
        }

    def table(self) -> str:
        """Plain-text table: candidate | type | score | matched | missing."""
        lines = [f"predicted type: {self.predicted_type}"
                 + ("" if not self.fallback else f" (no candidates; fell back to {self.chosen_type})"),
                 "distribution: " + ", ".join(f"{t}={p:.3f}" for t, p in zip(vocab.ACTION_TYPES, self.distribution)),
                 ""]
        header = ("candidate", "type", "score", "matched edges", "missing edges")
        rows = []
        for c in self.candidates:
            fmt = lambda ch: "(" + ", ".join(ch.pattern) + f") [{ch.importance:.4f}]"
            matched = "; ".join(fmt(ch) for ch in c.checks if ch.matched) or "-"
            missing = "; ".join(fmt(ch) for ch in c.checks if not ch.matched) or "-"
            mark = "* " if c.action == self.action else "  "
            score = f"{c.score:g}"
            rows.append((mark + c.action, c.type_name, score, matched, missing))
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
        widths[-1] = len(header[-1])
        fmt_row = lambda r: " | ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()
        lines.append(fmt_row(header))
        lines.append("-+-".join("-" * w for w in widths))
        lines.extend(fmt_row(r) for r in rows)
        return "\n".join(lines)


class Selector(Protocol):
    def breakdown(self, s: KnowledgeGraph, action: str) -> CandidateScore: ...

    def score(self, s: KnowledgeGraph, action: str) -> float: ...


class RuleSelector:
    """Scores an action by how many of its instantiated supporting edges occur in the graph."""

    def __init__(self, rules: RuleBook):
        self.rules = rules
        self._plans: dict[str, list] = {}

    def _plan(self, type_name: str) -> list:
        # per rule: the edge, the slot name at each position (None when the
        # position is fixed) and whether the edge has its own wildcards
        plan = self._plans.get(type_name)
        if plan is None:
            plan = [(rule, tuple(x[1:] if is_slot(x) else None for x in rule.edge),
                     any(is_wildcard(x) for x in rule.edge))
                    for rule in self.rules.rules.get(type_name, [])]
            self._plans[type_name] = plan
        return plan

    def _checks(self, s: KnowledgeGraph, action: str):
        type_name, b = _parse(action)
        values = dict(derive_bindings(type_name, b, s))
        edges = s.edges
        for rule, slots, wild in self._plan(type_name):
            try:
                pattern = tuple(x if n is None else values[n] for x, n in zip(rule.edge, slots))
            except KeyError:
                pattern = instantiate(rule.edge, values)
                yield rule, pattern, match_pattern(s, pattern)
                continue
            yield rule, pattern, (match_pattern(s, pattern) if wild else pattern in edges)

    def breakdown(self, s: KnowledgeGraph, action: str) -> CandidateScore:
        checks = [EdgeCheck(rule.edge, MatchPattern(*p), hit, rule.importance)
                  for rule, p, hit in self._checks(s, action)]
        return CandidateScore(action, _parse(action)[0], sum(c.matched for c in checks), checks)

    def score(self, s: KnowledgeGraph, action: str) -> int:
        return sum(hit for _, _, hit in self._checks(s, action))


def score_action(s: KnowledgeGraph, a: str, rb: RuleBook) -> int:
    return RuleSelector(rb).score(s, a)


def type_ranking(distribution: np.ndarray) -> list[str]:
    """Types by descending probability; ties go to the earlier template."""
    order = sorted(range(len(distribution)), key=lambda i: (-distribution[i], i))
    return [vocab.ACTION_TYPES[i] for i in order]


def _choose(scored: Sequence[CandidateScore]) -> CandidateScore:
    return min(scored, key=lambda c: (-c.score, c.action))


def select_action(s: KnowledgeGraph, ranking, candidates: Sequence[str], rb: RuleBook | Selector) -> str:
    """Pick the best-scoring candidate of the first ranked type that has any.

    ``ranking`` is a type name, a list of type names, or a probability vector
    over the fixed type order.
    """
    return _select(s, ranking, candidates, rb, explain=False)[0].action


def _select(s, ranking, candidates, selector, explain=True) -> tuple[CandidateScore, list[CandidateScore], str]:
    if not candidates:
        raise ValueError("select_action needs at least one candidate")
    if isinstance(selector, RuleBook):
        selector = RuleSelector(selector)
    if isinstance(ranking, str):
        ranking = [ranking] + [t for t in vocab.ACTION_TYPES if t != ranking]
    elif isinstance(ranking, np.ndarray) or (ranking and not isinstance(ranking[0], str)):
        ranking = type_ranking(np.asarray(ranking, dtype=float))
    by_type: dict[str, list[str]] = {}
    for a in candidates:
        by_type.setdefault(_parse(a)[0], []).append(a)
    for t in ranking:
        pool = by_type.get(t)
        if pool:
            if explain:
                scored = [selector.breakdown(s, a) for a in pool]
            else:
                scored = [CandidateScore(a, t, selector.score(s, a)) for a in pool]
            return _choose(scored), scored, t
    raise ValueError("no candidate matches any ranked action type")


class TwoStepPolicy:
    """Pruner followed by a within-type selector; stateless across steps."""

    def __init__(self, pruner: PrunerModel, selector: Selector):
        self.pruner = pruner
        self.selector = selector

    def act(self, s: KnowledgeGraph, candidates: Sequence[str]) -> tuple[str, Explanation]:
        predicted, dist = predict_type(self.pruner, s)
        best, scored, chosen_type = _select(s, dist, candidates, self.selector)
        explanation = Explanation(best.action, predicted, [float(p) for p in dist], chosen_type, scored)
        return best.action, explanation

    def __call__(self, s: KnowledgeGraph, candidates: Sequence[str]) -> str:
        _, dist = predict_type(self.pruner, s)
        return _select(s, dist, candidates, self.selector, explain=False)[0].action


class HybridPolicy(TwoStepPolicy):
    def __init__(self, pruner: PrunerModel, rules: RuleBook):
        super().__init__(pruner, RuleSelector(rules))
        self.rules = rules


def act(p: TwoStepPolicy, s: KnowledgeGraph, candidates: Sequence[str]) -> tuple[str, Explanation]:
    return p.act(s, candidates)
