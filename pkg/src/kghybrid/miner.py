"""Mine abstract supporting edge sets with a tf-idf style importance score."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import vocab
from .grouping import LabeledDemoRecord, split_dataset
from .kg import AbstractEdge, abstract_graph, instantiate, match_pattern, parse_position

log = logging.getLogger(__name__)

GLOBAL_MODES = ("abstract", "existential")


class EmptyPartError(ValueError):
    pass


@dataclass
class EdgeStats:
    n_total: int
    n_type: dict[str, int]
    count_type: dict[str, Counter]
    count: Counter

    def freq_k(self, e: AbstractEdge, type_name: str) -> float:
        n = self.n_type.get(type_name, 0)
        if n == 0:
            raise EmptyPartError(f"no demonstrations of action type {type_name!r}")
        return self.count_type[type_name][e] / n

    def freq(self, e: AbstractEdge) -> float:
        return self.count[e] / self.n_total


def count_frequencies(records: Sequence[LabeledDemoRecord], global_mode: str = "abstract") -> EdgeStats:
    """Per-state presence counts of abstract edges, per type and overall.

    Each state is abstracted under the bindings of its own labelled action.
    With ``global_mode="existential"`` the overall count instead asks whether
    the edge, with every slot read as a wildcard, occurs in the raw state.
    """
    if not records:
        raise EmptyPartError("cannot count edge frequencies of an empty dataset")
    if global_mode not in GLOBAL_MODES:
        raise ValueError(f"global_mode must be one of {GLOBAL_MODES}")
    count_type: dict[str, Counter] = {t: Counter() for t in vocab.ACTION_TYPES}
    n_type = {t: 0 for t in vocab.ACTION_TYPES}
    count: Counter = Counter()
    cache: dict = {}
    for r in records:
        key = (r.state.edges, tuple(sorted(r.bindings.reverse().items())))
        abstracted = cache.get(key)
        if abstracted is None:
            abstracted = abstract_graph(r.state.edges, r.bindings)
            cache[key] = abstracted
        count_type[r.type_name].update(abstracted)
        n_type[r.type_name] += 1
        if global_mode == "abstract":
            count.update(abstracted)
    if global_mode == "existential":
        seen = set().union(*(c.keys() for c in count_type.values()))
        states = Counter(r.state for r in records)
        for e in seen:
            pattern = instantiate(e, {})
            count[e] = sum(m for s, m in states.items() if match_pattern(s, pattern))
    return EdgeStats(len(records), n_type, count_type, count)


def importance(freq_k: float, freq: float) -> float:
    if not 0.0 <= freq_k <= 1.0 or not 0.0 <= freq <= 1.0:
        raise ValueError(f"frequencies must lie in [0, 1]: freq_k={freq_k}, freq={freq}")
    if freq == 0.0:
        if freq_k > 0.0:
            raise ValueError("inconsistent counts: edge seen in a part but never overall")
        return 0.0
    return freq_k * math.log(1.0 / freq)


@dataclass(frozen=True)
class Rule:
    edge: AbstractEdge
    importance: float


@dataclass
class RuleBook:
    tau: float
    rules: dict[str, list[Rule]]
    meta: dict = field(default_factory=dict)

    def edges(self, type_name: str) -> list[AbstractEdge]:
        return [r.edge for r in self.rules.get(type_name, [])]

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "types": {
                t: [{"edge": r.edge.to_json(), "importance": r.importance} for r in self.rules.get(t, [])]
                for t in vocab.ACTION_TYPES
            },
            "meta": self.meta,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, data: dict) -> "RuleBook":
        rules: dict[str, list[Rule]] = {t: [] for t in vocab.ACTION_TYPES}
        for t, items in data["types"].items():
            if t not in rules:
                raise ValueError(f"unknown action type {t!r} in rulebook")
            for item in items:
                edge = AbstractEdge(*(parse_position(p) for p in item["edge"]))
                rules[t].append(Rule(edge, float(item["importance"])))
        return cls(float(data["tau"]), rules, dict(data.get("meta", {})))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "RuleBook":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def dataset_digest(records: Iterable[LabeledDemoRecord]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(r.state.dumps().encode())
        h.update(b"\x1e")
        h.update(r.action.encode())
        h.update(b"\x1d")
    return h.hexdigest()


def scored_edges(stats: EdgeStats, type_name: str) -> list[Rule]:
    out = []
    for e in stats.count_type[type_name]:
        out.append(Rule(e, importance(stats.freq_k(e, type_name), stats.freq(e))))
    out.sort(key=lambda r: (-r.importance, r.edge))
    return out


def mine_rules(records: Sequence[LabeledDemoRecord], tau: float, global_mode: str = "abstract") -> RuleBook:
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    stats = count_frequencies(records, global_mode)
    rules: dict[str, list[Rule]] = {}
    for t in vocab.ACTION_TYPES:
        if stats.n_type[t] == 0:
            log.warning("no demonstrations for action type %r; its rule set is empty", t)
            rules[t] = []
            continue
        rules[t] = [r for r in scored_edges(stats, t) if r.importance > tau]
    meta = {
        "dataset_sha256": dataset_digest(records),
        "n_records": stats.n_total,
        "n_per_type": dict(stats.n_type),
        "global_mode": global_mode,
    }
    return RuleBook(tau, rules, meta)


def sweep_tau(records: Sequence[LabeledDemoRecord], taus: Iterable[float]) -> list[dict]:
    stats = count_frequencies(records)
    scored = {t: scored_edges(stats, t) for t in vocab.ACTION_TYPES if stats.n_type[t]}
    rows = []
    for tau in taus:
        sizes = {t: sum(r.importance > tau for r in rs) for t, rs in scored.items()}
        rows.append({"tau": tau, "sizes": sizes})
    return rows
