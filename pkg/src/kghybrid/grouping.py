"""Action grammar: parse action strings into (type, bindings), derive extra
bindings from morphology and the state, and split demonstrations by type."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import vocab
from .kg import Bindings, KnowledgeGraph, Provenance


class ActionParseError(ValueError):
    def __init__(self, action: str, token: str, reason: str = "unexpected token"):
        super().__init__(f"cannot parse action {action!r}: {reason} {token!r}")
        self.action = action
        self.token = token


@dataclass(frozen=True)
class ActionTemplate:
    type_name: str
    pattern: tuple[str, ...]
    # closed vocabularies per slot; slots missing here accept any entity token
    slot_vocab: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def type_id(self) -> int:
        return vocab.ACTION_TYPES.index(self.type_name) + 1

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(p for p in self.pattern if p.isupper())

    def render(self, bindings: Mapping[str, str]) -> str:
        return " ".join(bindings[p] if p.isupper() else p for p in self.pattern)

    def accepts(self, position: str, token: str) -> bool:
        if not position.isupper():
            return position == token
        allowed = self.slot_vocab.get(position)
        if allowed is not None:
            return token in allowed
        return token not in vocab.CLOSED_TOKENS or token == vocab.KNIFE

    def match(self, tokens: list[str]) -> dict[str, str] | None:
        if len(tokens) != len(self.pattern):
            return None
        if not all(self.accepts(p, tok) for p, tok in zip(self.pattern, tokens)):
            return None
        return {p: tok for p, tok in zip(self.pattern, tokens) if p.isupper()}

    def first_mismatch(self, tokens: list[str]) -> int:
        for i, (p, tok) in enumerate(zip(self.pattern, tokens)):
            if not self.accepts(p, tok):
                return i
        return min(len(tokens), len(self.pattern))


TEMPLATES = (
    ActionTemplate("go", ("go", "DIR"), {"DIR": vocab.DIRECTIONS}),
    ActionTemplate("take", ("take", "OBJ", "from", "REC")),
    ActionTemplate("cut", ("VERB", "OBJ", "with", "knife"), {"VERB": vocab.CUT_VERBS}),
    ActionTemplate("cook", ("cook", "OBJ", "with", "APPL"), {"APPL": vocab.APPLIANCES}),
    ActionTemplate("prepare", ("prepare", "meal")),
    ActionTemplate("eat", ("eat", "meal")),
)
TEMPLATE_BY_TYPE = {t.type_name: t for t in TEMPLATES}

DERIVED_SOURCE = {
    "VERB_PASSIVE": Provenance.MORPHOLOGY,
    "COOK_RESULT": Provenance.MORPHOLOGY,
    "DIR_REL": Provenance.MORPHOLOGY,
    "HERE": Provenance.CONTEXT,
    "DEST": Provenance.CONTEXT,
}


def type_index(type_name: str) -> int:
    """0-based position of an action type in the fixed template order."""
    return vocab.ACTION_TYPES.index(type_name)


def parse_action(action: str) -> tuple[str, Bindings]:
    tokens = action.split()
    if not tokens:
        raise ActionParseError(action, "", "empty action")
    matched = []
    for template in TEMPLATES:
        values = template.match(tokens)
        if values is not None:
            matched.append((template, values))
    if not matched:
        best = max(TEMPLATES, key=lambda t: t.first_mismatch(tokens))
        i = best.first_mismatch(tokens)
        if i < len(tokens):
            raise ActionParseError(action, tokens[i])
        raise ActionParseError(action, tokens[-1], "action ends early after")
    if len(matched) > 1:
        raise ActionParseError(action, tokens[0], "ambiguous template for")
    template, values = matched[0]
    return template.type_name, Bindings(values)


def render_action(type_name: str, bindings: Mapping[str, str]) -> str:
    return TEMPLATE_BY_TYPE[type_name].render(bindings)


def current_room(s: KnowledgeGraph) -> str | None:
    rooms = [e.tail for e in s.by_relation("at") if e.head == vocab.PLAYER]
    return rooms[0] if len(rooms) == 1 else None


def derive_bindings(type_name: str, b: Bindings, s: KnowledgeGraph) -> Bindings:
    morph: dict[str, str] = {}
    if "VERB" in b:
        morph["VERB_PASSIVE"] = vocab.CUT_FORM[b["VERB"]]
    if "APPL" in b:
        morph["COOK_RESULT"] = vocab.COOK_FORM[b["APPL"]]
    if "DIR" in b:
        morph["DIR_REL"] = vocab.DIRECTION_RELATION[b["DIR"]]
    out = b.extended(morph, Provenance.MORPHOLOGY) if morph else b

    context: dict[str, str] = {}
    here = current_room(s)
    if here is not None:
        context["HERE"] = here
        if type_name == "go":
            heads = [e.head for e in s.by_relation(morph["DIR_REL"]) if e.tail == here]
            if len(heads) == 1:
                context["DEST"] = heads[0]
    return out.extended(context, Provenance.CONTEXT) if context else out


def parse_and_derive(action: str, s: KnowledgeGraph) -> tuple[str, Bindings]:
    type_name, b = parse_action(action)
    return type_name, derive_bindings(type_name, b, s)


@dataclass
class LabeledDemoRecord:
    state: KnowledgeGraph
    action: str
    candidates: list[str]
    type_name: str
    bindings: Bindings
    teacher: str = "oracle"

    @classmethod
    def label(cls, state: KnowledgeGraph, action: str, candidates: Iterable[str],
              teacher: str = "oracle") -> "LabeledDemoRecord":
        candidates = list(candidates)
        if action not in candidates:
            raise ValueError(f"label {action!r} is not among the candidates")
        type_name, b = parse_and_derive(action, state)
        return cls(state, action, candidates, type_name, b, teacher)

    @property
    def type_id(self) -> int:
        return type_index(self.type_name) + 1

    def to_json(self) -> dict:
        return {
            "state": self.state.to_json(),
            "action": self.action,
            "candidates": list(self.candidates),
            "type": self.type_name,
            "bindings": self.bindings.to_json(),
            "teacher": self.teacher,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "LabeledDemoRecord":
        state = KnowledgeGraph.from_json(data["state"])
        type_name, action_b = parse_action(data["action"])
        if data.get("type", type_name) != type_name:
            raise ValueError(f"record type {data['type']!r} disagrees with action {data['action']!r}")
        stored = dict(data.get("bindings") or {})
        prov = {k: DERIVED_SOURCE.get(k, Provenance.ACTION) for k in stored}
        for k, v in action_b.items():
            stored[k] = v
            prov[k] = Provenance.ACTION
        rec = cls(state, data["action"], list(data["candidates"]), type_name,
                  Bindings(stored, prov), data.get("teacher", "oracle"))
        if rec.action not in rec.candidates:
            raise ValueError(f"label {rec.action!r} is not among the candidates")
        return rec


def split_dataset(records: Iterable[LabeledDemoRecord]) -> dict[str, list[LabeledDemoRecord]]:
    parts: dict[str, list[LabeledDemoRecord]] = {t: [] for t in vocab.ACTION_TYPES}
    for r in records:
        parts[r.type_name].append(r)
    return parts


def write_jsonl(records: Iterable[LabeledDemoRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_json(), sort_keys=True, separators=(",", ":")))
            f.write("\n")


def read_jsonl(path) -> list[LabeledDemoRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(LabeledDemoRecord.from_json(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out
