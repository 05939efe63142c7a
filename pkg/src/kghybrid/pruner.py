"""Action-type pruner: softmax regression over relational graph features.

The feature library only mentions closed-vocabulary tokens (relations,
statuses, ``player``, ``knife``...), so features are unchanged when
ingredient, container or room names are swapped for fresh ones.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import vocab
from .grouping import LabeledDemoRecord, type_index
from .kg import KnowledgeGraph, is_wildcard

Atom = tuple[str, str, str]


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # "count" | "exists"
    atoms: tuple[Atom, ...] = ()
    relation: str = ""


def _library() -> tuple[Feature, ...]:
    P, CB, KN, ML = vocab.PLAYER, vocab.COOKBOOK, vocab.KNIFE, vocab.MEAL
    forms = vocab.CUT_STATUSES + vocab.COOK_STATUSES
    feats: list[Feature] = []

    for r in vocab.RELATIONS:
        feats.append(Feature(f"count[{r}]", "count", relation=r))

    def exists(name: str, *atoms: Atom) -> None:
        feats.append(Feature(name, "exists", tuple(atoms)))

    # single edges
    exists("held(?x)", ("?x", "in", P))
    exists("knife_held", (KN, "in", P))
    exists("meal_held", (ML, "in", P))
    exists("needs(?x,?y)", ("?x", "needs", "?y"))
    for f in forms:
        exists(f"needs(?x,{f})", ("?x", "needs", f))
    for s in vocab.STATUSES:
        exists(f"is(?x,{s})", ("?x", "is", s))
    exists("recipe(?x)", ("?x", "part_of", CB))
    exists("located(player)", (P, "at", "?r"))
    exists("located(cookbook)", (CB, "in", "?r"))
    for a in vocab.APPLIANCES:
        exists(f"located({a})", (a, "in", "?r"))
    for rel in vocab.DIRECTION_RELATION.values():
        exists(f"{rel}(?a,?b)", ("?a", rel, "?b"))

    # two edges sharing one variable
    exists("held_recipe", ("?x", "in", P), ("?x", "part_of", CB))
    exists("held_needs_any", ("?x", "in", P), ("?x", "needs", "?y"))
    exists("recipe_needs_any", ("?x", "part_of", CB), ("?x", "needs", "?y"))
    for f in forms:
        exists(f"held_needs[{f}]", ("?x", "in", P), ("?x", "needs", f))
        exists(f"recipe_needs[{f}]", ("?x", "part_of", CB), ("?x", "needs", f))
    for s in vocab.STATUSES:
        exists(f"held_is[{s}]", ("?x", "in", P), ("?x", "is", s))
        exists(f"recipe_is[{s}]", ("?x", "part_of", CB), ("?x", "is", s))
    exists("in_kitchen", (P, "at", "?r"), (CB, "in", "?r"))
    for a in vocab.APPLIANCES:
        exists(f"at_appliance[{a}]", (P, "at", "?r"), (a, "in", "?r"))

    # short chains (stand-in for multi-hop message passing)
    exists("recipe_not_held", ("?x", "part_of", CB), ("?x", "in", "?c"), ("?c", "in", "?r"))
    exists("recipe_here", ("?x", "part_of", CB), ("?x", "in", "?c"), ("?c", "in", "?r"), (P, "at", "?r"))
    exists("knife_not_held", (KN, "in", "?c"), ("?c", "in", "?r"))
    exists("knife_here", (KN, "in", "?c"), ("?c", "in", "?r"), (P, "at", "?r"))
    for a, f in vocab.COOK_FORM.items():
        exists(f"cookable_here[{a}]", ("?x", "in", P), ("?x", "needs", f), (a, "in", "?r"), (P, "at", "?r"))
    return tuple(feats)


FEATURES = _library()
FEATURE_NAMES = tuple(f.name for f in FEATURES) + ("bias",)
DIM = len(FEATURE_NAMES)
COUNT_COLUMNS = np.array([i for i, f in enumerate(FEATURES) if f.kind == "count"])


class _Index:
    __slots__ = ("by_rel", "out", "inc")

    def __init__(self, g: KnowledgeGraph):
        self.by_rel: dict[str, list] = {}
        self.out: dict[tuple, list] = {}
        self.inc: dict[tuple, list] = {}
        for h, r, t in g.edges:
            self.by_rel.setdefault(r, []).append((h, t))
            self.out.setdefault((r, h), []).append(t)
            self.inc.setdefault((r, t), []).append(h)


def _solve(index: _Index, atoms: Sequence[Atom], env: dict) -> bool:
    if not atoms:
        return True
    (h, r, t), rest = atoms[0], atoms[1:]
    hv = env.get(h, h) if is_wildcard(h) else h
    tv = env.get(t, t) if is_wildcard(t) else t
    h_free, t_free = is_wildcard(hv), is_wildcard(tv)
    if not h_free and not t_free:
        return tv in index.out.get((r, hv), ()) and _solve(index, rest, env)
    if not h_free:
        pairs = ((hv, x) for x in index.out.get((r, hv), ()))
    elif not t_free:
        pairs = ((x, tv) for x in index.inc.get((r, tv), ()))
    else:
        pairs = iter(index.by_rel.get(r, ()))
    for a, b in pairs:
        if h_free and t_free and hv == tv and a != b:
            continue
        new = dict(env)
        if h_free:
            new[hv] = a
        if t_free:
            new[tv] = b
        if _solve(index, rest, new):
            return True
    return False


def conjunction_holds(g: KnowledgeGraph, atoms: Sequence[Atom]) -> bool:
    return _solve(_Index(g), tuple(atoms), {})


_CACHE: dict = {}


def featurize(s: KnowledgeGraph) -> np.ndarray:
    key = s.edges
    hit = _CACHE.get(key)
    if hit is not None:
        return hit.copy()
    index = _Index(s)
    x = np.zeros(DIM)
    for i, f in enumerate(FEATURES):
        if f.kind == "count":
            x[i] = len(index.by_rel.get(f.relation, ()))
        else:
            x[i] = 1.0 if _solve(index, f.atoms, {}) else 0.0
    x[-1] = 1.0
    if len(_CACHE) > 200_000:
        _CACHE.clear()
    _CACHE[key] = x
    return x.copy()


def featurize_many(states: Sequence[KnowledgeGraph]) -> np.ndarray:
    return np.stack([featurize(s) for s in states]) if states else np.zeros((0, DIM))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PrunerConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.5
    l2: float = 1e-4
    holdout: float = 0.1
    seed: int = 0
    # relation counts shift with every injected edge; off unless asked for
    use_counts: bool = False


def input_mask(config: PrunerConfig) -> np.ndarray:
    mask = np.ones(DIM)
    if not config.use_counts:
        mask[COUNT_COLUMNS] = 0.0
    return mask


@dataclass
class PrunerModel:
    weights: np.ndarray  # (K, DIM)
    scale: np.ndarray  # (DIM,) per-feature divisor applied before the linear map
    config: PrunerConfig = field(default_factory=PrunerConfig)
    train_loss: float = float("nan")
    holdout_accuracy: float = float("nan")
    loss_history: list = field(default_factory=list)

    @classmethod
    def uniform(cls) -> "PrunerModel":
        return cls(np.zeros((vocab.K, DIM)), np.ones(DIM))

    def distribution(self, s: KnowledgeGraph) -> np.ndarray:
        return softmax(self.weights @ (featurize(s) * input_mask(self.config) / self.scale))

    def to_json(self) -> dict:
        return {
            "kind": "softmax-pruner",
            "action_types": list(vocab.ACTION_TYPES),
            "features": [
                {"name": f.name, "kind": f.kind, "relation": f.relation, "atoms": [list(a) for a in f.atoms]}
                for f in FEATURES
            ] + [{"name": "bias", "kind": "bias", "relation": "", "atoms": []}],
            "scale": [float(v) for v in self.scale],
            "weights": [[float(v) for v in row] for row in self.weights],
            "config": asdict(self.config),
            "train_loss": self.train_loss,
            "holdout_accuracy": self.holdout_accuracy,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PrunerModel":
        names = [f["name"] for f in data["features"]]
        if tuple(names) != FEATURE_NAMES:
            raise ValueError("pruner file was built with a different feature library")
        return cls(np.asarray(data["weights"], dtype=float), np.asarray(data["scale"], dtype=float),
                   PrunerConfig(**data["config"]), data.get("train_loss", float("nan")),
                   data.get("holdout_accuracy", float("nan")))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "PrunerModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def predict_type(m: PrunerModel, s: KnowledgeGraph) -> tuple[str, np.ndarray]:
    p = m.distribution(s)
    return vocab.ACTION_TYPES[int(np.argmax(p))], p


def loss_and_grad(W: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient in W."""
    n = len(y)
    P = softmax(X @ W.T)
    loss = -np.log(np.clip(P[np.arange(n), y], 1e-300, None)).mean() + 0.5 * l2 * float((W * W).sum())
    P[np.arange(n), y] -= 1.0
    grad = P.T @ X / n + l2 * W
    return float(loss), grad


def train_pruner(records: Sequence[LabeledDemoRecord], config: PrunerConfig | None = None) -> PrunerModel:
    if not records:
        raise ValueError("cannot train a pruner on an empty dataset")
    config = config or PrunerConfig()
    X = featurize_many([r.state for r in records])
    y = np.array([type_index(r.type_name) for r in records])
    return fit(X, y, config)


def fit(X: np.ndarray, y: np.ndarray, config: PrunerConfig) -> PrunerModel:
    rng = np.random.default_rng(config.seed)
    n = len(y)
    order = rng.permutation(n)
    n_hold = int(round(n * config.holdout)) if n >= 10 else 0
    hold, train = order[:n_hold], order[n_hold:]
    if X.shape[1] == DIM:
        X = X * input_mask(config)
    scale = np.maximum(1.0, np.abs(X[train]).max(axis=0)) if len(train) else np.ones(X.shape[1])
    Xs = X / scale
    W = np.zeros((vocab.K, X.shape[1]))
    history = []
    for _ in range(config.epochs):
        perm = train[rng.permutation(len(train))]
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            _, g = loss_and_grad(W, Xs[idx], y[idx], config.l2)
            W -= config.learning_rate * g
        history.append(loss_and_grad(W, Xs[train], y[train], config.l2)[0])
    acc = float("nan")
    if n_hold:
        pred = np.argmax(Xs[hold] @ W.T, axis=1)
        acc = float((pred == y[hold]).mean())
    return PrunerModel(W, scale, config, history[-1] if history else float("nan"), acc, history)
