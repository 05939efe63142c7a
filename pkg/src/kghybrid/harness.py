"""Noise injection, episode evaluation and the literal-feature selector baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import vocab
from .cookworld import Env
from .grouping import LabeledDemoRecord
from .kg import KnowledgeGraph, Triple
from .policy import CandidateScore, TwoStepPolicy, _parse
from .pruner import PrunerModel, softmax
from .teacher import action_keys, hashed_pairs, triple_hashes

Policy = Callable[[KnowledgeGraph, Sequence[str]], str]


@dataclass(frozen=True)
class NoiseSpec:
    add_frac: float = 0.0
    drop_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.add_frac >= 0.0:
            raise ValueError(f"add_frac must be >= 0, got {self.add_frac}")
        if not 0.0 <= self.drop_frac <= 1.0:
            raise ValueError(f"drop_frac must lie in [0, 1], got {self.drop_frac}")

    @property
    def is_clean(self) -> bool:
        return self.add_frac == 0.0 and self.drop_frac == 0.0

    def counts(self, n_edges: int) -> tuple[int, int]:
        # round first so that e.g. 0.6 * 10 does not ceil to 7
        return (math.ceil(round(self.add_frac * n_edges, 9)),
                math.ceil(round(self.drop_frac * n_edges, 9)))


def observed_vocabulary(envs: Iterable[Env]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Node and relation universes for noise: everything seen in the env set.

    Tokens that only appear after play starts (statuses, ``meal``) are added
    from the closed vocabulary.
    """
    nodes: set[str] = {vocab.PLAYER, vocab.MEAL, *vocab.STATUSES}
    relations: set[str] = set(vocab.RELATIONS)
    for env in envs:
        nodes |= env.initial_graph.nodes
        relations |= env.initial_graph.relations
    return tuple(sorted(nodes)), tuple(sorted(relations))


def perturb(g: KnowledgeGraph, spec: NoiseSpec, nodes: Sequence[str], relations: Sequence[str],
            rng: np.random.Generator | None = None) -> KnowledgeGraph:
    """Add ``ceil(k|E|)`` random new edges and drop ``ceil(p|E|)`` original ones."""
    if spec.is_clean:
        return g
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    original = g.sorted_edges()
    n_add, n_drop = spec.counts(len(original))
    if n_add and (not nodes or not relations):
        raise ValueError("cannot add noise edges from an empty vocabulary")
    if n_add > len(nodes) ** 2 * len(relations) - len(original):
        raise ValueError("not enough distinct edges in the vocabulary to add")
    existing = g.edges
    added: set[Triple] = set()
    while len(added) < n_add:
        need = n_add - len(added)
        h = rng.integers(len(nodes), size=need)
        r = rng.integers(len(relations), size=need)
        t = rng.integers(len(nodes), size=need)
        for i in range(need):
            e = Triple(nodes[h[i]], relations[r[i]], nodes[t[i]])
            if e not in existing and e not in added:
                added.add(e)
    dropped = ()
    if n_drop:
        idx = rng.choice(len(original), size=n_drop, replace=False)
        dropped = [original[i] for i in idx]
    return g.with_edges(add=added, remove=dropped)


@dataclass
class EvalResult:
    mean: float
    minimum: float
    maximum: float
    per_env: list[float]
    episodes: int

    def to_json(self) -> dict:
        return {"mean": self.mean, "min": self.minimum, "max": self.maximum,
                "per_env": self.per_env, "episodes": self.episodes}


def run_episode(policy: Policy, env: Env, noise: NoiseSpec | None = None,
                nodes: Sequence[str] = (), relations: Sequence[str] = (),
                rng: np.random.Generator | None = None) -> float:
    env.reset()
    while not env.state.done:
        view = env.state.graph
        if noise is not None and not noise.is_clean:
            view = perturb(view, noise, nodes, relations, rng)
        env.step(policy(view, env.action_candidates()))
    return env.normalized_score()


def evaluate(policy: Policy, envs: Sequence[Env], noise: NoiseSpec | None = None, episodes: int = 5,
             nodes: Sequence[str] | None = None, relations: Sequence[str] | None = None) -> EvalResult:
    """Mean normalized score; noise hits the policy's view at every step."""
    if not envs:
        raise ValueError("evaluate needs at least one environment")
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    noise = noise or NoiseSpec()
    if nodes is None or relations is None:
        nodes, relations = observed_vocabulary(envs)
    per_env = []
    for i, env in enumerate(envs):
        scores = []
        for ep in range(episodes):
            rng = np.random.default_rng([noise.seed, i, ep])
            scores.append(run_episode(policy, env, noise, nodes, relations, rng))
        per_env.append(float(np.mean(scores)))
    return EvalResult(float(np.mean(per_env)), float(min(per_env)), float(max(per_env)), per_env,
                      episodes * len(envs))


def relative_change(noisy: float, clean: float) -> float:
    return (noisy - clean) / clean if clean else 0.0


# ------------------------------------------------- literal-feature selector


@dataclass
class NetworkSelectorConfig:
    epochs: int = 10
    learning_rate: float = 0.5
    l2: float = 0.0
    hash_dim: int = 2 ** 16
    hash_seed: int = 29
    seed: int = 0


class NetworkSelector:
    """Softmax over same-type candidates, scored by a linear model on hashed
    (literal triple, action token) indicators. It sees entity names verbatim
    and so cannot transfer to games with unseen entities."""

    def __init__(self, weights: np.ndarray, config: NetworkSelectorConfig):
        self.weights = weights
        self.config = config

    def _features(self, s: KnowledgeGraph, actions: Sequence[str]) -> list[np.ndarray]:
        rows = triple_hashes(s.sorted_edges())
        return [hashed_pairs(rows, action_keys(a), self.config.hash_seed, self.config.hash_dim) for a in actions]

    def logits(self, s: KnowledgeGraph, actions: Sequence[str]) -> np.ndarray:
        return np.array([self.weights[f].sum() for f in self._features(s, actions)])

    def score(self, s: KnowledgeGraph, action: str) -> float:
        return float(self.logits(s, [action])[0])

    def breakdown(self, s: KnowledgeGraph, action: str) -> CandidateScore:
        return CandidateScore(action, _parse(action)[0], self.score(s, action))


def train_network_selector(records: Sequence[LabeledDemoRecord],
                           config: NetworkSelectorConfig | None = None) -> NetworkSelector:
    """Imitate the demo action among its same-type candidates by SGD on cross-entropy."""
    if not records:
        raise ValueError("cannot train a selector on an empty dataset")
    config = config or NetworkSelectorConfig()
    sel = NetworkSelector(np.zeros(config.hash_dim), config)
    data = []
    for r in records:
        pool = [a for a in r.candidates if _parse(a)[0] == r.type_name]
        if len(pool) < 2 or r.action not in pool:
            continue
        data.append((sel._features(r.state, pool), pool.index(r.action)))
    rng = np.random.default_rng(config.seed)
    w = sel.weights
    for _ in range(config.epochs):
        for j in rng.permutation(len(data)):
            feats, y = data[j]
            z = np.array([w[f].sum() for f in feats])
            p = softmax(z)
            p[y] -= 1.0
            for f, g in zip(feats, p):
                if g:
                    w[f] -= config.learning_rate * g / len(f)
            if config.l2:
                w *= 1.0 - config.learning_rate * config.l2
    return sel


def network_selector_baseline(demos: Sequence[LabeledDemoRecord], pruner: PrunerModel,
                              config: NetworkSelectorConfig | None = None) -> TwoStepPolicy:
    return TwoStepPolicy(pruner, train_network_selector(demos, config))
