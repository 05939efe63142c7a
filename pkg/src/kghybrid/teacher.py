"""Teacher policies and demonstration collection.

Three teachers are available: a scripted planner that solves every game, a
linear Q-learner over hashed state-action features, and a uniform random
policy used as a negative control.
"""
from __future__ import annotations

import json
import logging
import zlib
from collections import deque
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from . import vocab
from .cookworld import Env
from .grouping import LabeledDemoRecord, current_room, parse_action
from .kg import KnowledgeGraph, Triple

log = logging.getLogger(__name__)

Policy = Callable[[KnowledgeGraph, Sequence[str]], str]


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------- oracle

def _neighbors(s: KnowledgeGraph, room: str) -> list[tuple[str, str]]:
    out = []
    for d in vocab.DIRECTIONS:
        for e in s.by_relation(vocab.DIRECTION_RELATION[d]):
            if e.tail == room:
                out.append((d, e.head))
    return out


def first_move(s: KnowledgeGraph, start: str, targets: set[str]) -> str | None:
    """Direction of the first step on a shortest path to any target room.

    Breadth-first over direction edges; neighbours expanded in the fixed
    direction order, so ties resolve deterministically.
    """
    if start in targets:
        return None
    seen = {start}
    frontier = deque()
    for d, nxt in _neighbors(s, start):
        if nxt not in seen:
            seen.add(nxt)
            frontier.append((nxt, d))
    while frontier:
        room, first = frontier.popleft()
        if room in targets:
            return first
        for _, nxt in _neighbors(s, room):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, first))
    return None


def _room_of(s: KnowledgeGraph, thing: str, rooms: set[str]) -> str | None:
    seen = set()
    while thing not in rooms:
        if thing in seen:
            return None
        seen.add(thing)
        hosts = [e.tail for e in s.by_relation("in") if e.head == thing]
        if len(hosts) != 1:
            return None
        thing = hosts[0]
    return thing


def oracle_policy(s: KnowledgeGraph, candidates: Sequence[str]) -> str:
    action = _plan(s)
    if action not in candidates:
        raise OracleError(f"planned action {action!r} is not available")
    return action


def _plan(s: KnowledgeGraph) -> str:
    here = current_room(s)
    if here is None:
        raise OracleError("state has no unique player location")
    held = {e.head for e in s.by_relation("in") if e.tail == vocab.PLAYER}
    if vocab.MEAL in held:
        return "eat meal"
    recipe = sorted(e.head for e in s.by_relation("part_of") if e.tail == vocab.COOKBOOK)
    if not recipe:
        raise OracleError("state has neither a recipe nor a meal")
    needs: dict[str, list[str]] = {x: [] for x in recipe}
    for e in s.by_relation("needs"):
        if e.head in needs:
            needs[e.head].append(e.tail)
    kitchens = [e.tail for e in s.by_relation("in") if e.head == vocab.COOKBOOK]
    if len(kitchens) != 1:
        raise OracleError("cookbook location is not unique")
    kitchen = kitchens[0]
    rooms = {here, kitchen}
    for rel in vocab.DIRECTION_RELATION.values():
        for e in s.by_relation(rel):
            rooms.update((e.head, e.tail))

    knife_held = vocab.KNIFE in held
    need_cutting = any(f in vocab.CUT_STATUSES for x in recipe for f in needs[x])
    appliances_here = {e.head for e in s.by_relation("in") if e.tail == here and e.head in vocab.APPLIANCES}

    if all(x in held for x in recipe) and not any(needs.values()):
        if here == kitchen:
            return "prepare meal"
        move = first_move(s, here, {kitchen})
        if move is None:
            raise OracleError("kitchen unreachable")
        return f"go {move}"

    for x in recipe:
        if x not in held:
            continue
        for form in sorted(needs[x]):
            if form in vocab.CUT_STATUSES and knife_held:
                verb = next(v for v, f in vocab.CUT_FORM.items() if f == form)
                return f"{verb} {x} with knife"
    for x in recipe:
        if x not in held:
            continue
        for form in sorted(needs[x]):
            if form in vocab.COOK_STATUSES:
                appl = next(a for a, f in vocab.COOK_FORM.items() if f == form)
                if appl in appliances_here:
                    return f"cook {x} with {appl}"

    wanted = [x for x in recipe if x not in held]
    if need_cutting and not knife_held:
        wanted.append(vocab.KNIFE)
    targets: set[str] = set()
    for x in wanted:
        hosts = [e.tail for e in s.by_relation("in") if e.head == x]
        if len(hosts) != 1:
            raise OracleError(f"{x!r} has no unique location")
        room = _room_of(s, hosts[0], rooms)
        if room == here:
            return f"take {x} from {hosts[0]}"
        if room is None:
            raise OracleError(f"cannot locate room of {x!r}")
        targets.add(room)
    for x in recipe:
        if x in held:
            for form in needs[x]:
                if form in vocab.COOK_STATUSES:
                    appl = next(a for a, f in vocab.COOK_FORM.items() if f == form)
                    room = _room_of(s, appl, rooms)
                    if room is not None:
                        targets.add(room)
    if not targets:
        raise OracleError("nothing left to do but requirements remain")
    move = first_move(s, here, targets)
    if move is None:
        raise OracleError("targets unreachable")
    return f"go {move}"


class RandomPolicy:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, s: KnowledgeGraph, candidates: Sequence[str]) -> str:
        return candidates[int(self.rng.integers(len(candidates)))]


# ---------------------------------------------------------------- linear Q

_HASH_CACHE: dict = {}
_BIAS = 0x5BD1E995


def _h(text: str) -> int:
    v = _HASH_CACHE.get(text)
    if v is None:
        v = zlib.crc32(text.encode("utf-8"))
        if len(_HASH_CACHE) < 2_000_000:
            _HASH_CACHE[text] = v
    return v


def triple_hashes(s: Iterable[Triple]) -> np.ndarray:
    return np.array([_BIAS] + [_h("\x1f".join(t)) for t in s], dtype=np.uint64)


@lru_cache(maxsize=100_000)
def action_keys(action: str) -> np.ndarray:
    type_name, _ = parse_action(action)
    keys = ["type:" + type_name] + ["tok:" + tok for tok in action.split()]
    out = np.array([_h(k) for k in keys], dtype=np.uint64)
    out.flags.writeable = False
    return out


def hashed_pairs(rows: np.ndarray, keys: np.ndarray, seed: int, dim: int) -> np.ndarray:
    """Unique hashed indices of every (row, key) pair."""
    mix = (rows[:, None] ^ np.uint64(seed * 0x9E3779B1 & 0xFFFFFFFF)) * np.uint64(2654435761)
    mix = mix + keys[None, :] * np.uint64(40503)
    mix ^= mix >> np.uint64(29)
    return np.unique((mix % np.uint64(dim)).astype(np.int64).ravel())


@dataclass
class QConfig:
    alpha: float = 0.5
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.7
    episodes: int = 3000
    replay_capacity: int = 5000
    replay_batch: int = 4
    hash_dim: int = 2 ** 16
    hash_seed: int = 17
    seed: int = 0

    def epsilon(self, episode: int) -> float:
        horizon = max(1, int(self.episodes * self.eps_decay_frac))
        frac = min(1.0, episode / horizon)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass
class QPolicy:
    """Greedy policy of a linear Q-function over hashed indicator features."""

    weights: np.ndarray
    config: QConfig = field(default_factory=QConfig)
    history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, config: QConfig | None = None) -> "QPolicy":
        config = config or QConfig()
        return cls(np.zeros(config.hash_dim), config)

    def features(self, s: KnowledgeGraph, candidates: Sequence[str]) -> list[np.ndarray]:
        rows = triple_hashes(s)
        return [hashed_pairs(rows, action_keys(a), self.config.hash_seed, self.config.hash_dim)
                for a in candidates]

    def q_values(self, s: KnowledgeGraph, candidates: Sequence[str]) -> np.ndarray:
        return np.array([self.weights[f].sum() for f in self.features(s, candidates)])

    def __call__(self, s: KnowledgeGraph, candidates: Sequence[str]) -> str:
        q = self.q_values(s, candidates)
        order = sorted(range(len(candidates)), key=lambda i: (-q[i], candidates[i]))
        return candidates[order[0]]

    def td_update(self, feats: np.ndarray, reward: float, next_q_max: float | None) -> float:
        """One-step TD update; returns the TD error before the update."""
        target = reward if next_q_max is None else reward + self.config.gamma * next_q_max
        delta = target - self.weights[feats].sum()
        self.weights[feats] += self.config.alpha * delta / len(feats)
        return float(delta)

    def to_json(self) -> dict:
        nz = np.flatnonzero(self.weights)
        return {
            "kind": "linear-q",
            "config": asdict(self.config),
            "indices": nz.tolist(),
            "values": [float(v) for v in self.weights[nz]],
            "history": self.history,
        }

    @classmethod
    def from_json(cls, data: dict) -> "QPolicy":
        config = QConfig(**data["config"])
        w = np.zeros(config.hash_dim)
        w[np.asarray(data["indices"], dtype=np.int64)] = np.asarray(data["values"], dtype=float)
        return cls(w, config, list(data.get("history", [])))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "QPolicy":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def train_q(envs: Sequence[Env], config: QConfig | None = None, log_every: int = 100) -> QPolicy:
    if not envs:
        raise ValueError("train_q needs at least one environment")
    config = config or QConfig()
    policy = QPolicy.zeros(config)
    rng = np.random.default_rng(config.seed)
    replay: deque = deque(maxlen=config.replay_capacity or None)
    block: list[float] = []
    for ep in range(config.episodes):
        env = envs[ep % len(envs)]
        env.reset()
        eps = config.epsilon(ep)
        s = env.state.graph
        cands = env.action_candidates()
        feats = policy.features(s, cands)
        while True:
            if rng.random() < eps:
                i = int(rng.integers(len(cands)))
            else:
                q = np.array([policy.weights[f].sum() for f in feats])
                i = int(np.flatnonzero(q == q.max())[0])
            st, r, done = env.step(cands[i])
            if done:
                next_feats = None
                policy.td_update(feats[i], r, None)
            else:
                next_cands = env.action_candidates()
                next_feats = policy.features(st.graph, next_cands)
                policy.td_update(feats[i], r, max(policy.weights[f].sum() for f in next_feats))
            if config.replay_capacity:
                replay.append((feats[i], r, next_feats))
                for j in rng.integers(len(replay), size=min(config.replay_batch, len(replay))):
                    f0, r0, nf = replay[int(j)]
                    policy.td_update(f0, r0, None if nf is None else max(policy.weights[f].sum() for f in nf))
            if done:
                break
            cands, feats = next_cands, next_feats
        block.append(env.normalized_score())
        if (ep + 1) % log_every == 0 or ep + 1 == config.episodes:
            mean = float(np.mean(block))
            policy.history.append({"episode": ep + 1, "epsilon": round(eps, 4), "mean_score": mean})
            log.debug("episode %d eps %.3f mean score %.3f", ep + 1, eps, mean)
            block = []
    return policy


# ---------------------------------------------------------------- demos

@dataclass
class DemoDataset:
    records: list[LabeledDemoRecord]
    meta: dict

    def __len__(self) -> int:
        return len(self.records)


def collect_demos(policy: Policy, envs: Sequence[Env], epsilon: float, n: int, seed: int,
                  teacher: str = "oracle") -> DemoDataset:
    """Roll episodes, label every visited state with the policy's own choice.

    With probability ``epsilon`` a uniform candidate is executed instead, but
    the record keeps the policy action as its label.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if not envs:
        raise ValueError("collect_demos needs at least one environment")
    rng = np.random.default_rng(seed)
    records: list[LabeledDemoRecord] = []
    episode = 0
    while len(records) < n:
        env = envs[episode % len(envs)]
        env.reset()
        episode += 1
        while not env.state.done and len(records) < n:
            s = env.state.graph
            cands = env.action_candidates()
            label = policy(s, cands)
            records.append(LabeledDemoRecord.label(s, label, cands, teacher))
            executed = label if rng.random() >= epsilon else cands[int(rng.integers(len(cands)))]
            env.step(executed)
    meta = {
        "teacher": teacher,
        "epsilon": epsilon,
        "n": n,
        "seed": int(seed),
        "episodes": episode,
        "envs": [e.spec.to_json() for e in envs],
    }
    return DemoDataset(records, meta)


def make_teacher(kind: str, seed: int = 0, q_policy: QPolicy | None = None) -> Policy:
    if kind == "oracle":
        return oracle_policy
    if kind == "random":
        return RandomPolicy(seed)
    if kind == "q":
        if q_policy is None:
            raise ValueError("teacher 'q' needs a trained QPolicy")
        return q_policy
    raise ValueError(f"unknown teacher {kind!r}; expected oracle, q or random")
