"""Procedurally generated cooking games whose states are knowledge graphs.

Four difficulty levels vary recipe size, number of rooms, cut/cook
requirements and the number of rewarded sub-tasks.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import vocab
from .grouping import current_room, parse_action, render_action
from .kg import KnowledgeGraph, Triple

STEP_LIMIT = 50


@dataclass(frozen=True)
class Level:
    recipe_size: int
    n_locations: int
    need_cut: bool
    need_cook: bool
    n_subtasks: int
    # distractor food items: fixed count for single-room levels, per-room range otherwise
    distractors: tuple[int, int]


LEVELS = {
    1: Level(1, 1, True, False, 4, (6, 8)),
    2: Level(1, 1, True, True, 5, (6, 8)),
    3: Level(1, 9, False, False, 3, (1, 3)),
    4: Level(3, 6, True, True, 11, (4, 6)),
}


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    difficulty: int
    seed: int

    def __post_init__(self):
        if self.difficulty not in LEVELS:
            raise ValueError(f"difficulty must be one of {sorted(LEVELS)}, got {self.difficulty!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit non-negative integer, got {self.seed!r}")

    @property
    def level(self) -> Level:
        return LEVELS[self.difficulty]

    @property
    def recipe_size(self) -> int:
        return self.level.recipe_size

    @property
    def n_locations(self) -> int:
        return self.level.n_locations

    @property
    def need_cut(self) -> bool:
        return self.level.need_cut

    @property
    def need_cook(self) -> bool:
        return self.level.need_cook

    @property
    def n_subtasks(self) -> int:
        return self.level.n_subtasks

    def to_json(self) -> dict:
        return {"difficulty": self.difficulty, "seed": int(self.seed)}

    @classmethod
    def from_json(cls, data) -> "EnvSpec":
        return cls(int(data["difficulty"]), int(data["seed"]))


@dataclass(frozen=True)
class GameState:
    graph: KnowledgeGraph
    steps_taken: int = 0
    points: int = 0
    done: bool = False
    failed: bool = False


@dataclass
class World:
    """Static facts about a generated game (never change during play)."""

    rooms: tuple[str, ...]
    kitchen: str
    containers: frozenset
    appliances: frozenset
    foods: frozenset
    recipe: tuple[str, ...]
    positions: dict = field(default_factory=dict)


def _layout(names: list[str], rng: np.random.Generator) -> tuple[dict, list]:
    """Grow a random tree of rooms on a grid; returns positions and links."""
    pos = {names[0]: (0, 0)}
    taken = {(0, 0): names[0]}
    links = []
    dirs = list(vocab.DIRECTIONS)
    for name in names[1:]:
        while True:
            anchor = names[int(rng.integers(len(pos)))]
            d = dirs[int(rng.integers(4))]
            dx, dy = vocab.OFFSETS[d]
            ax, ay = pos[anchor]
            cell = (ax + dx, ay + dy)
            if cell not in taken:
                break
        pos[name] = cell
        taken[cell] = name
        links.append((name, d, anchor))  # name lies in direction d of anchor
    return pos, links


def generate_world(spec: EnvSpec) -> tuple[World, KnowledgeGraph]:
    lvl = spec.level
    rng = np.random.default_rng([spec.difficulty, int(spec.seed)])

    others = [r for r in vocab.ROOMS if r not in ("kitchen", "backyard")]
    if lvl.n_locations == 1:
        rooms = ["kitchen"]
    else:
        extra = [others[i] for i in rng.permutation(len(others))[: lvl.n_locations - 2]]
        rooms = ["kitchen", "backyard"] + extra
    order = [rooms[i] for i in rng.permutation(len(rooms))]
    positions, links = _layout(order, rng)

    edges: set[Triple] = set()
    for a, d, b in links:
        edges.add(Triple(a, vocab.DIRECTION_RELATION[d], b))
        edges.add(Triple(b, vocab.DIRECTION_RELATION[vocab.OPPOSITE[d]], a))

    pool = [vocab.CONTAINERS[i] for i in rng.permutation(len(vocab.CONTAINERS))]
    containers_in: dict[str, list[str]] = {}
    for room in sorted(rooms):
        n = 3 if room == "kitchen" else int(rng.integers(1, 3))
        containers_in[room] = [pool.pop() for _ in range(n)]
        for c in containers_in[room]:
            edges.add(Triple(c, "in", room))
    all_containers = sorted(c for cs in containers_in.values() for c in cs)

    if lvl.n_locations == 1:
        appliance_room = {a: "kitchen" for a in vocab.APPLIANCES}
    else:
        appliance_room = {"stove": "kitchen", "oven": "kitchen", "bbq": "backyard"}
    for a, room in appliance_room.items():
        edges.add(Triple(a, "in", room))
    edges.add(Triple(vocab.COOKBOOK, "in", "kitchen"))

    foods = [vocab.INGREDIENTS[i] for i in rng.permutation(len(vocab.INGREDIENTS))]
    recipe = sorted(foods[: lvl.recipe_size])
    rest = foods[lvl.recipe_size:]
    if lvl.n_locations == 1:
        n_distract = int(rng.integers(lvl.distractors[0], lvl.distractors[1] + 1))
    else:
        n_distract = sum(int(rng.integers(lvl.distractors[0], lvl.distractors[1] + 1)) for _ in rooms)
    distractors = rest[:n_distract]

    for x in recipe:
        edges.add(Triple(x, "part_of", vocab.COOKBOOK))
        if lvl.need_cut:
            verb = vocab.CUT_VERBS[int(rng.integers(3))]
            edges.add(Triple(x, "needs", vocab.CUT_FORM[verb]))
        if lvl.need_cook:
            appl = vocab.APPLIANCES[int(rng.integers(3))]
            edges.add(Triple(x, "needs", vocab.COOK_FORM[appl]))
    for x in recipe + distractors:
        edges.add(Triple(x, "in", all_containers[int(rng.integers(len(all_containers)))]))
        edges.add(Triple(x, "is", vocab.UNCUT))
        edges.add(Triple(x, "is", vocab.RAW))
    if lvl.need_cut:
        edges.add(Triple(vocab.KNIFE, "in", all_containers[int(rng.integers(len(all_containers)))]))
        edges.add(Triple(vocab.KNIFE, "is", vocab.SHARP))

    start = "kitchen" if lvl.n_locations == 1 else rooms[int(rng.integers(len(rooms)))]
    edges.add(Triple(vocab.PLAYER, "at", start))

    world = World(
        rooms=tuple(sorted(rooms)),
        kitchen="kitchen",
        containers=frozenset(all_containers),
        appliances=frozenset(vocab.APPLIANCES),
        foods=frozenset(recipe + distractors),
        recipe=tuple(recipe),
        positions=positions,
    )
    return world, KnowledgeGraph(edges)


def _held(g: KnowledgeGraph) -> set[str]:
    return {e.head for e in g.by_relation("in") if e.tail == vocab.PLAYER}


def _status(g: KnowledgeGraph, x: str) -> set[str]:
    return {e.tail for e in g.by_relation("is") if e.head == x}


class Env:
    """A single cooking game; mutable, single-threaded."""

    def __init__(self, spec: EnvSpec, world: World | None = None, initial: KnowledgeGraph | None = None):
        self.spec = spec
        if world is None or initial is None:
            world, initial = generate_world(spec)
        self.world = world
        self.initial_graph = initial
        self.state = GameState(initial)
        self._candidates: tuple[GameState, list[str]] | None = None

    @property
    def n_subtasks(self) -> int:
        return self.spec.n_subtasks

    def reset(self) -> GameState:
        self.state = GameState(self.initial_graph)
        return self.state

    def action_candidates(self) -> list[str]:
        if self.state.done:
            raise InvalidActionError("episode is over; no candidates")
        if self._candidates is None or self._candidates[0] is not self.state:
            self._candidates = (self.state, candidates_for(self.state.graph, self.world))
        return list(self._candidates[1])

    def step(self, action: str) -> tuple[GameState, int, bool]:
        st = self.state
        if st.done:
            raise InvalidActionError("episode is over")
        if action not in self.action_candidates():
            raise InvalidActionError(f"{action!r} is not an available action")
        graph, reward, failed, finished = apply_action(st.graph, action, self.world)
        steps = st.steps_taken + 1
        done = failed or finished or steps >= STEP_LIMIT
        self.state = GameState(graph, steps, st.points + reward, done, failed)
        return self.state, reward, done

    def normalized_score(self) -> float:
        return self.state.points / self.n_subtasks

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "graph": self.state.graph.to_json(),
            "steps_taken": self.state.steps_taken,
            "points": self.state.points,
            "done": self.state.done,
            "failed": self.state.failed,
        }

    @classmethod
    def from_json(cls, data) -> "Env":
        env = cls(EnvSpec.from_json(data["spec"]))
        env.state = GameState(
            KnowledgeGraph.from_json(data["graph"]),
            int(data.get("steps_taken", 0)),
            int(data.get("points", 0)),
            bool(data.get("done", False)),
            bool(data.get("failed", False)),
        )
        return env

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def generate_env(spec: EnvSpec) -> Env:
    return Env(spec)


def candidates_for(g: KnowledgeGraph, world: World) -> list[str]:
    here = current_room(g)
    held = _held(g)
    out = []
    for e in g.by_relation("in"):
        if e.tail == here and e.head in world.containers:
            for item in g.by_relation("in"):
                if item.tail == e.head:
                    out.append(render_action("take", {"OBJ": item.head, "REC": e.head}))
    for d in vocab.DIRECTIONS:
        rel = vocab.DIRECTION_RELATION[d]
        if any(e.tail == here for e in g.by_relation(rel)):
            out.append(f"go {d}")
    appliances_here = sorted(e.head for e in g.by_relation("in") if e.tail == here and e.head in world.appliances)
    knife_held = vocab.KNIFE in held
    for x in sorted(held & world.foods):
        status = _status(g, x)
        if knife_held and vocab.UNCUT in status:
            out.extend(f"{v} {x} with knife" for v in vocab.CUT_VERBS)
        if vocab.RAW in status:
            out.extend(f"cook {x} with {a}" for a in appliances_here)
    in_kitchen = Triple(vocab.COOKBOOK, "in", here) in g
    recipe = [e.head for e in g.by_relation("part_of") if e.tail == vocab.COOKBOOK]
    if in_kitchen and recipe and all(x in held for x in recipe) and vocab.MEAL not in held:
        out.append("prepare meal")
    if vocab.MEAL in held:
        out.append("eat meal")
    return sorted(out)


def apply_action(g: KnowledgeGraph, action: str, world: World) -> tuple[KnowledgeGraph, int, bool, bool]:
    """Return (new graph, reward, failed, finished)."""
    type_name, b = parse_action(action)
    here = current_room(g)
    if type_name == "go":
        rel = vocab.DIRECTION_RELATION[b["DIR"]]
        dest = next(e.head for e in g.by_relation(rel) if e.tail == here)
        return g.with_edges(add=[(vocab.PLAYER, "at", dest)], remove=[(vocab.PLAYER, "at", here)]), 0, False, False
    if type_name == "take":
        x = b["OBJ"]
        g2 = g.with_edges(add=[(x, "in", vocab.PLAYER)], remove=[(x, "in", b["REC"])])
        reward = int(Triple(x, "part_of", vocab.COOKBOOK) in g)
        return g2, reward, False, False
    if type_name in ("cut", "cook"):
        x = b["OBJ"]
        if type_name == "cut":
            old, new = vocab.UNCUT, vocab.CUT_FORM[b["VERB"]]
        else:
            old, new = vocab.RAW, vocab.COOK_FORM[b["APPL"]]
        g2 = g.with_edges(add=[(x, "is", new)], remove=[(x, "is", old)])
        if Triple(x, "part_of", vocab.COOKBOOK) not in g:
            return g2, 0, False, False
        need = Triple(x, "needs", new)
        if need in g:
            return g2.with_edges(remove=[need]), 1, False, False
        return g2, 0, True, False
    if type_name == "prepare":
        recipe = {e.head for e in g.by_relation("part_of") if e.tail == vocab.COOKBOOK}
        if any(e.head in recipe for e in g.by_relation("needs")):
            return g, 0, True, False
        g2 = KnowledgeGraph(e for e in g if e.head not in recipe and e.tail not in recipe)
        return g2.with_edges(add=[(vocab.MEAL, "in", vocab.PLAYER)]), 1, False, False
    # eat
    return g.with_edges(remove=[(vocab.MEAL, "in", vocab.PLAYER)]), 1, False, True


def env_set(difficulty: int, seeds: Iterable[int]) -> list[Env]:
    return [Env(EnvSpec(difficulty, int(s))) for s in seeds]


def split_seeds(master_seed: int, difficulty: int, n_train: int, n_test: int) -> tuple[list[int], list[int]]:
    """Derive disjoint train/test environment seeds from a master seed."""
    ss = np.random.SeedSequence([int(master_seed), difficulty, 0xE7])
    raw = ss.generate_state(2 * (n_train + n_test) + 8, dtype=np.uint64).tolist()
    seen: list[int] = []
    for s in raw:
        s = int(s)
        if s not in seen:
            seen.append(s)
    return seen[:n_train], seen[n_train:n_train + n_test]


def manifest(master_seed: int, difficulty: int, n_train: int, n_test: int) -> dict:
    train, test = split_seeds(master_seed, difficulty, n_train, n_test)
    return {
        "difficulty": difficulty,
        "master_seed": int(master_seed),
        "train": [EnvSpec(difficulty, s).to_json() for s in train],
        "test": [EnvSpec(difficulty, s).to_json() for s in test],
    }


def envs_from_manifest(data: dict, split: str) -> list[Env]:
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    return [Env(EnvSpec.from_json(s)) for s in data[split]]


def with_state(env: Env, graph: KnowledgeGraph, **counters) -> Env:
    """Copy of ``env`` positioned at an arbitrary state (for tests and explain)."""
    out = Env(env.spec, env.world, env.initial_graph)
    out.state = replace(GameState(graph), **counters)
    return out
