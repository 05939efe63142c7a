import pytest

from kghybrid import cookworld, miner, pruner, teacher
from kghybrid.grouping import LabeledDemoRecord
from kghybrid.kg import KnowledgeGraph

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def hand_records() -> list[LabeledDemoRecord]:
    rows = [
        ("slice potato with knife",
         [("potato", "in", "player"), ("potato", "needs", "sliced"), ("potato", "is", "uncut"),
          ("stove", "in", "kitchen")]),
        ("dice apple with knife",
         [("apple", "in", "player"), ("apple", "needs", "diced"), ("apple", "is", "uncut")]),
        ("take potato from fridge",
         [("potato", "in", "fridge"), ("potato", "needs", "sliced"), ("stove", "in", "kitchen")]),
        ("take apple from counter",
         [("apple", "in", "counter"), ("apple", "needs", "diced"), ("stove", "in", "kitchen")]),
    ]
    return [LabeledDemoRecord.label(KnowledgeGraph(edges), a, [a]) for a, edges in rows]


@pytest.fixture
def hand_dataset():
    return hand_records()


@pytest.fixture(scope="session")
def d1_pipeline():
    """Small d1 pipeline shared by unit tests: envs, oracle demos, rules, pruner."""
    train_seeds, test_seeds = cookworld.split_seeds(0, 1, 10, 10)
    train = cookworld.env_set(1, train_seeds)
    test = cookworld.env_set(1, test_seeds)
    demos = teacher.collect_demos(teacher.oracle_policy, train, 0.2, 5000, 0)
    rules = miner.mine_rules(demos.records, 0.3)
    model = pruner.train_pruner(demos.records)
    return {"train": train, "test": test, "demos": demos, "rules": rules, "pruner": model}
