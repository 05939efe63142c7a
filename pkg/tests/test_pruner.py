import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kghybrid import pruner, vocab
from kghybrid.kg import KnowledgeGraph

from sampling import rename_entities, states_with_candidates

NAMES = dict(zip(pruner.FEATURE_NAMES, range(pruner.DIM)))


def test_empty_graph_is_bias_only():
    x = pruner.featurize(KnowledgeGraph())
    assert x[-1] == 1.0 and not x[:-1].any()


def test_conjunction_feature_by_enumeration():
    g = KnowledgeGraph([("potato", "in", "player"), ("potato", "needs", "diced")])
    x = pruner.featurize(g)
    assert x[NAMES["held_needs[diced]"]] == 1.0
    assert x[NAMES["held_needs[sliced]"]] == 0.0
    # the two atoms must share the variable
    g = KnowledgeGraph([("potato", "in", "player"), ("apple", "needs", "diced")])
    assert pruner.featurize(g)[NAMES["held_needs[diced]"]] == 0.0


def test_indicator_versus_count():
    g = KnowledgeGraph([("potato", "in", "player"), ("apple", "in", "player")])
    x = pruner.featurize(g)
    assert x[NAMES["held(?x)"]] == 1.0
    assert x[NAMES["count[in]"]] == 2.0


def test_chain_feature():
    g = KnowledgeGraph([("potato", "part_of", "cookbook"), ("potato", "in", "fridge"), ("fridge", "in", "kitchen"),
                        ("player", "at", "kitchen")])
    x = pruner.featurize(g)
    assert x[NAMES["recipe_here"]] == 1.0
    g2 = g.with_edges(remove=[("player", "at", "kitchen")], add=[("player", "at", "hall")])
    assert pruner.featurize(g2)[NAMES["recipe_here"]] == 0.0
    assert pruner.featurize(g2)[NAMES["recipe_not_held"]] == 1.0


def test_features_nonnegative_and_fixed_size(d1_pipeline):
    for r in d1_pipeline["demos"].records[:200]:
        x = pruner.featurize(r.state)
        assert x.shape == (pruner.DIM,)
        assert (x >= 0).all()


def test_uniform_model_loss_is_log_k():
    X = np.random.default_rng(0).random((50, pruner.DIM))
    y = np.arange(50) % vocab.K
    loss, _ = pruner.loss_and_grad(np.zeros((vocab.K, pruner.DIM)), X, y, 0.0)
    assert abs(loss - math.log(6)) < 1e-12
    assert abs(math.log(6) - 1.7918) < 1e-4


def test_uniform_prediction_ties_to_first_type():
    t, p = pruner.predict_type(pruner.PrunerModel.uniform(), KnowledgeGraph([("a", "in", "b")]))
    assert t == "go"
    assert np.allclose(p, 1 / 6)


def _finite_difference_error(seed: int) -> float:
    rng = np.random.default_rng(seed)
    X = rng.random((10, 12))
    y = rng.integers(vocab.K, size=10)
    W = rng.normal(size=(vocab.K, 12))
    _, g = pruner.loss_and_grad(W, X, y, 1e-2)
    num = np.zeros_like(W)
    h = 1e-6
    for idx in np.ndindex(*W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        num[idx] = (pruner.loss_and_grad(Wp, X, y, 1e-2)[0] - pruner.loss_and_grad(Wm, X, y, 1e-2)[0]) / (2 * h)
    return float(np.linalg.norm(g - num) / max(np.linalg.norm(g), np.linalg.norm(num)))


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    assert _finite_difference_error(seed) < 1e-5


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6))
def test_softmax_normalizes(z):
    p = pruner.softmax(np.array(z))
    assert abs(p.sum() - 1.0) < 1e-9
    assert (p >= 0).all()


def test_single_class_dataset_goes_to_zero_loss():
    X = np.random.default_rng(1).random((40, pruner.DIM))
    y = np.full(40, 3)
    m = pruner.fit(X, y, pruner.PrunerConfig(epochs=60))
    assert m.train_loss < 0.05


def test_loss_decreases_with_small_learning_rate(d1_pipeline):
    m = pruner.train_pruner(d1_pipeline["demos"].records[:1000],
                            pruner.PrunerConfig(epochs=10, learning_rate=0.05, l2=0.0))
    assert all(b <= a + 1e-12 for a, b in zip(m.loss_history, m.loss_history[1:]))


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        pruner.train_pruner([])


def test_counts_off_by_default_and_switchable(d1_pipeline):
    m = d1_pipeline["pruner"]
    assert not m.config.use_counts
    assert not m.weights[:, pruner.COUNT_COLUMNS].any()
    m2 = pruner.train_pruner(d1_pipeline["demos"].records[:500], pruner.PrunerConfig(epochs=2, use_counts=True))
    assert m2.weights[:, pruner.COUNT_COLUMNS].any()


def test_model_round_trip(tmp_path, d1_pipeline):
    m = d1_pipeline["pruner"]
    m.save(tmp_path / "p.json")
    back = pruner.PrunerModel.load(tmp_path / "p.json")
    s = d1_pipeline["demos"].records[7].state
    assert np.array_equal(back.distribution(s), m.distribution(s))


def test_same_seed_same_weights(d1_pipeline):
    recs = d1_pipeline["demos"].records[:300]
    a = pruner.train_pruner(recs, pruner.PrunerConfig(epochs=3))
    b = pruner.train_pruner(recs, pruner.PrunerConfig(epochs=3))
    assert np.array_equal(a.weights, b.weights)


def test_renaming_invariance(d1_pipeline):
    m = d1_pipeline["pruner"]
    for i, s in enumerate((g for g, _ in states_with_candidates(100, 3, oracle_prob=0.7))):
        r = rename_entities(s, i)
        assert r != s
        assert np.array_equal(pruner.featurize(s), pruner.featurize(r))
        assert pruner.predict_type(m, s)[0] == pruner.predict_type(m, r)[0]
