import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lim.gbt import (
    DegenerateLabels,
    EmptyDataset,
    GbtHyperparams,
    GbtModel,
    NonFiniteFeature,
    cross_entropy,
    find_best_split,
    fit,
    softmax,
    staged_scores,
)
from oracles import brute_best_split, random_dataset, replay_and_check

FOUR_X = np.array([[1.0], [2.0], [10.0], [11.0]])
FOUR_Y = ["A", "A", "B", "B"]
# min_child_weight 0: each child of the 4-point example carries hessian 0.5
FOUR_PARAMS = GbtHyperparams(num_rounds=1, max_depth=1, learning_rate=0.3, l2_lambda=1.0, min_child_weight=0.0)


def sorted_inputs(X, g, h):
    order = np.argsort(X, axis=0, kind="stable").T
    cols = np.arange(X.shape[1])[:, None]
    return X[order, cols], np.asarray(g)[order], np.asarray(h)[order]


def test_defaults_are_vanilla():
    p = GbtHyperparams()
    assert (p.num_rounds, p.max_depth, p.learning_rate, p.l2_lambda, p.gamma, p.min_child_weight, p.seed) == (
        100, 6, 0.3, 1.0, 0.0, 1.0, 42,
    )


def test_zero_rounds_is_uniform():
    model = fit(np.random.default_rng(0).normal(size=(20, 3)), list("abcd") * 5, GbtHyperparams(num_rounds=0))
    proba = model.predict_proba(np.random.default_rng(1).normal(size=(7, 3)))
    assert np.allclose(proba, 0.25)
    assert model.predict(np.zeros((3, 3))) == ["a", "a", "a"]


def test_empty_ensemble_ten_classes():
    model = GbtModel(label_map=[f"c{i}" for i in range(10)], trees=[], hyperparams=GbtHyperparams(num_rounds=0))
    assert np.allclose(model.predict_proba(np.zeros((2, 15))), 0.1)
    assert model.predict(np.zeros((1, 15))) == ["c0"]


def test_four_point_example():
    model = fit(FOUR_X, FOUR_Y, FOUR_PARAMS)
    tree_a, tree_b = model.tree(0, 0), model.tree(0, 1)
    assert tree_a.feature[0] == 0 and tree_a.threshold[0] == 6.0
    left, right = tree_a.left[0], tree_a.right[0]
    assert tree_a.weight[left] == pytest.approx(0.2, abs=1e-12)
    assert tree_a.weight[right] == pytest.approx(-0.2, abs=1e-12)
    assert tree_b.threshold[0] == 6.0
    assert tree_b.weight[tree_b.left[0]] == pytest.approx(-0.2, abs=1e-12)
    assert tree_b.weight[tree_b.right[0]] == pytest.approx(0.2, abs=1e-12)
    assert model.predict(np.array([[1.0]])) == ["A"]
    assert model.predict(FOUR_X) == FOUR_Y


def test_four_point_split_search():
    p = np.full(4, 0.5)
    g = p - np.array([1, 1, 0, 0])
    split = find_best_split(*sorted_inputs(FOUR_X, g, p * (1 - p)), FOUR_PARAMS)
    assert (split.feature, split.threshold) == (0, 6.0)
    assert split.gain == pytest.approx(2 / 3, abs=1e-12)


def test_identical_features_no_split():
    X = np.ones((6, 2))
    g = np.array([-1, 1, -1, 1, -1, 1.0])
    assert find_best_split(*sorted_inputs(X, g, np.ones(6)), GbtHyperparams()) is None


def test_gain_vanishes_as_lambda_grows():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 3))
    g = rng.normal(size=30)
    inputs = sorted_inputs(X, g, np.ones(30))
    gains = [find_best_split(*inputs, GbtHyperparams(l2_lambda=lam)).gain for lam in (1.0, 1e3, 1e6)]
    assert gains[0] > gains[1] > gains[2] and gains[2] < 1e-4
    assert find_best_split(*inputs, GbtHyperparams(l2_lambda=np.inf)) is None


def test_min_child_weight_blocks_small_children():
    p = np.full(4, 0.5)
    g = p - np.array([1, 1, 0, 0])
    assert find_best_split(*sorted_inputs(FOUR_X, g, p * (1 - p)), GbtHyperparams()) is None


def test_tie_break_lowest_feature_then_threshold():
    # two identical columns: equal gains everywhere, feature 0 must win
    X = np.array([[1, 1], [2, 2], [3, 3], [4, 4.0]])
    g = np.array([-1, -1, 1, 1.0])
    split = find_best_split(*sorted_inputs(X, g, np.ones(4)), GbtHyperparams(min_child_weight=0))
    assert split.feature == 0
    # symmetric gradients: splits at 1.5 and 3.5 tie; the lower threshold wins
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    g = np.array([-1.0, 0.0, 0.0, 1.0])
    best, cands = brute_best_split(X, g, np.ones(4), 1.0, 0.0, 0.0)
    split = find_best_split(*sorted_inputs(X, g, np.ones(4)), GbtHyperparams(min_child_weight=0))
    assert split.threshold == best[1]


def test_perfect_separation_reaches_full_training_accuracy():
    rng = np.random.default_rng(5)
    y = rng.integers(0, 3, 90)
    X = np.column_stack([rng.normal(size=90), y * 10 + rng.uniform(0, 1, 90), rng.normal(size=90)])
    model = fit(X, [f"k{v}" for v in y], GbtHyperparams(num_rounds=20))
    assert model.predict(X) == [f"k{v}" for v in y]
    # the first class tree splits on the separating feature
    assert model.tree(0, 0).feature[0] == 1


def test_errors():
    with pytest.raises(DegenerateLabels):
        fit(np.zeros((3, 2)), ["a"] * 3)
    with pytest.raises(EmptyDataset):
        fit(np.zeros((0, 2)), [])
    with pytest.raises(NonFiniteFeature):
        fit(np.array([[0.0], [np.nan]]), ["a", "b"])
    with pytest.raises(ValueError):
        GbtHyperparams(learning_rate=0)


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 4))
    model = fit(X, rng.choice(list("abcde"), 200).tolist(), GbtHyperparams(num_rounds=10))
    proba = model.predict_proba(rng.normal(scale=5, size=(1000, 4)))
    assert np.all(proba >= 0)
    assert np.max(np.abs(proba.sum(axis=1) - 1)) <= 1e-9


def test_argmax_invariant_to_monotone_score_transform():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(100, 4))
    assert (np.argmax(softmax(s), 1) == np.argmax(np.exp(3 * s + 1), 1)).all()


def test_oracle_equivalence_sample():
    rng = np.random.default_rng(2024)
    for _ in range(15):
        X, y = random_dataset(rng)
        params = GbtHyperparams(num_rounds=3, max_depth=3, min_child_weight=float(rng.choice([0.0, 0.1, 1.0])),
                                gamma=float(rng.choice([0.0, 0.05])), l2_lambda=float(rng.choice([0.0, 1.0, 2.5])))
        model = fit(X, [str(v) for v in y], params)
        replay_and_check(model, X, y)


def test_determinism_and_parallel_schedule():
    rng = np.random.default_rng(7)
    X, y = random_dataset(rng, n=120, F=4, K=4)
    labels = [str(v) for v in y]
    params = GbtHyperparams(num_rounds=8)
    a = fit(X, labels, params).to_dict()
    assert a == fit(X, labels, params).to_dict()
    assert a == fit(X, labels, params, n_jobs=3).to_dict()


def test_order_preserving_feature_transform_keeps_predictions():
    rng = np.random.default_rng(11)
    X, y = random_dataset(rng, n=150, F=3, K=3)
    labels = [str(v) for v in y]
    Xt = np.column_stack([np.exp(X[:, 0] / 3), X[:, 1] ** 3, 7 * X[:, 2] - 2])
    m1 = fit(X, labels, GbtHyperparams(num_rounds=10))
    m2 = fit(Xt, labels, GbtHyperparams(num_rounds=10))
    assert m1.predict(X) == m2.predict(Xt)
    for t1, t2 in zip(m1.trees, m2.trees):
        assert (t1.feature == t2.feature).all()
        assert np.allclose(t1.weight, t2.weight, atol=1e-12)
        assert (t1.apply(X) == t2.apply(Xt)).all()


def test_training_loss_non_increasing():
    from lim.synth import graded_profiles

    rng = np.random.default_rng(3)
    for profile_spacing in (20.0, 80.0):
        profiles = graded_profiles(4, length_spacing=profile_spacing)
        y = rng.integers(0, 4, 300)
        X = np.column_stack([
            rng.normal([profiles[k].length_mean for k in y], 40) for _ in range(5)
        ] + [rng.normal([profiles[k].iat_mean_us for k in y], 1000) for _ in range(5)])
        model = fit(X, [str(v) for v in y], GbtHyperparams(num_rounds=30))
        losses = [cross_entropy(s, y) for s in staged_scores(model, X)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_save_load_bit_identical(tmp_path):
    rng = np.random.default_rng(9)
    X, y = random_dataset(rng, n=200, F=4, K=3)
    X = X + rng.uniform(0, 1e-3, X.shape)
    model = fit(X, [str(v) for v in y], GbtHyperparams(num_rounds=15))
    path = tmp_path / "model.json"
    model.save(path)
    loaded = GbtModel.load(path)
    probe = rng.normal(size=(500, 4)) * 3
    assert np.array_equal(model.predict_proba(probe), loaded.predict_proba(probe))
    assert loaded.to_dict() == model.to_dict()
    model.save(tmp_path / "again.json")
    loaded.save(tmp_path / "reloaded.json")
    assert (tmp_path / "again.json").read_bytes() == (tmp_path / "reloaded.json").read_bytes()


def test_model_file_schema(tmp_path):
    import json

    model = fit(FOUR_X, FOUR_Y, FOUR_PARAMS)
    model.save(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["format_version"] == 1
    assert doc["label_map"] == ["A", "B"]
    assert doc["base_score"] == 0.0
    assert [(t["round"], t["class_index"]) for t in doc["trees"]] == [(0, 0), (0, 1)]
    root, *leaves = doc["trees"][0]["nodes"]
    assert root == {"id": 0, "feature": 0, "threshold": 6.0, "left": 1, "right": 2}
    assert all(set(n) == {"id", "weight"} for n in leaves)


def test_trees_count_and_depth():
    rng = np.random.default_rng(4)
    X, y = random_dataset(rng, n=64, F=4, K=3)
    model = fit(X, [str(v) for v in y], GbtHyperparams(num_rounds=5, max_depth=2, min_child_weight=0))
    assert len(model.trees) == 5 * 3
    assert max(t.depth() for t in model.trees) <= 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_matches_brute_force_property(seed):
    rng = np.random.default_rng(seed)
    n, F = int(rng.integers(2, 40)), int(rng.integers(1, 4))
    X = np.round(rng.normal(size=(n, F)), 1)
    g = rng.normal(size=n)
    h = rng.uniform(0.01, 0.25, n)
    params = GbtHyperparams(min_child_weight=0.1, l2_lambda=0.5)
    got = find_best_split(*sorted_inputs(X, g, h), params)
    best, _ = brute_best_split(X, g, h, 0.5, 0.0, 0.1)
    if best is None:
        assert got is None
    else:
        assert (got.feature, got.threshold) == best[:2]
        assert abs(got.gain - best[2]) <= 1e-9
