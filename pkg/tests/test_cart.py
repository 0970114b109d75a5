import numpy as np
import pytest

from abcforest import cart


def brute_force_best_split(X, y, feats, task="classification", n_classes=None):
    """Exhaustive enumeration over every (feature, midpoint) pair.

    Recounts both children from scratch per candidate, with the same
    score formula as the production kernel, so agreement is exact.
    """
    if task == "classification" and n_classes is None:
        n_classes = int(np.max(y))
    best = None
    for j in sorted(feats):
        vs = np.unique(X[:, j])
        for lo, hi in zip(vs[:-1], vs[1:]):
            t = 0.5 * (lo + hi)
            if t <= lo:
                t = hi
            left = X[:, j] < t
            score = 0.0
            for mask in (left, ~left):
                n = int(mask.sum())
                if task == "classification":
                    s2 = 0
                    for c in range(1, n_classes + 1):
                        cc = int(np.sum(y[mask] == c))
                        s2 += cc * cc
                    score += n - s2 / n
                else:
                    s = float(np.sum(y[mask]))
                    score += float(np.sum(y[mask] ** 2)) - (s * s) / n
            if best is None or score < best[2]:
                best = (j, t, score)
    return best


def predict_by_node_walk(tree, x):
    """Independent traversal oracle over the linked TreeNode view."""
    node = tree.root
    while not node.is_leaf:
        node = node.left if x[node.rule.feature] < node.rule.threshold else node.right
    return node.value


def test_gini_values():
    assert cart.gini([1.0, 0.0]) == 0.0
    assert cart.gini([0.5, 0.5]) == 0.5
    assert cart.gini([0.75, 0.25]) == 0.375


def test_gini_rejects_unnormalized():
    with pytest.raises(ValueError):
        cart.gini([0.5, 0.6])
    with pytest.raises(ValueError):
        cart.gini([1.5, -0.5])


def test_best_split_separable_pair():
    X = np.array([[0.0], [1.0]])
    y = np.array([1, 2])
    rule, score = cart.best_split(X, y, [0])
    assert rule.feature == 0
    assert 0.0 < rule.threshold <= 1.0
    assert score == 0.0


def test_best_split_constant_feature_returns_none():
    X = np.array([[1.0], [1.0], [1.0]])
    y = np.array([1, 2, 1])
    assert cart.best_split(X, y, [0]) is None


def test_best_split_empty_candidates_rejected():
    with pytest.raises(ValueError):
        cart.best_split(np.zeros((2, 1)), np.array([1, 2]), [])


def test_best_split_matches_brute_force_classification():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n = int(rng.integers(2, 51))
        X = np.round(rng.standard_normal((n, 2)), 2)  # force some value ties
        y = rng.integers(1, 4, n)
        got = cart.best_split(X, y, [0, 1], n_classes=3)
        want = brute_force_best_split(X, y, [0, 1], n_classes=3)
        if want is None:
            assert got is None
            continue
        rule, score = got
        assert (rule.feature, rule.threshold, score) == want


def test_best_split_matches_brute_force_regression():
    rng = np.random.default_rng(1)
    for trial in range(40):
        n = int(rng.integers(2, 51))
        X = np.round(rng.standard_normal((n, 2)), 2)
        # 0/1 responses make every partial sum exact in floating point
        y = rng.integers(0, 2, n).astype(np.float64)
        got = cart.best_split(X, y, [0, 1], task=cart.REGRESSION)
        want = brute_force_best_split(X, y, [0, 1], task="regression")
        if want is None:
            assert got is None
            continue
        rule, score = got
        assert (rule.feature, rule.threshold) == (want[0], want[1])
        assert score == pytest.approx(want[2], abs=1e-12)


def test_grow_single_record_is_leaf():
    t = cart.grow(np.array([[3.0, 1.0]]), np.array([2]), n_classes=2, seed=0)
    assert t.n_nodes == 1
    assert t.predict([0.0, 0.0]) == 2


def test_grow_separable_reaches_zero_training_error():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((300, 2))
    y = np.where(X[:, 0] + 0.3 * X[:, 1] > 0, 2, 1)
    t = cart.grow(X, y, n_try=2, seed=3)
    assert np.array_equal(t.predict_batch(X), y)


def test_grow_purity_on_continuous_data():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((500, 3))
    y = rng.integers(1, 3, 500)
    t = cart.grow(X, y, n_try=1, seed=4)
    # labels are noise, features continuous: purity stopping still gives
    # zero training error because every leaf is grown pure
    assert np.array_equal(t.predict_batch(X), y)


def test_grow_degenerate_duplicates_majority_leaf():
    X = np.ones((5, 2))
    y = np.array([1, 2, 2, 1, 1])
    t = cart.grow(X, y, n_classes=2, seed=5)
    assert t.n_nodes == 1
    assert t.predict([1.0, 1.0]) == 1  # majority
    y_tie = np.array([2, 1, 2, 1])
    t2 = cart.grow(np.ones((4, 2)), y_tie, n_classes=2, seed=6)
    assert t2.predict([1.0, 1.0]) == 1  # tie toward the lowest index


def test_predict_depth_one_routing():
    X = np.array([[0.0, 5.0], [1.0, -5.0]])
    y = np.array([1, 2])
    t = cart.grow(X, y, n_try=1, seed=1)  # single split separates them
    assert t.n_nodes == 3
    left_label = t.predict([t.threshold[0] - 0.1] * 2)
    right_label = t.predict([t.threshold[0] + 0.1] * 2)
    assert {left_label, right_label} == {1, 2}


def test_predict_rejects_bad_length():
    t = cart.grow(np.zeros((2, 3)), np.array([1, 2]), seed=0)
    with pytest.raises(ValueError):
        t.predict([1.0, 2.0])


def test_predict_matches_recursive_oracle():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((400, 4))
    y = rng.integers(1, 4, 400)
    t = cart.grow(X, y, n_try=2, seed=7, n_classes=3)
    Q = rng.standard_normal((1000, 4))
    batch = t.predict_batch(Q)
    for i in range(1000):
        assert batch[i] == predict_by_node_walk(t, Q[i])


def test_grow_deterministic_and_order_independent():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((200, 3))
    y = rng.integers(1, 3, 200)
    t1 = cart.grow(X, y, n_try=2, seed=42)
    t2 = cart.grow(X, y, n_try=2, seed=42)
    for field in ("feature", "threshold", "left", "right", "value"):
        assert np.array_equal(getattr(t1, field), getattr(t2, field))
    # permuting the records leaves the tree unchanged (distinct values)
    perm = rng.permutation(200)
    t3 = cart.grow(X[perm], y[perm], n_try=2, seed=42)
    for field in ("feature", "threshold", "left", "right", "value"):
        assert np.array_equal(getattr(t1, field), getattr(t3, field))


def test_regression_leaf_size_and_mean():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((300, 2))
    y = rng.standard_normal(300)
    t = cart.grow(X, y, task=cart.REGRESSION, n_try=2, seed=8)
    leaves = np.flatnonzero(t.feature < 0)
    assert np.all(t.count[leaves] <= 5)
    # leaf value equals the mean response of the records routed to it
    leaf_of = np.empty(300, dtype=int)
    for i in range(300):
        node = 0
        while t.feature[node] >= 0:
            node = (t.left[node] if X[i, t.feature[node]] < t.threshold[node]
                    else t.right[node])
        leaf_of[i] = node
    for leaf in np.unique(leaf_of):
        members = y[leaf_of == leaf]
        assert t.value[leaf] == pytest.approx(members.mean(), abs=1e-12)
        assert len(members) == t.count[leaf]


def test_dump_mentions_rules():
    t = cart.grow(np.array([[0.0], [1.0]]), np.array([1, 2]), seed=0)
    text = t.dump()
    assert "if x[0] <" in text and text.count("leaf") == 2
