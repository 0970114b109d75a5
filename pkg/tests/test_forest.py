import numpy as np
import pytest

from abcforest import cart, forest
from abcforest.errors import DegenerateInputError
from abcforest.forest import ForestConfig, VoteTally


def separable(n=400, seed=8, d=3, margin=2.0):
    rng = np.random.default_rng(seed)
    y = np.repeat([1, 2], n // 2)
    X = rng.standard_normal((n, d))
    X[:, 0] += np.where(y == 1, -margin, margin)
    return X, y


def test_config_defaults_and_validation():
    cfg = ForestConfig(seed=1).resolved(100, 9, cart.CLASSIFICATION)
    assert cfg.n_boot == 100 and cfg.n_try == 3 and cfg.min_leaf == 1
    cfg = ForestConfig(seed=1).resolved(100, 9, cart.REGRESSION)
    assert cfg.n_try == 3 and cfg.min_leaf == 5
    cfg = ForestConfig(seed=1).resolved(100, 2, cart.REGRESSION)
    assert cfg.n_try == 1  # floor(d/3) clamped to >= 1
    with pytest.raises(ValueError):
        ForestConfig(n_tree=0).resolved(10, 2, cart.CLASSIFICATION)
    with pytest.raises(ValueError):
        ForestConfig(n_boot=11).resolved(10, 2, cart.CLASSIFICATION)
    with pytest.raises(ValueError):
        ForestConfig(sampling="jackknife").resolved(10, 2, cart.CLASSIFICATION)


def test_single_tree_full_subsample_is_plain_cart():
    X, y = separable()
    cfg = ForestConfig(n_tree=1, n_boot=len(y), n_try=X.shape[1],
                       sampling="subsample", seed=4)
    f = forest.train(X, y, config=cfg)
    assert np.array_equal(f.classify_batch(X), y)


def test_separable_oob_error_small():
    X, y = separable()
    f = forest.train(X, y, config=ForestConfig(n_tree=100, seed=5))
    assert f.oob_error() <= 0.02


def test_thread_count_does_not_change_forest(tmp_path):
    X, y = separable(n=300)
    fa = forest.train(X, y, config=ForestConfig(n_tree=40, seed=6), threads=1)
    fb = forest.train(X, y, config=ForestConfig(n_tree=40, seed=6), threads=8)
    pa, pb = tmp_path / "a.txt", tmp_path / "b.txt"
    forest.save_forest(fa, pa)
    forest.save_forest(fb, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_vote_counts_and_composition():
    X, y = separable(n=200)
    f = forest.train(X, y, config=ForestConfig(n_tree=30, seed=7))
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.standard_normal(3)
        tally = f.vote(q)
        assert tally.total == 30
        brute = np.bincount([t.predict(q) - 1 for t in f.trees], minlength=2)
        assert np.array_equal(tally.counts, brute)


def test_vote_requires_classification():
    X, _ = separable(n=100)
    f = forest.train(X, np.zeros(100), task=cart.REGRESSION,
                     config=ForestConfig(n_tree=5, seed=1))
    with pytest.raises(ValueError, match="classification"):
        f.vote(np.zeros(3))


def test_single_class_training_votes_unanimous():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((50, 2))
    f = forest.train(X, np.ones(50, dtype=int), config=ForestConfig(n_tree=7, seed=2))
    tally = f.vote(rng.standard_normal(2))
    assert tally.counts[0] == 7


def test_classify_majority_and_tie_rule():
    assert VoteTally(np.array([300, 200])).argmax_model() == 1
    assert VoteTally(np.array([250, 250])).argmax_model() == 1
    assert VoteTally(np.array([10, 30, 30])).argmax_model() == 2
    X, y = separable(n=200)
    f = forest.train(X, y, config=ForestConfig(n_tree=25, seed=9))
    rng = np.random.default_rng(2)
    Q = rng.standard_normal((100, 3))
    votes = f.vote_batch(Q)
    assert np.array_equal(f.classify_batch(Q), np.argmax(votes, axis=1) + 1)
    for i in range(100):
        assert f.classify(Q[i]) == np.argmax(votes[i]) + 1


def test_regress_constant_and_composition():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((120, 2))
    f = forest.train(X, np.full(120, 2.5), task=cart.REGRESSION,
                     config=ForestConfig(n_tree=12, seed=3))
    q = rng.standard_normal(2)
    assert f.regress(q) == 2.5
    y01 = rng.integers(0, 2, 120).astype(float)
    f2 = forest.train(X, y01, task=cart.REGRESSION,
                      config=ForestConfig(n_tree=12, seed=4))
    for _ in range(30):
        q = rng.standard_normal(2)
        got = f2.regress(q)
        assert 0.0 <= got <= 1.0
        per_tree = np.array([t.predict(q) for t in f2.trees])
        assert got == np.sum(per_tree) / len(f2.trees)


def test_oob_predict_none_when_always_in_bag():
    X, y = separable(n=60)
    cfg = ForestConfig(n_tree=1, n_boot=60, sampling="subsample", seed=5)
    f = forest.train(X, y, config=cfg)
    assert f.oob_predict(0) is None
    with pytest.raises(DegenerateInputError):
        f.oob_error()


def test_oob_predict_matches_brute_force_filtering():
    X, y = separable(n=150)
    f = forest.train(X, y, config=ForestConfig(n_tree=40, seed=10))
    pred, defined = f.oob_predictions()
    for i in range(150):
        oob_trees = [b for b in range(40) if f.in_bag[b, i] == 0]
        if not oob_trees:
            assert not defined[i]
            assert f.oob_predict(i) is None
            continue
        votes = np.bincount([f.trees[b].predict(X[i]) - 1 for b in oob_trees],
                            minlength=2)
        assert f.oob_predict(i) == np.argmax(votes) + 1
        assert pred[i] == f.oob_predict(i)


def test_oob_predict_regression_matches_brute_force():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((100, 2))
    y = rng.standard_normal(100)
    f = forest.train(X, y, task=cart.REGRESSION, config=ForestConfig(n_tree=25, seed=6))
    for i in range(100):
        oob_trees = [b for b in range(25) if f.in_bag[b, i] == 0]
        if not oob_trees:
            assert f.oob_predict(i) is None
            continue
        vals = np.array([f.trees[b].predict(X[i]) for b in oob_trees])
        assert f.oob_predict(i) == np.sum(vals) / len(vals)


def test_record_outside_all_bags_equals_full_forest():
    X, y = separable(n=80)
    cfg = ForestConfig(n_tree=12, n_boot=20, sampling="subsample", seed=11)
    f = forest.train(X, y, config=cfg)
    never = np.flatnonzero((f.in_bag == 0).all(axis=0))
    assert never.size > 0
    for i in never[:10]:
        assert f.oob_predict(i) == f.classify(X[i])


def test_oob_error_no_signal_labels():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((5000, 3))
    y = rng.integers(1, 3, 5000)
    f = forest.train(X, y, config=ForestConfig(n_tree=100, seed=12), threads=2)
    assert abs(f.oob_error() - 0.5) < 0.03


def test_importance_unused_feature_zero():
    X, y = separable(n=200)
    X = np.hstack([X, np.full((200, 1), 7.0)])  # constant: never splittable
    f = forest.train(X, y, config=ForestConfig(n_tree=20, n_try=4, seed=13))
    imp = f.importance()
    assert np.all(imp.values >= 0)
    assert imp.values[3] == 0.0


def test_importance_noise_ranks_below_signal():
    outcomes = []
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        n = 300
        y = np.repeat([1, 2], n // 2)
        X = np.column_stack([
            np.where(y == 1, -1.0, 1.0) + 0.3 * rng.standard_normal(n),
            np.where(y == 1, -0.5, 0.5) + 0.3 * rng.standard_normal(n),
            rng.standard_normal(n),   # pure noise
        ])
        f = forest.train(X, y, config=ForestConfig(n_tree=30, seed=seed))
        r = f.importance().ranking
        outcomes.append(np.argwhere(r == 2)[0, 0])
    assert np.median(outcomes) == 2  # noise column ranks last


def test_error_vs_trees_holdout_and_oob():
    X, y = separable(n=300, seed=20)
    Xt, yt = separable(n=200, seed=21)
    f = forest.train(X, y, config=ForestConfig(n_tree=30, seed=14))
    curve = f.error_vs_trees(Xt, yt)
    assert curve.shape == (30,)
    first_tree_err = np.mean(f.trees[0].predict_batch(Xt) != yt)
    assert curve[0] == first_tree_err
    oob_curve = f.error_vs_trees()
    assert oob_curve.shape == (30,)
    assert oob_curve[-1] == f.oob_error()


def test_save_load_roundtrip(tmp_path):
    X, y = separable(n=150)
    f = forest.train(X, y, config=ForestConfig(n_tree=15, seed=15),
                     feature_names=("a", "b", "c"))
    p = tmp_path / "model.txt"
    forest.save_forest(f, p)
    g = forest.load_forest(p)
    assert g.feature_names == ("a", "b", "c")
    assert np.array_equal(g.in_bag, f.in_bag)
    rng = np.random.default_rng(6)
    Q = rng.standard_normal((50, 3))
    assert np.array_equal(f.vote_batch(Q), g.vote_batch(Q))
    p2 = tmp_path / "model2.txt"
    forest.save_forest(g, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not a forest\n")
    with pytest.raises(Exception, match="abcforest-forest"):
        forest.load_forest(p)


def test_regression_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    X = rng.standard_normal((80, 2))
    y = rng.standard_normal(80)
    f = forest.train(X, y, task=cart.REGRESSION, config=ForestConfig(n_tree=8, seed=16))
    p = tmp_path / "reg.txt"
    forest.save_forest(f, p)
    g = forest.load_forest(p)
    Q = rng.standard_normal((20, 2))
    assert np.array_equal(f.regress_batch(Q), g.regress_batch(Q))
