import json

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from taglabel.learn import RandomForestClassifier, Tree, majority_vote, oob_score, serialize_model
from taglabel.learn.forest import _best_split_on_feature, gini
from taglabel.acceptance import replay_forest, replay_oob


def _leaf(counts, bag=None):
    return Tree([-1], [0.0], [-1], [-1], [counts], bag)


def _brute_split(x, y, n_classes, min_leaf):
    """Scan every midpoint by hand; the first best wins."""
    order = sorted(range(len(x)), key=lambda i: x[i])
    xs = [x[i] for i in order]
    ys = [y[i] for i in order]
    best = None
    for k in range(1, len(xs)):
        if xs[k] == xs[k - 1] or k < min_leaf or len(xs) - k < min_leaf:
            continue
        left, right = ys[:k], ys[k:]
        imp = (len(left) * gini(np.bincount(left, minlength=n_classes)) + len(right) * gini(np.bincount(right, minlength=n_classes))) / len(xs)
        if best is None or imp < best[0] - 1e-12:
            best = (imp, (xs[k - 1] + xs[k]) / 2)
    return best


def test_gini():
    assert gini([5, 5]) == pytest.approx(0.5)
    assert gini([10, 0, 0]) == 0.0
    assert gini([0, 0]) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 12), st.integers(0, 2)), min_size=2, max_size=40), st.integers(1, 4))
def test_split_search_matches_brute_force(rows, min_leaf):
    x = np.array([float(a) for a, _ in rows])
    y = np.array([b for _, b in rows])
    got = _best_split_on_feature(x, np.eye(3, dtype=np.int64)[y], min_leaf)
    want = _brute_split(x.tolist(), y.tolist(), 3, min_leaf)
    if want is None:
        assert got is None
        return
    n = len(x)
    score, thr = got
    # score = sum nL_c^2/nL + sum nR_c^2/nR, so weighted impurity = 1 - score/n
    assert 1 - score / n == pytest.approx(want[0], abs=1e-9)
    left = y[x <= thr]
    right = y[x > thr]
    imp = (len(left) * gini(np.bincount(left, minlength=3)) + len(right) * gini(np.bincount(right, minlength=3))) / n
    assert imp == pytest.approx(want[0], abs=1e-9)


def test_single_leaf_majority():
    X = np.arange(10, dtype=float)[:, None]
    y = np.array([0, 1, 1, 1, 0, 1, 1, 0, 1, 1])
    rf = RandomForestClassifier(n_estimators=1, min_samples_split=1000, bootstrap=False).fit(X, y)
    tree = rf.estimators_[0]
    assert tree.n_nodes == 1
    assert (rf.predict(X) == 1).all()


def test_separable_toy_set_and_root_split():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, (20, 3))
    y = (X[:, 1] > 0.55).astype(int)
    rf = RandomForestClassifier(n_estimators=15, random_state=1).fit(X, y)
    assert (rf.predict(X) == y).mean() == 1.0
    stump = RandomForestClassifier(n_estimators=1, max_depth=1, bootstrap=False, max_features=None, min_samples_leaf=1, min_samples_split=2).fit(X, y)
    tree = stump.estimators_[0]
    want = min((_brute_split(X[:, f].tolist(), y.tolist(), 2, 1) + (f,) for f in range(3)), key=lambda t: t[0])
    assert tree.feature[0] == 1 == want[2]
    assert tree.threshold[0] == pytest.approx(want[1])


def test_vote_fractions_and_ties():
    rf = RandomForestClassifier().fit([[0.0], [1.0]], [0, 1])
    rf.estimators_ = [_leaf([5, 0]), _leaf([5, 0]), _leaf([0, 5])]
    assert rf.predict_proba([[0.3]])[0].tolist() == pytest.approx([2 / 3, 1 / 3])
    rf.estimators_ = [_leaf([5, 0]), _leaf([0, 5])]
    assert rf.predict([[0.3]])[0] == 0
    rf.estimators_ = [_leaf([1, 4])] * 4
    assert rf.predict_proba([[9.0]]).tolist() == [[0.0, 1.0]]
    assert majority_vote(np.array([[0, 1], [0, 0], [1, 1]]), 2).tolist() == [[2, 1], [1, 2]]


def test_oob_ignores_rows_seen_by_every_tree():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0, 0, 1])
    trees = [_leaf([3, 0], [1, 0, 2]), _leaf([0, 3], [2, 1, 0])]
    # row 0 is in both bags; rows 1 and 2 are each scored by one tree
    assert oob_score(trees, X, y, 2) == pytest.approx(1.0)
    # now only tree 1 scores row 1, and gets it wrong
    trees[0].bootstrap_counts = np.array([1, 1, 1])
    trees[1].bootstrap_counts = np.array([2, 0, 1])
    assert oob_score(trees, X, y, 2) == pytest.approx(0.0)


@pytest.fixture(scope="module")
def noisy():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(250, 5))
    y = ((X[:, 0] + 0.7 * X[:, 3] + rng.normal(scale=0.8, size=250)) > 0).astype(int) + (X[:, 1] > 1.2)
    return X, y


def test_predictions_match_serialized_replay(noisy):
    X, y = noisy
    rf = RandomForestClassifier(n_estimators=12, random_state=3).fit(X, y)
    doc = json.loads(serialize_model(rf))
    probe = np.random.default_rng(0).normal(size=(300, 5)) * 1.5
    assert list(rf.predict(probe)) == replay_forest(doc, probe.tolist())
    assert rf.oob_score_ == replay_oob(doc, X.tolist(), y.tolist())


def test_oob_mutation_detected(noisy):
    X, y = noisy
    rf = RandomForestClassifier(n_estimators=6, random_state=4).fit(X, y)
    before = rf.oob_score_from_bags(X, y)
    assert before == rf.oob_score_
    rf.estimators_[2].bootstrap_counts = np.zeros(len(X), dtype=np.int64)
    assert rf.oob_score_from_bags(X, y) != before


def test_bootstrap_records():
    X = np.random.default_rng(1).normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(int)
    rf = RandomForestClassifier(n_estimators=5).fit(X, y)
    for t in rf.estimators_:
        assert t.bootstrap_counts.sum() == 60
        assert t.value[0].sum() == 60


def test_deterministic_and_parallel_equal(noisy):
    X, y = noisy
    a = RandomForestClassifier(n_estimators=8, random_state=5).fit(X, y)
    b = RandomForestClassifier(n_estimators=8, random_state=5, n_jobs=2).fit(X, y)
    assert serialize_model(a) == serialize_model(b).replace('"n_jobs":2', '"n_jobs":1')
    c = RandomForestClassifier(n_estimators=8, random_state=6).fit(X, y)
    assert serialize_model(a) != serialize_model(c)


def test_string_labels_and_proba_rows(noisy):
    X, y = noisy
    labels = np.array(["a", "b", "c"])[y]
    rf = RandomForestClassifier(n_estimators=5).fit(X, labels)
    assert set(rf.predict(X)) <= {"a", "b", "c"}
    np.testing.assert_allclose(rf.predict_proba(X).sum(axis=1), 1.0)


def test_estimator_api(noisy):
    X, y = noisy
    rf = RandomForestClassifier(n_estimators=3, max_depth=2)
    assert clone(rf).get_params()["max_depth"] == 2
    with pytest.raises(NotFittedError):
        rf.predict(X)
    rf.fit(X, y)
    assert max(t.depth() for t in rf.estimators_) <= 2
    with pytest.raises(ValueError):
        rf.predict(X[:, :3])
    with pytest.raises(ValueError):
        RandomForestClassifier(min_samples_leaf=3, min_samples_split=4).fit(X, y)
