"""Bagged CART random forest with hard majority voting and out-of-bag scoring."""

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._seeding import DEFAULT_SEED

LEAF = -1


class Tree:
    """Flat array representation of one fitted decision tree.

    ``value[i]`` holds the class counts of the bootstrap rows that reached
    node ``i``. Rows go left when ``x[feature] <= threshold``.
    """

    def __init__(self, feature, threshold, left, right, value, bootstrap_counts=None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.int64)
        self.bootstrap_counts = None if bootstrap_counts is None else np.asarray(bootstrap_counts, dtype=np.int64)

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active[rows] = self.feature[node[rows]] != LEAF
        return node

    def predict_index(self, X):
        # argmax picks the lowest class index on ties
        return np.argmax(self.value[self.apply(X)], axis=1)

    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_dict(self):
        d = {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }
        if self.bootstrap_counts is not None:
            d["bootstrap_counts"] = self.bootstrap_counts.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"], d.get("bootstrap_counts"))


def gini(counts):
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _best_split_on_feature(x, y_onehot, min_samples_leaf):
    """Best Gini split for one feature.

    Returns ``(score, threshold)`` with ``score = sum_c nL_c^2/nL + sum_c nR_c^2/nR``
    (larger is purer), or ``None`` when no admissible threshold exists.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(xs)
    if n < 2:
        return None
    left = np.cumsum(y_onehot[order], axis=0)[:-1]
    total = y_onehot.sum(axis=0)
    n_left = np.arange(1, n, dtype=float)
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
    if not valid.any():
        return None
    right = total - left
    score = (left * left).sum(axis=1) / n_left + (right * right).sum(axis=1) / (n - n_left)
    score = np.where(valid, score, -np.inf)
    i = int(np.argmax(score))
    thr = 0.5 * (xs[i] + xs[i + 1])
    if thr >= xs[i + 1]:
        thr = xs[i]
    return float(score[i]), float(thr)


def build_tree(X, y, n_classes, max_features, min_samples_split, min_samples_leaf, max_depth, rng):
    """Grow one CART tree on ``(X, y)``; rows may repeat (bootstrap sample)."""
    n_features = X.shape[1]
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(counts):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(counts)
        return len(feature) - 1

    root_counts = onehot.sum(axis=0)
    stack = [(new_node(root_counts), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        n = len(idx)
        if (
            n < min_samples_split
            or n < 2 * min_samples_leaf
            or np.count_nonzero(counts) <= 1
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        parent_score = float((counts * counts).sum()) / n
        best = None
        visited = 0
        for f in rng.permutation(n_features):
            if visited >= max_features and best is not None:
                break
            visited += 1
            cand = _best_split_on_feature(X[idx, f], onehot[idx], min_samples_leaf)
            if cand is None:
                continue
            score, thr = cand
            if score > parent_score * (1.0 + 1e-12) and (best is None or score > best[0]):
                best = (score, int(f), thr)
        if best is None:
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        ln = new_node(onehot[li].sum(axis=0))
        rn = new_node(onehot[ri].sum(axis=0))
        feature[node], threshold[node], left[node], right[node] = f, thr, ln, rn
        # right pushed first so the left subtree is numbered first
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))
    return Tree(feature, threshold, left, right, np.array(value).reshape(-1, n_classes))


def resolve_max_features(max_features, n_features):
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if isinstance(max_features, float):
        return max(1, min(n_features, math.ceil(max_features * n_features)))
    k = int(max_features)
    if not 1 <= k <= n_features:
        raise ValueError(f"max_features must be in [1, {n_features}], got {k}")
    return k


def majority_vote(tree_preds, n_classes):
    """Column-wise vote fractions for an ``(n_trees, n_rows)`` array of class indices."""
    tree_preds = np.asarray(tree_preds)
    votes = np.zeros((tree_preds.shape[1], n_classes))
    for row in tree_preds:
        votes[np.arange(len(row)), row] += 1
    return votes


def oob_score(trees, X, y_index, n_classes):
    """Accuracy of the out-of-bag majority vote.

    Each row is voted on only by trees whose bootstrap sample excluded it;
    rows that every tree saw are left out of the score.
    """
    votes = np.zeros((len(X), n_classes))
    for tree in trees:
        if tree.bootstrap_counts is None:
            raise ValueError("trees carry no bootstrap record; refit with bootstrap=True")
        oob = np.flatnonzero(tree.bootstrap_counts == 0)
        if len(oob):
            votes[oob, tree.predict_index(X[oob])] += 1
    scored = votes.sum(axis=1) > 0
    if not scored.any():
        return float("nan")
    return float(np.mean(np.argmax(votes[scored], axis=1) == np.asarray(y_index)[scored]))


class RandomForestClassifier(ClassifierMixin, BaseEstimator):
    """Random forest of Gini CART trees on bootstrap samples.

    Parameters
    ----------
    n_estimators : int
        Number of trees.
    max_depth : int or None
        Depth bound; ``None`` grows until leaves are pure or too small to split.
    min_samples_split : int
        Smallest node (in bootstrap rows) that may be split.
    min_samples_leaf : int
        Smallest admissible child of a split.
    max_features : "sqrt", int, float or None
        Features drawn per split; ``"sqrt"`` is ``ceil(sqrt(d))``. When none of
        the drawn features admits an improving split the remaining features
        are tried in random order.
    bootstrap : bool
        Draw a size-n bootstrap sample per tree; required for ``oob_score_``.
    random_state : int
        Root seed. Each tree gets its own child stream, so results do not
        depend on ``n_jobs``.
    n_jobs : int
        Worker processes for tree fitting (joblib).
    """

    def __init__(
        self,
        n_estimators=100,
        max_depth=None,
        min_samples_split=4,
        min_samples_leaf=2,
        max_features="sqrt",
        bootstrap=True,
        random_state=DEFAULT_SEED,
        n_jobs=1,
    ):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _validate_params(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2 * self.min_samples_leaf:
            raise ValueError("min_samples_split must be >= 2 * min_samples_leaf")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be None or >= 0")

    def fit(self, X, y):
        self._validate_params()
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_index = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        n_classes = len(self.classes_)
        mtry = resolve_max_features(self.max_features, self.n_features_in_)
        seeds = np.random.SeedSequence(int(self.random_state)).spawn(self.n_estimators)

        def fit_one(ss):
            rng = np.random.default_rng(ss)
            n = len(y_index)
            if self.bootstrap:
                sample = rng.integers(0, n, n)
                counts = np.bincount(sample, minlength=n)
            else:
                sample = np.arange(n)
                counts = None
            tree = build_tree(
                X[sample], y_index[sample], n_classes, mtry,
                self.min_samples_split, self.min_samples_leaf, self.max_depth, rng,
            )
            tree.bootstrap_counts = counts
            return tree

        if self.n_jobs == 1:
            self.estimators_ = [fit_one(ss) for ss in seeds]
        else:
            from joblib import Parallel, delayed

            self.estimators_ = Parallel(n_jobs=self.n_jobs)(delayed(fit_one)(ss) for ss in seeds)
        if self.bootstrap:
            self.oob_score_ = oob_score(self.estimators_, X, y_index, n_classes)
        return self

    def _tree_predictions(self, X):
        return np.array([t.predict_index(X) for t in self.estimators_])

    def predict_proba(self, X):
        """Fraction of trees voting for each class."""
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return majority_vote(self._tree_predictions(X), len(self.classes_)) / len(self.estimators_)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def oob_score_from_bags(self, X, y):
        """Recompute the OOB accuracy from the stored bootstrap records."""
        check_is_fitted(self, "estimators_")
        X, y = check_X_y(X, y, dtype=np.float64)
        y_index = np.searchsorted(self.classes_, y)
        return oob_score(self.estimators_, X, y_index, len(self.classes_))
