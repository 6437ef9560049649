"""CART trees, a bagged random forest and logistic-loss gradient boosting."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import PROBA_EPS, check_predict_data, check_training_data

LEAF = -1
_MIN_GAIN = 1e-12


class Tree:
    """Flat binary tree; samples with ``x[feature] <= threshold`` go left."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


class _Binned:
    """Per-feature integer codes over the sorted distinct values (exact, no approximation)."""

    def __init__(self, X):
        self.values, codes = [], []
        for j in range(X.shape[1]):
            uniq, inv = np.unique(X[:, j], return_inverse=True)
            self.values.append(uniq)
            codes.append(inv)
        self.codes = np.column_stack(codes) if codes else np.empty((len(X), 0), dtype=np.int64)
        self.n_bins = max((len(v) for v in self.values), default=1)


def _best_split(binned, idx, target, features, criterion, min_leaf):
    """Return ``(impurity, feature, threshold)`` of the best split or ``None``.

    Candidate thresholds are midpoints between consecutive distinct values
    present in the node. Ties keep the first feature (in ``features`` order)
    and the lowest threshold. All candidate features are scored at once on a
    (feature, bin) grid.
    """
    features = np.asarray(list(features), dtype=np.int64)
    t = target[idx]
    n = len(idx)
    B = binned.n_bins
    cell = (np.arange(len(features)) * B)[None, :] + binned.codes[np.ix_(idx, features)]
    cell = cell.ravel()
    size = len(features) * B
    tt = np.repeat(t, len(features))
    counts = np.bincount(cell, minlength=size).reshape(-1, B)
    s = np.bincount(cell, weights=tt, minlength=size).reshape(-1, B)
    n_left = np.cumsum(counts, axis=1)
    s_left = np.cumsum(s, axis=1)
    n_right = n - n_left
    s_right = s_left[:, -1:] - s_left
    # a boundary after bin b is a candidate when b is occupied and rows remain on the right
    ok = (counts > 0) & (n_left >= min_leaf) & (n_right >= min_leaf) & (n_right > 0)
    if not ok.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "gini":
            # n * gini for a 0/1 target: 2 * pos * (n - pos) / n
            imp = 2.0 * s_left * (n_left - s_left) / n_left + 2.0 * s_right * (n_right - s_right) / n_right
        else:
            sq = np.bincount(cell, weights=tt * tt, minlength=size).reshape(-1, B)
            sq_left = np.cumsum(sq, axis=1)
            sq_right = sq_left[:, -1:] - sq_left
            imp = (sq_left - s_left**2 / n_left) + (sq_right - s_right**2 / n_right)
    imp = np.where(ok, imp, np.inf)
    r, b = np.unravel_index(int(np.argmin(imp)), imp.shape)
    f = int(features[r])
    nxt = b + 1 + int(np.flatnonzero(counts[r, b + 1:])[0])
    vals = binned.values[f]
    return float(imp[r, b]), f, float((vals[b] + vals[nxt]) / 2.0)


def _node_impurity(t, criterion):
    n = len(t)
    if criterion == "gini":
        pos = t.sum()
        return 2.0 * pos * (n - pos) / n
    return float(((t - t.mean()) ** 2).sum())


def build_tree(X, target, *, criterion="gini", max_depth=None, min_leaf=1, max_features=None,
               rng=None, leaf_value=None, binned=None, sample_idx=None) -> Tree:
    """Grow a tree greedily.

    ``leaf_value(idx)`` maps the training rows reaching a leaf to its value;
    by default the mean target. ``max_features`` features are drawn without
    replacement from ``rng`` at every node when set.
    """
    binned = binned if binned is not None else _Binned(X)
    target = np.asarray(target, dtype=float)
    d = X.shape[1]
    if leaf_value is None:
        leaf_value = lambda rows: float(target[rows].mean())
    root = np.arange(len(X)) if sample_idx is None else np.asarray(sample_idx)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), root, 0)]
    while stack:
        node, rows, depth = stack.pop()
        split = None
        t = target[rows]
        if (max_depth is None or depth < max_depth) and len(rows) >= 2 * min_leaf:
            parent = _node_impurity(t, criterion)
            if parent > _MIN_GAIN:
                if max_features is not None and max_features < d:
                    feats = rng.choice(d, size=max_features, replace=False)
                else:
                    feats = range(d)
                split = _best_split(binned, rows, target, feats, criterion, min_leaf)
                if split is not None and parent - split[0] <= _MIN_GAIN:
                    split = None
        if split is None:
            value[node] = leaf_value(rows)
            continue
        _, f, thr = split
        mask = X[rows, f] <= thr
        feature[node], threshold[node] = f, thr
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        # push right first so the left subtree is numbered first
        stack.append((r, rows[~mask], depth + 1))
        stack.append((l, rows[mask], depth + 1))
    return Tree(feature, threshold, left, right, value)


def _resolve_max_features(spec, d):
    if spec is None:
        return None
    if spec == "sqrt":
        return max(1, int(math.sqrt(d)))
    return max(1, min(d, int(spec)))


class RandomForest(ClassifierMixin, BaseEstimator):
    """Bootstrap-aggregated Gini trees with per-node feature subsampling.

    Every tree draws its bootstrap and feature subsets from its own child of
    ``SeedSequence(random_state)``, so results do not depend on build order.
    """

    def __init__(self, n_trees=100, max_depth=None, min_leaf=1, max_features="sqrt", random_state=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_training_data(self, X, y)
        binned = _Binned(X)
        m = _resolve_max_features(self.max_features, X.shape[1])
        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_trees)
        self.trees_ = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            boot = rng.integers(0, len(X), size=len(X))
            self.trees_.append(
                build_tree(X, y, criterion="gini", max_depth=self.max_depth, min_leaf=self.min_leaf,
                           max_features=m, rng=rng, binned=binned, sample_idx=boot)
            )
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "trees_")
        X = check_predict_data(self, X)
        p = np.mean([t.predict(X) for t in self.trees_], axis=0)
        p = np.clip(p, PROBA_EPS, 1.0 - PROBA_EPS)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def get_state(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees_], "n_features_in": int(self.n_features_in_)}

    def set_state(self, state):
        self.trees_ = [Tree.from_dict(t) for t in state["trees"]]
        self.n_features_in_ = int(state["n_features_in"])
        self.classes_ = np.array([0, 1])
        return self


class GradientBoosting(ClassifierMixin, BaseEstimator):
    """Binomial-deviance boosting.

    Each round fits a least-squares regression tree to the residuals
    ``y - p`` and sets every leaf to the Newton step
    ``sum(y - p) / sum(p (1 - p))`` over its rows; the update is shrunk by
    ``learning_rate``. The raw score starts at the training log-odds.
    """

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=1, random_state=0):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_training_data(self, X, y)
        binned = _Binned(X)
        prior = y.mean()
        self.init_score_ = float(np.log(prior / (1.0 - prior)))
        F = np.full(len(y), self.init_score_)
        self.trees_ = []
        for _ in range(self.n_rounds):
            p = expit(F)
            resid = y - p
            hess = p * (1.0 - p)

            def newton(rows, resid=resid, hess=hess):
                return float(resid[rows].sum() / max(hess[rows].sum(), 1e-12))

            tree = build_tree(X, resid, criterion="mse", max_depth=self.max_depth,
                              min_leaf=self.min_leaf, leaf_value=newton, binned=binned)
            self.trees_.append(tree)
            F = F + self.learning_rate * tree.predict(X)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "trees_")
        X = check_predict_data(self, X)
        F = np.full(len(X), self.init_score_)
        for tree in self.trees_:
            F = F + self.learning_rate * tree.predict(X)
        return F

    def predict_proba(self, X):
        p = np.clip(expit(self.decision_function(X)), PROBA_EPS, 1.0 - PROBA_EPS)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def get_state(self) -> dict:
        return {
            "init_score": self.init_score_,
            "trees": [t.to_dict() for t in self.trees_],
            "n_features_in": int(self.n_features_in_),
        }

    def set_state(self, state):
        self.init_score_ = float(state["init_score"])
        self.trees_ = [Tree.from_dict(t) for t in state["trees"]]
        self.n_features_in_ = int(state["n_features_in"])
        self.classes_ = np.array([0, 1])
        return self
