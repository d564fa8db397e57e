"""Decision tree and random forest classifiers."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._tree import apply_tree, argmax_lowest, build_tree


class DecisionTree:
    def __init__(self, max_depth=None, min_samples_split=2, max_features=None, seed=0):
        if min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.seed = seed

    def fit(self, X, y, n_classes, sample_weight=None, rows=None) -> "DecisionTree":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        rows = np.arange(len(y), dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
        p = X.shape[1]
        mf = p if self.max_features is None else max(1, min(p, int(self.max_features)))
        depth = -1 if self.max_depth is None else int(self.max_depth)
        (self.feature_, self.threshold_, self.left_, self.right_, self.value_) = build_tree(
            X, y, w, rows, n_classes, mf, self.min_samples_split, depth, int(self.seed) % (2**32))
        self.n_classes_ = n_classes
        return self

    @property
    def node_count(self) -> int:
        return int(self.feature_.shape[0])

    def leaf_distribution(self, X) -> np.ndarray:
        leaves = apply_tree(np.ascontiguousarray(X, dtype=np.float64), self.feature_, self.threshold_,
                            self.left_, self.right_)
        return self.value_[leaves]

    def predict(self, X) -> np.ndarray:
        return argmax_lowest(self.leaf_distribution(X))


class RandomForest:
    """Bootstrap forest of Gini trees aggregated by majority vote."""

    def __init__(self, n_trees=100, bootstrap=True, max_features="sqrt", max_depth=None,
                 min_samples_split=2, seed=0, workers=1):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = n_trees
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.workers = workers

    def _features_per_split(self, p: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(p)))
        if self.max_features is None:
            return p
        return max(1, min(p, int(self.max_features)))

    def fit(self, X, y, n_classes) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n = len(y)
        mf = self._features_per_split(X.shape[1])
        seeds = np.random.SeedSequence(self.seed).generate_state(self.n_trees)

        def grow(i):
            if self.bootstrap:
                rng = np.random.default_rng(seeds[i])
                counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
                rows = np.flatnonzero(counts)
            else:
                counts, rows = np.ones(n), None
            tree = DecisionTree(self.max_depth, self.min_samples_split, mf, int(seeds[i]))
            return tree.fit(X, y, n_classes, sample_weight=counts, rows=rows)

        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                self.trees_ = list(pool.map(grow, range(self.n_trees)))
        else:
            self.trees_ = [grow(i) for i in range(self.n_trees)]
        self.n_classes_ = n_classes
        return self

    def votes(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        votes = np.zeros((X.shape[0], self.n_classes_))
        rows = np.arange(X.shape[0])
        for tree in self.trees_:
            votes[rows, tree.predict(X)] += 1
        return votes

    def predict(self, X) -> np.ndarray:
        return argmax_lowest(self.votes(X))
