"""Histogram gradient boosting with leaf-wise tree growth."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numba
import numpy as np

from ._hist import build_histograms, find_best_split, partition, predict_binned
from .binning import QuantileBinner

MIN_HESSIAN = 1e-3


@dataclass
class _Tree:
    feature: np.ndarray
    bin_threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_value: np.ndarray
    count: np.ndarray  # training rows that reached each node

    def predict(self, binned: np.ndarray) -> np.ndarray:
        return predict_binned(binned, self.feature, self.bin_threshold, self.left, self.right, self.leaf_value)


class _Node:
    __slots__ = ("node_id", "idx", "hist", "g", "h", "gain", "feature", "bin")

    def __init__(self, node_id, idx, hist, g, h):
        self.node_id = node_id
        self.idx = idx
        self.hist = hist
        self.g = g
        self.h = h
        self.gain = 0.0
        self.feature = -1
        self.bin = -1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(raw):
    e = np.exp(raw - raw.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class HistGradientBoosting:
    def __init__(self, n_iter=100, learning_rate=0.1, max_bins=255, max_leaf_nodes=31,
                 min_samples_leaf=20, l2_regularization=0.0, seed=0, workers=1):
        if n_iter < 1 or max_leaf_nodes < 2 or min_samples_leaf < 1:
            raise ValueError("n_iter >= 1, max_leaf_nodes >= 2 and min_samples_leaf >= 1 are required")
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.max_bins = max_bins
        self.max_leaf_nodes = max_leaf_nodes
        self.min_samples_leaf = min_samples_leaf
        self.l2_regularization = l2_regularization
        self.seed = seed
        self.workers = workers

    def _grow(self, binned, gradients, hessians):
        n_bins = int(self.binner_.n_bins_.max())
        nb = self.binner_.n_bins_
        l2 = self.l2_regularization
        msl = self.min_samples_leaf

        feature = [-1]
        bin_thr = [0]
        left = [-1]
        right = [-1]
        values = [0.0]
        counts = [binned.shape[0]]

        def evaluate(node):
            gain, f, b = find_best_split(node.hist, nb, node.g, node.h, float(node.idx.shape[0]),
                                         l2, msl, MIN_HESSIAN)
            node.gain, node.feature, node.bin = gain, f, b

        root_idx = np.arange(binned.shape[0], dtype=np.int64)
        root = _Node(0, root_idx, build_histograms(binned, root_idx, gradients, hessians, n_bins),
                     float(gradients.sum()), float(hessians.sum()))
        evaluate(root)
        leaves = {0: root}
        heap = []
        if root.feature >= 0:
            heapq.heappush(heap, (-root.gain, 0))
        while heap and len(leaves) < self.max_leaf_nodes:
            _, nid = heapq.heappop(heap)
            node = leaves.pop(nid)
            li, ri = partition(binned, node.idx, node.feature, node.bin)
            small, large = (li, ri) if li.shape[0] <= ri.shape[0] else (ri, li)
            small_hist = build_histograms(binned, small, gradients, hessians, n_bins)
            large_hist = node.hist - small_hist
            hists = (small_hist, large_hist) if small is li else (large_hist, small_hist)
            lid, rid = len(feature), len(feature) + 1
            feature[nid], bin_thr[nid], left[nid], right[nid] = node.feature, node.bin, lid, rid
            for cid, cidx, chist in ((lid, li, hists[0]), (rid, ri, hists[1])):
                feature.append(-1)
                bin_thr.append(0)
                left.append(-1)
                right.append(-1)
                values.append(0.0)
                counts.append(int(cidx.shape[0]))
                g = float(gradients[cidx].sum())
                h = float(hessians[cidx].sum())
                child = _Node(cid, cidx, chist, g, h)
                evaluate(child)
                leaves[cid] = child
                if child.feature >= 0:
                    heapq.heappush(heap, (-child.gain, cid))
        update = np.empty(binned.shape[0])
        for nid, node in leaves.items():
            v = -self.learning_rate * node.g / (node.h + l2) if node.h + l2 > 0 else 0.0
            values[nid] = v
            update[node.idx] = v
        tree = _Tree(np.array(feature, dtype=np.int64), np.array(bin_thr, dtype=np.int64),
                     np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                     np.array(values, dtype=np.float64), np.array(counts, dtype=np.int64))
        return tree, update

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "HistGradientBoosting":
        """Fit on integer targets ``0..n_classes-1``."""
        previous = numba.get_num_threads()
        numba.set_num_threads(max(1, min(self.workers, numba.config.NUMBA_NUM_THREADS)))
        try:
            self._fit(X, y, n_classes)
        finally:
            numba.set_num_threads(previous)
        return self

    def _fit(self, X, y, n_classes):
        self.binner_ = QuantileBinner(self.max_bins, seed=self.seed).fit(X)
        binned = self.binner_.transform(X)
        self.n_classes_ = n_classes
        n = X.shape[0]
        self.trees_: list[list[_Tree]] = []
        self.loss_history_: list[float] = []
        if n_classes == 2:
            p = np.clip(y.mean(), 1e-12, 1 - 1e-12)
            self.baseline_ = np.array([np.log(p / (1 - p))])
            raw = np.full(n, self.baseline_[0])
            self.loss_history_.append(self._binary_loss(raw, y))
            for _ in range(self.n_iter):
                prob = _sigmoid(raw)
                g = prob - y
                h = np.maximum(prob * (1 - prob), 1e-16)
                tree, update = self._grow(binned, g, h)
                raw += update
                self.trees_.append([tree])
                self.loss_history_.append(self._binary_loss(raw, y))
        else:
            prior = np.bincount(y, minlength=n_classes) / n
            self.baseline_ = np.log(np.clip(prior, 1e-12, None))
            raw = np.tile(self.baseline_, (n, 1))
            onehot = np.eye(n_classes)[y]
            self.loss_history_.append(self._multi_loss(raw, y))
            for _ in range(self.n_iter):
                prob = _softmax(raw)
                round_trees = []
                updates = np.empty_like(raw)
                for k in range(n_classes):
                    g = prob[:, k] - onehot[:, k]
                    h = np.maximum(prob[:, k] * (1 - prob[:, k]), 1e-16)
                    tree, updates[:, k] = self._grow(binned, g, h)
                    round_trees.append(tree)
                raw += updates
                self.trees_.append(round_trees)
                self.loss_history_.append(self._multi_loss(raw, y))

    @staticmethod
    def _binary_loss(raw, y):
        return float(np.mean(np.logaddexp(0.0, raw) - y * raw))

    @staticmethod
    def _multi_loss(raw, y):
        m = raw.max(axis=1)
        lse = m + np.log(np.exp(raw - m[:, None]).sum(axis=1))
        return float(np.mean(lse - raw[np.arange(len(y)), y]))

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        binned = np.ascontiguousarray(self.binner_.transform(X))
        if self.n_classes_ == 2:
            raw = np.full(X.shape[0], self.baseline_[0])
            for (tree,) in self.trees_:
                raw += tree.predict(binned)
            return raw
        raw = np.tile(self.baseline_, (X.shape[0], 1))
        for round_trees in self.trees_:
            for k, tree in enumerate(round_trees):
                raw[:, k] += tree.predict(binned)
        return raw

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raw = self.decision_function(X)
        if self.n_classes_ == 2:
            p = _sigmoid(raw)
            return np.column_stack([1 - p, p])
        return _softmax(raw)
