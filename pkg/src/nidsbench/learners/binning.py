"""Equal-frequency feature binning for histogram boosting."""

from __future__ import annotations

import numpy as np

SUBSAMPLE = 200_000


class QuantileBinner:
    """Map each feature to at most ``max_bins`` integer bins.

    Bin ``b`` of a feature holds values in ``(edges[b-1], edges[b]]``; values
    above the last edge fall in the top bin. ``representatives[f][b]`` is the
    largest training value seen in bin ``b``, so re-binning it gives ``b``.
    """

    def __init__(self, max_bins: int = 255, subsample: int | None = SUBSAMPLE, seed: int = 0):
        if not 2 <= max_bins <= 255:
            raise ValueError("max_bins must lie in [2, 255]")
        self.max_bins = max_bins
        self.subsample = subsample
        self.seed = seed

    def fit(self, X: np.ndarray) -> "QuantileBinner":
        X = np.asarray(X, dtype=np.float64)
        sample = X
        if self.subsample is not None and X.shape[0] > self.subsample:
            rng = np.random.default_rng(self.seed)
            sample = X[np.sort(rng.choice(X.shape[0], self.subsample, replace=False))]
        self.edges_: list[np.ndarray] = []
        for f in range(X.shape[1]):
            distinct = np.unique(sample[:, f])
            if distinct.size <= self.max_bins:
                edges = 0.5 * (distinct[:-1] + distinct[1:])
            else:
                qs = np.linspace(0, 100, self.max_bins + 1)[1:-1]
                edges = np.unique(np.percentile(sample[:, f], qs, method="midpoint"))
            self.edges_.append(edges)
        self.n_bins_ = np.array([len(e) + 1 for e in self.edges_], dtype=np.int64)
        binned = self.transform(X)
        self.representatives_ = []
        for f in range(X.shape[1]):
            reps = np.full(self.n_bins_[f], np.nan)
            np.fmax.at(reps, binned[:, f], X[:, f])
            self.representatives_.append(reps)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape, dtype=np.uint8, order="F")
        for f, edges in enumerate(self.edges_):
            out[:, f] = np.searchsorted(edges, X[:, f], side="left")
        return out

    def unbin(self, f: int, b: np.ndarray) -> np.ndarray:
        return self.representatives_[f][b]
