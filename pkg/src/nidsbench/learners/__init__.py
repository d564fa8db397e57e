"""The four supervised learners behind a single fit/predict contract."""

from __future__ import annotations

import os
import pickle
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..flowstore import FeatureView
from ._tree import argmax_lowest
from .hgb import HistGradientBoosting
from .logistic import LogisticRegression
from .trees import DecisionTree, RandomForest

DT, RF, LR, HGB = "DT", "RF", "LR", "HGB"
LEARNER_KINDS = (DT, RF, LR, HGB)

DEFAULT_HYPERPARAMS: dict[str, dict[str, Any]] = {
    DT: {"criterion": "gini", "max_depth": None, "min_samples_split": 2},
    RF: {"n_trees": 100, "bootstrap": True, "features_per_split": "sqrt", "max_depth": None,
         "min_samples_split": 2},
    LR: {"regularization": "l2", "strength": 1.0, "max_iter": 1000, "tol": 1e-4, "standardize_inputs": True},
    HGB: {"n_iter": 100, "learning_rate": 0.1, "max_bins": 255, "max_leaf_nodes": 31,
          "min_samples_leaf": 20, "l2_regularization": 0.0},
}

MODEL_FORMAT = "nidsbench-model"
MODEL_FORMAT_VERSION = 1


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerKind:
    kind: str
    hyperparams: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in LEARNER_KINDS:
            raise LearnerError(f"unknown learner {self.kind!r}")
        unknown = set(self.hyperparams) - set(DEFAULT_HYPERPARAMS[self.kind])
        if unknown:
            raise LearnerError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        merged = {**DEFAULT_HYPERPARAMS[self.kind], **self.hyperparams}
        object.__setattr__(self, "hyperparams", merged)
        _validate(self.kind, merged)

    @classmethod
    def parse(cls, value: "str | dict | LearnerKind") -> "LearnerKind":
        if isinstance(value, LearnerKind):
            return value
        if isinstance(value, str):
            return cls(value)
        return cls(value["kind"], dict(value.get("hyperparams") or {}))

    def __hash__(self) -> int:
        return hash((self.kind, tuple(sorted((k, repr(v)) for k, v in self.hyperparams.items()))))


def _validate(kind: str, hp: dict[str, Any]) -> None:
    if kind == DT:
        if hp["criterion"] != "gini":
            raise LearnerError("only the gini criterion is implemented")
        if hp["min_samples_split"] < 2:
            raise LearnerError("min_samples_split must be >= 2")
    elif kind == RF:
        if hp["n_trees"] < 1:
            raise LearnerError("n_trees must be >= 1")
    elif kind == LR:
        if hp["regularization"] != "l2" or hp["strength"] <= 0:
            raise LearnerError("LR needs l2 regularisation with positive strength")
        if hp["max_iter"] < 1:
            raise LearnerError("max_iter must be >= 1")
    elif kind == HGB:
        if hp["n_iter"] < 1 or hp["max_leaf_nodes"] < 2 or hp["min_samples_leaf"] < 1:
            raise LearnerError("HGB counts must be >= 1 (max_leaf_nodes >= 2)")
        if hp["learning_rate"] <= 0:
            raise LearnerError("learning_rate must be positive")
        if not 2 <= hp["max_bins"] <= 255:
            raise LearnerError("max_bins must lie in [2, 255]")


class ConstantModel:
    def __init__(self, index: int):
        self.index = index

    def predict_index(self, X):
        return np.full(X.shape[0], self.index, dtype=np.int64)


@dataclass(eq=False)
class TrainedModel:
    kind: LearnerKind
    estimator: Any
    classes: np.ndarray
    columns: tuple[str, ...] | None
    fit_wall_seconds: float
    fit_cpu_core_count: int
    seed: int = 0

    @property
    def is_constant(self) -> bool:
        return isinstance(self.estimator, ConstantModel)

    def _predict_index(self, X: np.ndarray) -> np.ndarray:
        est = self.estimator
        if isinstance(est, ConstantModel):
            return est.predict_index(X)
        if isinstance(est, (DecisionTree, RandomForest)):
            return est.predict(X)
        return argmax_lowest(np.ascontiguousarray(est.predict_proba(X)))


def _as_matrix(X) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(X, FeatureView):
        return X.matrix, X.column_names
    return np.asarray(X, dtype=np.float64), None


def fit(k: LearnerKind | str, X, y, *, seed: int = 0, workers: int = 1,
        allow_single_class: bool = False) -> TrainedModel:
    """Train ``k`` on ``X`` (a FeatureView or matrix) against labels ``y``.

    DT always trains on one worker; the other learners use up to ``workers``.
    """
    k = LearnerKind.parse(k)
    matrix, columns = _as_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if matrix.shape[0] == 0:
        raise LearnerError("cannot fit on zero rows")
    if len(y) != matrix.shape[0]:
        raise LearnerError(f"{len(y)} labels for {matrix.shape[0]} rows")
    if not np.all(np.isfinite(matrix)):
        raise LearnerError("feature matrix contains non-finite values")
    classes, encoded = np.unique(y, return_inverse=True)
    workers = max(1, int(workers))
    cores = 1 if k.kind == DT else workers
    hp = k.hyperparams
    start = time.perf_counter()
    if len(classes) < 2:
        if not allow_single_class:
            raise LearnerError("training labels hold a single class; pass allow_single_class to fit a constant")
        est: Any = ConstantModel(0)
        cores = 1
    elif k.kind == DT:
        est = DecisionTree(hp["max_depth"], hp["min_samples_split"], None, seed).fit(matrix, encoded, len(classes))
    elif k.kind == RF:
        est = RandomForest(hp["n_trees"], hp["bootstrap"], hp["features_per_split"], hp["max_depth"],
                           hp["min_samples_split"], seed, workers).fit(matrix, encoded, len(classes))
    elif k.kind == LR:
        est = LogisticRegression(hp["strength"], hp["max_iter"], hp["tol"],
                                 hp["standardize_inputs"]).fit(matrix, encoded, len(classes))
    else:
        est = HistGradientBoosting(hp["n_iter"], hp["learning_rate"], hp["max_bins"], hp["max_leaf_nodes"],
                                   hp["min_samples_leaf"], hp["l2_regularization"], seed,
                                   workers).fit(matrix, encoded, len(classes))
    wall = time.perf_counter() - start
    return TrainedModel(k, est, classes, columns, wall, cores, seed)


def constant_model(label: int, columns: tuple[str, ...] | None = None) -> TrainedModel:
    return TrainedModel(LearnerKind(DT), ConstantModel(0), np.array([label]), columns, 0.0, 1)


def predict(m: TrainedModel, X) -> np.ndarray:
    """Labels for every row of ``X``; runs on a single worker."""
    matrix, columns = _as_matrix(X)
    if columns is not None and m.columns is not None and tuple(columns) != tuple(m.columns):
        missing = [c for c in m.columns if c not in columns]
        extra = [c for c in columns if c not in m.columns]
        raise LearnerError(f"schema mismatch: missing {missing}, unexpected {extra}"
                           + ("" if missing or extra else " (column order differs)"))
    if m.columns is not None and matrix.shape[1] != len(m.columns):
        raise LearnerError(f"schema mismatch: expected {len(m.columns)} columns, got {matrix.shape[1]}")
    if matrix.shape[0] == 0:
        return np.empty(0, dtype=m.classes.dtype)
    return m.classes[m._predict_index(matrix)]


def save_model(m: TrainedModel, path: str | Path) -> None:
    """Write a versioned pickle artifact (header dict + model)."""
    payload = {"format": MODEL_FORMAT, "version": MODEL_FORMAT_VERSION, "model": m}
    tmp = Path(f"{path}.tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, path)


def load_model(path: str | Path) -> TrainedModel:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise LearnerError(f"{path} is not a model artifact")
    if payload["version"] != MODEL_FORMAT_VERSION:
        raise LearnerError(f"unsupported model artifact version {payload['version']}")
    return payload["model"]


__all__ = [
    "DT", "RF", "LR", "HGB", "LEARNER_KINDS", "DEFAULT_HYPERPARAMS", "LearnerKind", "LearnerError",
    "TrainedModel", "fit", "predict", "constant_model", "save_model", "load_model",
    "DecisionTree", "RandomForest", "LogisticRegression", "HistGradientBoosting",
]
