"""Train/evaluation partitions for the four data-availability levels."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .flowstore import Dataset

log = logging.getLogger(__name__)

LIMITED, SCARCE, MODERATE, ABUNDANT = "Limited", "Scarce", "Moderate", "Abundant"
AVAILABILITY_KINDS = (LIMITED, SCARCE, MODERATE, ABUNDANT)
STATIC, TEMPORAL = "Static", "Temporal"
REGIMES = (STATIC, TEMPORAL)

EVAL_FRACTION = 0.2
_DEFAULT_FRACTIONS = {SCARCE: 0.15, MODERATE: 0.40, ABUNDANT: 0.80}


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class AvailabilityLevel:
    kind: str
    train_fraction: float | None = None
    limited_per_class: int = 100

    def __post_init__(self) -> None:
        if self.kind not in AVAILABILITY_KINDS:
            raise ValueError(f"unknown availability {self.kind!r}")
        if self.kind == LIMITED:
            if self.limited_per_class < 1:
                raise ValueError("limited_per_class must be >= 1")
            return
        if self.train_fraction is None:
            object.__setattr__(self, "train_fraction", _DEFAULT_FRACTIONS[self.kind])
        if not 0 < self.train_fraction <= 0.8:
            raise ValueError(f"train fraction must lie in (0, 0.8], got {self.train_fraction}")

    @classmethod
    def parse(cls, value: "str | dict | AvailabilityLevel") -> "AvailabilityLevel":
        if isinstance(value, AvailabilityLevel):
            return value
        if isinstance(value, str):
            return cls(value)
        return cls(**value)

    def train_size(self, n_class: int, n_eval: int) -> int:
        """Number of training rows for a class of ``n_class`` rows, ``n_eval`` of them held out."""
        remaining = n_class - n_eval
        if self.kind == LIMITED:
            return min(self.limited_per_class, remaining)
        if self.kind == ABUNDANT:
            return remaining
        return min(remaining, max(1, math.floor(self.train_fraction * n_class)))


@dataclass(frozen=True, eq=False)
class TrialSplit:
    train_idx: dict[int, np.ndarray]
    eval_idx: dict[int, np.ndarray]
    seed: int | None
    availability: AvailabilityLevel
    regime: str
    excluded_class: int | None = None
    metadata: dict = field(default_factory=dict)

    def train_rows(self, classes=None) -> np.ndarray:
        return _concat(self.train_idx, classes)

    def eval_rows(self, classes=None) -> np.ndarray:
        return _concat(self.eval_idx, classes)

    @property
    def classes(self) -> list[int]:
        return sorted(self.eval_idx)

    @property
    def train_classes(self) -> list[int]:
        return sorted(c for c, idx in self.train_idx.items() if len(idx))

    @property
    def split_id(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.regime}|{self.availability}|{self.seed}|{self.excluded_class}".encode())
        for part in (self.train_idx, self.eval_idx):
            for c in sorted(part):
                h.update(f"|{c}:".encode())
                h.update(np.ascontiguousarray(part[c], dtype=np.int64).tobytes())
        return h.hexdigest()[:16]

    def to_manifest(self) -> dict:
        return {
            "split_id": self.split_id,
            "seed": self.seed,
            "regime": self.regime,
            "availability": {"kind": self.availability.kind, "train_fraction": self.availability.train_fraction,
                             "limited_per_class": self.availability.limited_per_class},
            "excluded_class": self.excluded_class,
            "train": {str(c): v.tolist() for c, v in sorted(self.train_idx.items())},
            "eval": {str(c): v.tolist() for c, v in sorted(self.eval_idx.items())},
            "metadata": self.metadata,
        }

    def save_manifest(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_manifest(), indent=1), encoding="utf-8")


def _concat(part: dict[int, np.ndarray], classes) -> np.ndarray:
    keys = sorted(part) if classes is None else [c for c in sorted(part) if c in set(classes)]
    if not keys:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate([part[c] for c in keys]))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.sort(np.asarray(a, dtype=np.int64))
    a.setflags(write=False)
    return a


def static_split(d: Dataset, a: AvailabilityLevel, seed: int) -> TrialSplit:
    rng = np.random.default_rng(seed)
    train, evaluation, short = {}, {}, {}
    for c, n_c in d.class_counts.items():
        if n_c == 0:
            continue
        if n_c < 2:
            raise SplitError(f"class {c} has {n_c} sample(s); at least 2 are required")
        rows = d.rows_of(c)
        perm = rng.permutation(rows)
        n_eval = math.floor(EVAL_FRACTION * n_c)
        n_train = a.train_size(n_c, n_eval)
        if a.kind == LIMITED and n_train < a.limited_per_class:
            log.warning("class %d has only %d rows left for Limited training", c, n_train)
            short[c] = n_train
        evaluation[c] = _frozen(perm[:n_eval])
        train[c] = _frozen(perm[n_eval:n_eval + n_train])
    meta = {"short_classes": short} if short else {}
    return TrialSplit(train, evaluation, seed, a, STATIC, metadata=meta)


def temporal_split(d: Dataset, a: AvailabilityLevel) -> TrialSplit:
    if d.timestamp is None:
        raise SplitError("temporal regime unsupported for this dataset")
    train, evaluation, gaps, short = {}, {}, {}, {}
    for c, n_c in d.class_counts.items():
        if n_c == 0:
            continue
        rows = d.rows_of(c)
        order = rows[np.argsort(d.timestamp[rows], kind="stable")]
        n_eval = math.floor(EVAL_FRACTION * n_c)
        n_train = a.train_size(n_c, n_eval)
        if a.kind == LIMITED and n_train < a.limited_per_class:
            short[c] = n_train
        evaluation[c] = _frozen(order[n_c - n_eval:])
        train[c] = _frozen(order[:n_train])
        gaps[c] = n_c - n_eval - n_train
    meta = {"gap_rows": gaps}
    if short:
        meta["short_classes"] = short
    return TrialSplit(train, evaluation, None, a, TEMPORAL, metadata=meta)


def exclude_class(s: TrialSplit, c: int) -> TrialSplit:
    if c == 0:
        raise SplitError("cannot exclude the benign class")
    if c not in s.train_idx:
        raise SplitError(f"class {c} is not present in the split")
    train = dict(s.train_idx)
    train[c] = _frozen(np.empty(0, dtype=np.int64))
    return replace(s, train_idx=train, excluded_class=c)
