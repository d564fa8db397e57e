"""The seven detector designs built from trained learners.

BD   single binary classifier
MD   single (1+M)-class classifier; malicious iff the predicted class > 0
BMD  BD cascade followed by an M-class family classifier on detected rows
EDo  M binary specialists, malicious if any specialist fires
EDv  same specialists, malicious if at least ceil(M/2) fire
EDs  same specialists plus a stacked binary model over their 0/1 outputs
EDr  same specialists, each scored only on benign + its own family
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import learners
from .flowstore import FeatureView
from .learners import LearnerKind, TrainedModel
from .splitter import TrialSplit

BD, MD, BMD, EDO, EDV, EDS, EDR = "BD", "MD", "BMD", "EDo", "EDv", "EDs", "EDr"
PIPELINE_KINDS = (BD, MD, BMD, EDO, EDV, EDS, EDR)
ENSEMBLES = (EDO, EDV, EDS, EDR)
BENIGN_SENTINEL = -1

TrainingAudit = Callable[[str, np.ndarray], None]


class PipelineError(ValueError):
    pass


@dataclass(eq=False)
class TrainedPipeline:
    kind: str
    learner: LearnerKind
    members: list[TrainedModel]
    member_names: list[str]
    classes: list[int]
    feature_set: str
    split_id: str
    specialist_classes: list[int] = field(default_factory=list)
    deployable: bool = True

    @property
    def member_fit_seconds(self) -> dict[str, float]:
        return {n: m.fit_wall_seconds for n, m in zip(self.member_names, self.members)}

    @property
    def train_wall_seconds(self) -> float:
        return float(sum(m.fit_wall_seconds for m in self.members))

    @property
    def fit_cpu_core_count(self) -> int:
        return max(m.fit_cpu_core_count for m in self.members)

    @property
    def specialists(self) -> list[TrainedModel]:
        return self.members[: len(self.specialist_classes)]


def _fit(lk, X, y, seed, workers, name, rows, audit, columns=None):
    if audit is not None:
        audit(name, rows)
    model = learners.fit(lk, X, y, seed=seed, workers=workers, allow_single_class=True)
    model.columns = columns
    return model


def _member_seed(seed: int, slot: int) -> int:
    return int(np.random.SeedSequence([seed, slot]).generate_state(1)[0])


def train_pipeline(kind: str, lk: LearnerKind | str, split: TrialSplit, view: FeatureView, *,
                   seed: int = 0, workers: int = 1, audit: TrainingAudit | None = None,
                   shared_specialists: TrainedPipeline | None = None) -> TrainedPipeline:
    """Train one design on the training rows of ``split``.

    ``audit`` is called with (member name, training row indices) before each
    member is fitted. Ensembles may reuse the specialists of another ensemble
    trained on the same split via ``shared_specialists``.
    """
    if kind not in PIPELINE_KINDS:
        raise PipelineError(f"unknown pipeline {kind!r}")
    lk = LearnerKind.parse(lk)
    rows = split.train_rows()
    X = view.matrix[rows]
    y = labels_for(split, rows, use_eval=False)
    malicious = [c for c in split.train_classes if c != 0]
    if kind != BD and not malicious:
        raise PipelineError(f"{kind} needs at least one malicious class in the training set")
    cols = tuple(view.column_names)
    base = dict(learner=lk, classes=split.classes, feature_set=view.feature_set, split_id=split.split_id)

    if kind == BD:
        m = _fit(lk, X, (y > 0).astype(np.int64), _member_seed(seed, 0), workers, "binary", rows, audit, cols)
        return TrainedPipeline(BD, members=[m], member_names=["binary"], **base)
    if kind == MD:
        m = _fit(lk, X, y, _member_seed(seed, 1), workers, "multiclass", rows, audit, cols)
        return TrainedPipeline(MD, members=[m], member_names=["multiclass"], **base)
    if kind == BMD:
        stage1 = _fit(lk, X, (y > 0).astype(np.int64), _member_seed(seed, 0), workers, "binary", rows, audit, cols)
        mal = y > 0
        stage2 = _fit(lk, X[mal], y[mal], _member_seed(seed, 2), workers, "family", rows[mal], audit, cols)
        return TrainedPipeline(BMD, members=[stage1, stage2], member_names=["binary", "family"], **base)

    if shared_specialists is not None:
        if shared_specialists.split_id != split.split_id or shared_specialists.learner != lk \
                or shared_specialists.feature_set != view.feature_set:
            raise PipelineError("shared specialists were trained on a different split, learner or view")
        specialists = list(shared_specialists.specialists)
        names = [f"specialist-{c}" for c in shared_specialists.specialist_classes]
    else:
        specialists, names = [], []
        benign = y == 0
        for c in malicious:
            mask = benign | (y == c)
            name = f"specialist-{c}"
            specialists.append(_fit(lk, X[mask], (y[mask] == c).astype(np.int64),
                                    _member_seed(seed, 100 + c), workers, name, rows[mask], audit, cols))
            names.append(name)
    members = list(specialists)
    if kind == EDS:
        stack_in = np.column_stack([learners.predict(m, X) for m in specialists]).astype(np.float64)
        members.append(_fit(lk, stack_in, (y > 0).astype(np.int64), _member_seed(seed, 99), workers,
                            "stack", rows, audit))
        names = names + ["stack"]
    return TrainedPipeline(kind, members=members, member_names=names, specialist_classes=list(malicious),
                           deployable=kind != EDR, **base)


def labels_for(split: TrialSplit, rows: np.ndarray, use_eval: bool) -> np.ndarray:
    """Class ids of ``rows``, which must be the sorted train (or eval) rows of ``split``."""
    part = split.eval_idx if use_eval else split.train_idx
    out = np.empty(len(rows), dtype=np.int64)
    for c, idx in part.items():
        out[np.searchsorted(rows, idx)] = c
    return out


def _check_schema(p: TrainedPipeline, view: FeatureView) -> None:
    cols = p.members[0].columns
    if cols is not None and tuple(view.column_names) != tuple(cols):
        missing = [c for c in cols if c not in view.column_names]
        extra = [c for c in view.column_names if c not in cols]
        raise PipelineError(f"schema mismatch: missing {missing}, unexpected {extra}")


def specialist_votes(p: TrainedPipeline, X: np.ndarray) -> np.ndarray:
    return np.column_stack([learners.predict(m, X) for m in p.specialists]).astype(np.int64)


def detect_matrix(p: TrainedPipeline, X: np.ndarray) -> np.ndarray:
    if p.kind == EDR:
        raise PipelineError("EDr is evaluation-only; use evaluate_redundant")
    if len(X) == 0:
        return np.empty(0, dtype=np.int64)
    if p.kind in (BD, BMD):
        return learners.predict(p.members[0], X).astype(np.int64)
    if p.kind == MD:
        return (learners.predict(p.members[0], X) > 0).astype(np.int64)
    votes = specialist_votes(p, X)
    if p.kind == EDO:
        return (votes.sum(axis=1) >= 1).astype(np.int64)
    if p.kind == EDV:
        return (votes.sum(axis=1) >= math.ceil(votes.shape[1] / 2)).astype(np.int64)
    return learners.predict(p.members[-1], votes.astype(np.float64)).astype(np.int64)


def detect(p: TrainedPipeline, view: FeatureView) -> np.ndarray:
    """Binary verdict (1 = malicious) for every row of ``view``."""
    _check_schema(p, view)
    return detect_matrix(p, view.matrix)


def classify_family(p: TrainedPipeline, view: FeatureView) -> np.ndarray:
    """Family per row; rows the pipeline deems benign get ``BENIGN_SENTINEL``.

    For MD a benign prediction (class 0) maps to the sentinel as well.
    """
    if p.kind not in (MD, BMD):
        raise PipelineError(f"family classification is defined for MD and BMD, not {p.kind}")
    _check_schema(p, view)
    X = view.matrix
    if p.kind == MD:
        pred = learners.predict(p.members[0], X).astype(np.int64)
        return np.where(pred > 0, pred, BENIGN_SENTINEL)
    out = np.full(len(X), BENIGN_SENTINEL, dtype=np.int64)
    detected = learners.predict(p.members[0], X) > 0
    if detected.any():
        out[detected] = learners.predict(p.members[1], X[detected])
    return out


@dataclass
class RedundantResult:
    tpr: float
    fpr: float
    per_class: dict[int, dict[str, float]]
    test_rows: dict[int, np.ndarray]


def evaluate_redundant(p: TrainedPipeline, split: TrialSplit, view: FeatureView) -> RedundantResult:
    """Score each specialist on benign E plus its own family only, then average."""
    if p.kind != EDR:
        raise PipelineError(f"evaluate_redundant needs an EDr pipeline, got {p.kind}")
    _check_schema(p, view)
    benign = split.eval_idx.get(0, np.empty(0, dtype=np.int64))
    per_class, test_rows = {}, {}
    for c, m in zip(p.specialist_classes, p.specialists):
        own = split.eval_idx.get(c, np.empty(0, dtype=np.int64))
        rows = np.sort(np.concatenate([benign, own]))
        test_rows[c] = rows
        pos = learners.predict(m, view.matrix[own]) if len(own) else np.empty(0)
        neg = learners.predict(m, view.matrix[benign]) if len(benign) else np.empty(0)
        per_class[c] = {
            "tpr": float(np.mean(pos == 1)) if len(pos) else 0.0,
            "fpr": float(np.mean(neg == 1)) if len(neg) else 0.0,
        }
    tpr = float(np.mean([v["tpr"] for v in per_class.values()])) if per_class else 0.0
    fpr = float(np.mean([v["fpr"] for v in per_class.values()])) if per_class else 0.0
    return RedundantResult(tpr, fpr, per_class, test_rows)
