"""Metrics and the three evaluation scenarios, each producing a TrialRecord."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .flowstore import COMPLETE, ESSENTIAL, Dataset, FeatureView, project
from .learners import LearnerKind
from .pipelines import (BD, BENIGN_SENTINEL, BMD, EDR, MD, TrainedPipeline, classify_family, detect,
                        evaluate_redundant, labels_for, specialist_votes, train_pipeline)
from .splitter import TrialSplit, exclude_class
from .threats import PerturbationRule, ThreatError, assess_robustness, eligible, perturb, verify_realizable
from .timing import time_phase

CLOSED, UNKNOWN, ADVERSARIAL = "closed", "unknown", "adversarial"
SCENARIOS = (CLOSED, UNKNOWN, ADVERSARIAL)


class EvaluationError(ValueError):
    pass


@dataclass
class Metrics:
    tpr: float
    fpr: float
    n_pos: int
    n_neg: int
    tpr_undefined: bool = False
    fpr_undefined: bool = False
    acc_mal: float | None = None
    acc_mal_strict: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _rate(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def binary_metrics(y_true, y_pred) -> Metrics:
    """tpr/fpr from exact confusion counts; ``y_true`` > 0 counts as malicious."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise EvaluationError(f"length mismatch: {y_true.shape[0]} labels, {y_pred.shape[0]} predictions")
    pos = y_true > 0
    hit = y_pred > 0
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    tpr, tpr_u = _rate(int((pos & hit).sum()), n_pos)
    fpr, fpr_u = _rate(int((~pos & hit).sum()), n_neg)
    return Metrics(tpr, fpr, n_pos, n_neg, tpr_u, fpr_u)


def malicious_accuracy(kind: str, y_true, families, detected_mask, strict: bool = False) -> float:
    """Share of malicious rows assigned their correct family.

    MD divides by all malicious rows. BMD divides by the malicious rows that
    stage 1 passed on, unless ``strict`` is set.
    """
    if kind not in (MD, BMD):
        raise EvaluationError(f"malicious accuracy is defined for MD and BMD, not {kind}")
    y_true = np.asarray(y_true)
    families = np.asarray(families)
    detected = np.asarray(detected_mask).astype(bool)
    if not (y_true.shape == families.shape == detected.shape):
        raise EvaluationError("y_true, families and detected_mask are not aligned")
    mal = y_true > 0
    correct = mal & (families == y_true)
    if kind == BMD and not strict:
        correct &= detected
        den = int((mal & detected).sum())
    else:
        den = int(mal.sum())
    return _rate(int(correct.sum()), den)[0]


# -- records ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrialContext:
    """The factors a scenario run does not learn from the pipeline itself."""

    dataset: str
    availability: str
    regime: str
    trial: int
    seed: int | None


@dataclass
class TrialRecord:
    dataset: str
    algorithm: str
    pipeline: str
    availability: str
    feature_set: str
    regime: str
    scenario: str
    trial: int
    seed: int | None
    split_id: str
    metrics: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, Any] = field(default_factory=dict)
    workers: int = 1
    fit_cpu_core_count: int = 1
    skipped: bool = False
    reason: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)
    hyperparams: dict[str, Any] = field(default_factory=dict)
    ledger_id: str | None = None

    FACTORS = ("dataset", "algorithm", "pipeline", "availability", "feature_set", "regime", "scenario",
               "trial", "seed")

    def __post_init__(self) -> None:
        for name in ("train_wall_seconds", "infer_wall_seconds"):
            if self.timings.get(name, 0.0) < 0:
                raise EvaluationError(f"{name} must be >= 0")

    @property
    def factors(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FACTORS)

    @property
    def cell(self) -> tuple:
        """Factors without the trial index: the key trials are aggregated over."""
        return tuple(getattr(self, f) for f in self.FACTORS if f not in ("trial", "seed"))

    @property
    def train_wall_seconds(self) -> float:
        return float(self.timings.get("train_wall_seconds", 0.0))

    @property
    def infer_wall_seconds(self) -> float:
        return float(self.timings.get("infer_wall_seconds", 0.0))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset, "algorithm": self.algorithm, "pipeline": self.pipeline,
            "availability": self.availability, "feature_set": self.feature_set, "regime": self.regime,
            "scenario": self.scenario, "trial": self.trial, "seed": self.seed, "split_id": self.split_id,
            "metrics": self.metrics, "timings": self.timings, "workers": self.workers,
            "fit_cpu_core_count": self.fit_cpu_core_count, "skipped": self.skipped, "reason": self.reason,
            "extra": self.extra, "hyperparams": self.hyperparams, "ledger_id": self.ledger_id,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrialRecord":
        return cls(**raw)


def _record(p: TrainedPipeline, ctx: TrialContext, scenario: str, split_id: str, workers: int,
            **kw) -> TrialRecord:
    return TrialRecord(
        dataset=ctx.dataset, algorithm=p.learner.kind, pipeline=p.kind, availability=ctx.availability,
        feature_set=p.feature_set, regime=ctx.regime, scenario=scenario, trial=ctx.trial, seed=ctx.seed,
        split_id=split_id, workers=workers, fit_cpu_core_count=p.fit_cpu_core_count,
        hyperparams=_jsonable(p.learner.hyperparams), **kw)


def _jsonable(hp: dict) -> dict:
    return {k: (v if isinstance(v, (int, float, str, bool)) or v is None else repr(v)) for k, v in hp.items()}


def subview(view: FeatureView, rows: np.ndarray) -> FeatureView:
    return FeatureView(view.matrix[rows], view.column_names, view.row_index[rows], view.feature_set,
                       view.dataset_name)


def _train_timings(p: TrainedPipeline) -> dict:
    return {"train_wall_seconds": p.train_wall_seconds,
            "members": {k: float(v) for k, v in p.member_fit_seconds.items()}}


# -- scenarios -------------------------------------------------------------------


def run_closed(p: TrainedPipeline, split: TrialSplit, view: FeatureView, ctx: TrialContext,
               workers: int = 1) -> TrialRecord:
    """Detect on all of E (EDr: per-family redundant evaluation)."""
    if p.split_id != split.split_id:
        raise EvaluationError("pipeline was trained on a different split")
    timings = _train_timings(p)
    if p.kind == EDR:
        res, wall, _ = time_phase(lambda: evaluate_redundant(p, split, view), workers)
        timings["infer_wall_seconds"] = wall
        n_neg = len(split.eval_idx.get(0, ()))
        n_pos = sum(len(v) for c, v in split.eval_idx.items() if c != 0)
        metrics = Metrics(res.tpr, res.fpr, n_pos, n_neg, not res.per_class, n_neg == 0)
        extra = {"per_class": {str(c): v for c, v in res.per_class.items()}}
        return _record(p, ctx, CLOSED, split.split_id, workers, metrics=metrics.to_dict(), timings=timings,
                       extra=extra)

    rows = split.eval_rows()
    y = labels_for(split, rows, use_eval=True)
    ev = subview(view, rows)
    if p.kind in (MD, BMD):
        families, wall, _ = time_phase(lambda: classify_family(p, ev), workers)
        detected = families != BENIGN_SENTINEL
        metrics = binary_metrics(y, detected.astype(np.int64))
        metrics.acc_mal = malicious_accuracy(p.kind, y, families, detected)
        metrics.acc_mal_strict = malicious_accuracy(p.kind, y, families, detected, strict=True)
    else:
        pred, wall, _ = time_phase(lambda: detect(p, ev), workers)
        metrics = binary_metrics(y, pred)
    timings["infer_wall_seconds"] = wall
    return _record(p, ctx, CLOSED, split.split_id, workers, metrics=metrics.to_dict(), timings=timings)


def run_unknown(kind: str, lk: LearnerKind | str, split: TrialSplit, view: FeatureView, ctx: TrialContext, *,
                seed: int = 0, workers: int = 1, audit=None) -> TrialRecord:
    """Leave-one-family-out: retrain without each family, score on that family.

    Reports the tpr averaged over the excluded families and the mean fpr of
    the retrained detectors; per-family values go to ``extra``.
    """
    if view.feature_set != COMPLETE:
        raise EvaluationError("the unknown-attack scenario uses the Complete feature set")
    lk = LearnerKind.parse(lk)
    malicious = [c for c in split.train_classes if c != 0]
    if len(malicious) < 2:
        raise EvaluationError("unknown-attack scenario undefined: the dataset has a single attack class")
    benign = split.eval_idx.get(0, np.empty(0, dtype=np.int64))
    per_class, train_total, infer_total = {}, 0.0, 0.0
    members: dict[str, float] = {}
    p = None
    for c in malicious:
        s_c = exclude_class(split, c)
        p = train_pipeline(kind, lk, s_c, view, seed=seed, workers=workers, audit=audit)
        train_total += p.train_wall_seconds
        members.update({f"without-{c}/{k}": v for k, v in p.member_fit_seconds.items()})
        own = split.eval_idx[c]
        if kind == EDR:
            # no specialist knows c; every specialist sees c and benign E and the verdict is their OR
            def score():
                return ((specialist_votes(p, view.matrix[own]).sum(axis=1) > 0).astype(np.int64),
                        (specialist_votes(p, view.matrix[benign]).sum(axis=1) > 0).astype(np.int64))
        else:
            def score():
                return detect(p, subview(view, own)), detect(p, subview(view, benign))
        (pos_pred, neg_pred), wall, _ = time_phase(score, workers)
        infer_total += wall
        m = binary_metrics(np.concatenate([np.ones(len(own)), np.zeros(len(benign))]),
                           np.concatenate([pos_pred, neg_pred]))
        per_class[str(c)] = {"tpr": m.tpr, "fpr": m.fpr, "n_pos": m.n_pos}
    metrics = {
        "tpr": float(np.mean([v["tpr"] for v in per_class.values()])),
        "fpr": float(np.mean([v["fpr"] for v in per_class.values()])),
        "n_pos": int(sum(v["n_pos"] for v in per_class.values())),
        "n_neg": int(len(benign)),
        "fpr_undefined": len(benign) == 0,
    }
    timings = {"train_wall_seconds": train_total, "infer_wall_seconds": infer_total, "members": members}
    return _record(p, ctx, UNKNOWN, split.split_id, workers, metrics=metrics, timings=timings,
                   extra={"per_class": per_class})


def resolve_rule(rule: PerturbationRule, d: Dataset) -> PerturbationRule:
    """Pin the duration cap to the dataset's maximum if the rule leaves it open."""
    return rule.pinned(d)


def run_adversarial(p: TrainedPipeline, d: Dataset, split: TrialSplit, rule: PerturbationRule,
                    ctx: TrialContext, *, seed: int = 0, workers: int = 1) -> TrialRecord:
    """Perturb the eligible malicious rows of E and compare tpr before and after."""
    if p.feature_set != ESSENTIAL:
        raise ThreatError("adversarial evaluation needs a detector on the Essential feature set")
    rows = eligible(d, split.eval_rows())
    timings = _train_timings(p)
    if len(rows) == 0:
        return _record(p, ctx, ADVERSARIAL, split.split_id, workers, timings=timings, skipped=True,
                       reason="no eligible rows (malicious UDP flows from internal hosts) in E")
    if p.kind == EDR:
        return _record(p, ctx, ADVERSARIAL, split.split_id, workers, timings=timings, skipped=True,
                       reason="EDr is evaluation-only and has no deployable verdict")
    rule = resolve_rule(rule, d)
    original = d.take(rows)
    adv = perturb(d, rows, rule, seed)
    violations = int(verify_realizable(original, adv, rule).sum())
    clean_view, adv_view = project(original, ESSENTIAL), project(adv, ESSENTIAL)
    res, wall, _ = time_phase(lambda: assess_robustness(p, clean_view, adv_view), workers)
    timings["infer_wall_seconds"] = wall
    metrics = {"tpr_org": res.tpr_org, "tpr_adv": res.tpr_adv, "n_eligible": res.n_eligible,
               "success": bool(res.success), "violations": violations}
    return _record(p, ctx, ADVERSARIAL, split.split_id, workers, metrics=metrics, timings=timings,
                   extra={"rule": rule.to_dict()})
