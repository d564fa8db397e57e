"""Campaign configuration (YAML) and its validation.

Example::

    datasets:
      - name: GTCS
        spec: gtcs                 # shipped spec name or a path to a spec YAML
        env: NIDSBENCH_GTCS_CSV    # or `path: /data/gtcs.csv`
    algorithms: [HGB, {kind: RF, hyperparams: {n_trees: 50}}]
    pipelines: [BD, MD, BMD]
    availabilities: [Limited, Abundant]
    feature_sets: [Complete, Essential]
    regimes: [Static]
    scenarios: [closed, unknown, adversarial]
    repetitions: {Limited: 1000, other: 100}   # or a preset name: paper, 10x10, 3x3
    master_seed: 0
    workers: 1
    output: results/run1
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from ..evaluator import SCENARIOS
from ..flowstore import COMPLETE, ESSENTIAL, FEATURE_SETS, DatasetSpec, builtin_spec
from ..learners import LearnerKind
from ..pipelines import PIPELINE_KINDS
from ..splitter import LIMITED, REGIMES, TEMPORAL, AvailabilityLevel
from ..threats import PerturbationRule

REPETITION_PRESETS = {
    "paper": {LIMITED: 1000, "other": 100, "temporal": 1},
    "10x10": {LIMITED: 10, "other": 10, "temporal": 1},
    "3x3": {LIMITED: 3, "other": 3, "temporal": 1},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRef:
    name: str
    spec: str | None = None
    path: str | None = None
    env: str | None = None
    synthetic: dict | None = None
    apply_caps: bool = True

    def load_spec(self) -> DatasetSpec:
        if self.synthetic is not None:
            from ..synthetic import synthetic_spec

            counts = self.synthetic.get("counts", {})
            return synthetic_spec(n_malicious=max(int(c) for c in counts), name=self.name)
        if self.spec is None:
            raise ConfigError(f"dataset {self.name}: no spec given")
        if Path(self.spec).suffix in (".yaml", ".yml"):
            return DatasetSpec.from_file(self.spec)
        return builtin_spec(self.spec)

    def data_path(self) -> Path:
        raw = self.path or (os.environ.get(self.env) if self.env else None)
        if not raw:
            hint = f" (set ${self.env})" if self.env else ""
            raise FileNotFoundError(f"dataset {self.name}: no data file configured{hint}")
        p = Path(raw)
        if not p.exists():
            raise FileNotFoundError(f"dataset {self.name}: data file not found: {p}")
        return p

    def to_dict(self) -> dict:
        out = {"name": self.name, "spec": self.spec, "path": self.path, "env": self.env,
               "synthetic": self.synthetic, "apply_caps": self.apply_caps}
        return {k: v for k, v in out.items() if v is not None}


@dataclass
class CampaignConfig:
    datasets: list[DatasetRef]
    algorithms: list[LearnerKind]
    pipelines: list[str]
    availabilities: list[AvailabilityLevel]
    feature_sets: list[str] = field(default_factory=lambda: [COMPLETE])
    regimes: list[str] = field(default_factory=lambda: ["Static"])
    scenarios: list[str] = field(default_factory=lambda: ["closed"])
    repetitions: dict[str, int] = field(default_factory=lambda: dict(REPETITION_PRESETS["paper"]))
    master_seed: int = 0
    workers: int = 1
    authoritative_timing: bool = True
    perturbation: PerturbationRule = field(default_factory=PerturbationRule)
    output: str = "results"
    hardware: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("datasets", "algorithms", "pipelines", "availabilities", "feature_sets", "regimes",
                     "scenarios"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be a non-empty list")
        for p in self.pipelines:
            if p not in PIPELINE_KINDS:
                raise ConfigError(f"unknown pipeline {p!r}")
        for fs in self.feature_sets:
            if fs not in FEATURE_SETS:
                raise ConfigError(f"unknown feature set {fs!r}")
        for r in self.regimes:
            if r not in REGIMES:
                raise ConfigError(f"unknown regime {r!r}")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ConfigError(f"unknown scenario {s!r}")
        if "unknown" in self.scenarios and COMPLETE not in self.feature_sets:
            raise ConfigError("the unknown scenario needs the Complete feature set")
        if "adversarial" in self.scenarios and ESSENTIAL not in self.feature_sets:
            raise ConfigError("the adversarial scenario needs the Essential feature set")
        if any(int(v) < 1 for v in self.repetitions.values()):
            raise ConfigError("repetitions must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError("dataset names must be unique")

    def trials_for(self, availability: AvailabilityLevel, regime: str) -> int:
        if regime == TEMPORAL:
            return 1
        if availability.kind in self.repetitions:
            return int(self.repetitions[availability.kind])
        return int(self.repetitions.get("other", 100))

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "CampaignConfig":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            raw["datasets"] = [DatasetRef(**d) if isinstance(d, dict) else DatasetRef(str(d), spec=str(d).lower())
                               for d in raw.get("datasets") or []]
            raw["algorithms"] = [LearnerKind.parse(a) for a in raw.get("algorithms") or []]
            raw["availabilities"] = [AvailabilityLevel.parse(a) for a in raw.get("availabilities") or []]
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        reps = raw.get("repetitions", "paper")
        if isinstance(reps, str):
            if reps not in REPETITION_PRESETS:
                raise ConfigError(f"unknown repetitions preset {reps!r}")
            reps = REPETITION_PRESETS[reps]
        raw["repetitions"] = {**REPETITION_PRESETS["paper"], **{str(k): int(v) for k, v in reps.items()}}
        if "perturbation" in raw:
            raw["perturbation"] = PerturbationRule.from_dict(raw["perturbation"])
        for key in ("pipelines", "feature_sets", "regimes", "scenarios"):
            if key in raw:
                raw[key] = [str(v) for v in raw[key]]
        return cls(**raw)

    @classmethod
    def from_file(cls, path: str | Path) -> "CampaignConfig":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "datasets": [d.to_dict() for d in self.datasets],
            "algorithms": [{"kind": a.kind, "hyperparams": a.hyperparams} for a in self.algorithms],
            "pipelines": list(self.pipelines),
            "availabilities": [{"kind": a.kind, "train_fraction": a.train_fraction,
                                "limited_per_class": a.limited_per_class} for a in self.availabilities],
            "feature_sets": list(self.feature_sets),
            "regimes": list(self.regimes),
            "scenarios": list(self.scenarios),
            "repetitions": dict(self.repetitions),
            "master_seed": self.master_seed,
            "workers": self.workers,
            "authoritative_timing": self.authoritative_timing,
            "perturbation": self.perturbation.to_dict(),
            "output": self.output,
            "hardware": dict(self.hardware),
        }

    def with_overrides(self, seed: int | None = None, workers: int | None = None,
                       output: str | None = None) -> "CampaignConfig":
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["master_seed"] = seed
        if workers is not None:
            changes["workers"] = workers
        if output is not None:
            changes["output"] = output
        return replace(self, **changes)
