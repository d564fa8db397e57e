"""Black-box evasion by realizable NetFlow perturbations.

Only malicious UDP flows started by an internal host are perturbed. Each row
gets one random increment to its duration and/or forward bytes; values are
never decreased, bytes stay within ``mtu * packets`` and duration within the
maximum flow duration, and dependent features are recomputed from their
formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .flowstore import ESSENTIAL, UDP, Dataset, FeatureView
from .pipelines import TrainedPipeline, detect

DURATION, BYTES, BOTH, PACKETS = "duration", "bytes", "both", "packets"
_MODE_FIELDS = {
    DURATION: ("duration",),
    BYTES: ("tot_bytes",),
    BOTH: ("duration", "tot_bytes"),
    PACKETS: ("tot_packets",),
}


class ThreatError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationRule:
    duration_increments: tuple[float, ...] = (1.0, 2.0, 5.0)
    byte_increments: tuple[float, ...] = (1.0, 8.0, 64.0, 128.0, 512.0, 1024.0)
    mtu: float = 1500.0
    max_flow_duration: float | None = None
    mode: str = BOTH
    packet_increments: tuple[float, ...] = (1.0,)
    allow_packets: bool = False

    def __post_init__(self) -> None:
        for name in ("duration_increments", "byte_increments", "packet_increments"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values or min(values) < 0:
                raise ThreatError(f"{name} must be a non-empty list of non-negative numbers")
            object.__setattr__(self, name, values)
        if self.mtu <= 0:
            raise ThreatError("mtu must be positive")
        if self.mode not in _MODE_FIELDS:
            raise ThreatError(f"unknown perturbation mode {self.mode!r}")
        if self.mode == PACKETS and not self.allow_packets:
            raise ThreatError("packet perturbation is exploratory; set allow_packets to use it")

    @property
    def fields(self) -> tuple[str, ...]:
        return _MODE_FIELDS[self.mode]

    @property
    def is_identity(self) -> bool:
        inc = {"duration": self.duration_increments, "tot_bytes": self.byte_increments,
               "tot_packets": self.packet_increments}
        return all(max(inc[f]) == 0 for f in self.fields)

    def pinned(self, d: Dataset) -> "PerturbationRule":
        """Copy with the duration cap fixed to ``d``'s maximum if left open."""
        if self.max_flow_duration is not None:
            return self
        return replace(self, max_flow_duration=d.max_duration())

    @classmethod
    def identity(cls) -> "PerturbationRule":
        return cls(duration_increments=(0.0,), byte_increments=(0.0,))

    @classmethod
    def from_dict(cls, raw: dict | None) -> "PerturbationRule":
        raw = dict(raw or {})
        for key in ("duration_increments", "byte_increments", "packet_increments"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_dict(self) -> dict:
        return {
            "duration_increments": list(self.duration_increments),
            "byte_increments": list(self.byte_increments),
            "mtu": self.mtu,
            "max_flow_duration": self.max_flow_duration,
            "mode": self.mode,
            "packet_increments": list(self.packet_increments),
            "allow_packets": self.allow_packets,
        }


@dataclass
class AdvResult:
    n_eligible: int
    tpr_org: float
    tpr_adv: float
    success: bool
    violations: int = 0
    extra: dict = field(default_factory=dict)


def eligible(d: Dataset, e_idx: np.ndarray) -> np.ndarray:
    """Rows of ``e_idx`` that are malicious UDP flows from an internal source."""
    e_idx = np.asarray(e_idx, dtype=np.int64)
    mask = (d.class_id[e_idx] > 0) & (d.protocol[e_idx] == UDP) & d.src_internal[e_idx]
    return e_idx[mask]


_BASE = ("duration", "tot_bytes", "tot_packets")


@dataclass(frozen=True)
class _Limits:
    """Physical caps expressed in the dataset's column units."""

    duration_cap: float
    mtu: float
    bytes_scale: float
    packets_scale: float

    def byte_cap(self, packets_col: np.ndarray) -> np.ndarray:
        return self.mtu * (packets_col * self.packets_scale) / self.bytes_scale


def _limits(d: Dataset, r: PerturbationRule) -> _Limits:
    bf = d.spec.base_fields
    max_dur = r.max_flow_duration if r.max_flow_duration is not None else d.max_duration()
    return _Limits(max_dur / bf["duration"].scale, r.mtu, bf["tot_bytes"].scale, bf["tot_packets"].scale)


def _check_dependents(d: Dataset, rule: PerturbationRule) -> None:
    derived = d.spec.derived_features
    for base in rule.fields:
        orphans = [f for f in d.spec.dependents.get(base, []) if f not in derived]
        if orphans:
            raise ThreatError(f"perturbing {base} would change {orphans}, which have no recompute formula")


def perturb(d: Dataset, rows: np.ndarray, r: PerturbationRule, seed: int) -> Dataset:
    """Perturbed copy of ``d.take(rows)``."""
    _check_dependents(d, r)
    sub = d.take(rows)
    n = len(sub)
    features = sub.features.copy()
    if n == 0:
        return sub
    rng = np.random.default_rng(seed)
    spec = d.spec
    col = {name: i for i, name in enumerate(sub.feature_names)}
    scale = {b: spec.base_fields[b].scale for b in _BASE}
    raw = {b: features[:, col[spec.base_fields[b].column]].copy() for b in _BASE}
    new = {b: v.copy() for b, v in raw.items()}
    limits = _limits(d, r)

    if "tot_packets" in r.fields:
        new["tot_packets"] = raw["tot_packets"] + rng.choice(r.packet_increments, n) / scale["tot_packets"]
    if "duration" in r.fields:
        cand = raw["duration"] + rng.choice(r.duration_increments, n) / scale["duration"]
        new["duration"] = np.maximum(raw["duration"], np.minimum(cand, limits.duration_cap))
    if "tot_bytes" in r.fields:
        cand = raw["tot_bytes"] + rng.choice(r.byte_increments, n) / scale["tot_bytes"]
        new["tot_bytes"] = np.maximum(raw["tot_bytes"], np.minimum(cand, limits.byte_cap(new["tot_packets"])))

    changed = np.zeros(n, dtype=bool)
    for b, values in new.items():
        moved = values != raw[b]
        features[moved, col[spec.base_fields[b].column]] = values[moved]
        changed |= moved
    if changed.any() and spec.derived_rules:
        columns = {name: features[changed, i] for name, i in col.items()}
        sub_base = {b: features[changed, col[spec.base_fields[b].column]] * scale[b] for b in _BASE}
        for rule in spec.derived_rules:
            if rule.feature in col:
                features[changed, col[rule.feature]] = rule.formula.evaluate(sub_base, columns)
    return sub.with_features(features)


def verify_realizable(original: Dataset, perturbed: Dataset, r: PerturbationRule) -> np.ndarray:
    """Boolean mask of rows of ``perturbed`` that break a realizability constraint.

    Rows whose base fields are unchanged must be bit-identical to the original.
    The rule must carry the duration cap that ``perturb`` used (see
    ``PerturbationRule.pinned``), since ``original`` is usually a subset.
    """
    if len(original) != len(perturbed):
        raise ThreatError("original and perturbed sets are not row-aligned")
    if r.max_flow_duration is None and original.spec.max_flow_duration is None:
        raise ThreatError("max_flow_duration must be pinned before verifying")
    n = len(original)
    if n == 0:
        return np.zeros(0, dtype=bool)
    spec = original.spec
    limits = _limits(original, r)
    b0 = {b: original.column(spec.base_fields[b].column) for b in _BASE}
    b1 = {b: perturbed.column(spec.base_fields[b].column) for b in _BASE}
    bad = np.zeros(n, dtype=bool)
    changed = np.zeros(n, dtype=bool)
    for b in _BASE:
        bad |= b1[b] < b0[b]
        changed |= b1[b] != b0[b]
    bad |= (b1["tot_bytes"] != b0["tot_bytes"]) & (b1["tot_bytes"] > limits.byte_cap(b1["tot_packets"]))
    bad |= (b1["duration"] != b0["duration"]) & (b1["duration"] > limits.duration_cap)

    protected = {spec.base_fields[b].column for b in _BASE} | set(spec.derived_features)
    for j, name in enumerate(original.feature_names):
        same = original.features[:, j] == perturbed.features[:, j]
        if name in protected:
            bad |= ~changed & ~same
        else:
            bad |= ~same
    if changed.any():
        columns = {name: perturbed.features[changed, j] for j, name in enumerate(perturbed.feature_names)}
        sub_base = {b: v[changed] * spec.base_fields[b].scale for b, v in b1.items()}
        for rule in spec.derived_rules:
            if not perturbed.has_column(rule.feature):
                continue
            expected = rule.formula.evaluate(sub_base, columns)
            actual = perturbed.column(rule.feature)[changed]
            mismatch = ~np.isclose(actual, expected, rtol=1e-12, atol=0.0)
            bad[np.flatnonzero(changed)[mismatch]] = True
    return bad


def _tpr(p: TrainedPipeline, view: FeatureView) -> float:
    if len(view) == 0:
        return 0.0
    return float(np.mean(detect(p, view) == 1))


def assess_robustness(p: TrainedPipeline, clean: FeatureView, adv: FeatureView) -> AdvResult:
    if p.feature_set != ESSENTIAL or clean.feature_set != ESSENTIAL or adv.feature_set != ESSENTIAL:
        raise ThreatError("robustness is only defined for detectors on the Essential feature set")
    if len(clean) != len(adv) or clean.column_names != adv.column_names:
        raise ThreatError("clean and adversarial views are not row-aligned")
    tpr_org = _tpr(p, clean)
    tpr_adv = _tpr(p, adv)
    return AdvResult(len(clean), tpr_org, tpr_adv, tpr_adv < tpr_org)
