"""Trial aggregation and Welch's unequal-variance t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

A_BETTER, B_BETTER, INCONCLUSIVE = "A_better", "B_better", "inconclusive"
METRIC_ALIASES = {"acc": "acc_mal"}


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class Aggregate:
    metric: str
    n: int
    mean: float
    std: float
    min: float
    max: float

    def cell(self, digits: int = 3) -> str:
        return f"{self.mean:.{digits}f} ({self.std:.{digits}f})"


def aggregate(values: Iterable[float], metric: str = "") -> Aggregate:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise StatsError(f"cannot aggregate an empty sample{f' of {metric}' if metric else ''}")
    if not np.all(np.isfinite(v)):
        raise StatsError("samples must be finite")
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    mean = float(min(max(v.mean(), v.min()), v.max()))  # guard the invariant against rounding
    return Aggregate(metric, int(v.size), mean, std, float(v.min()), float(v.max()))


# -- t distribution --------------------------------------------------------------

_EPS = 1e-16
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b) by the modified Lentz method."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, 20_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise StatsError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise StatsError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` (real) degrees of freedom."""
    if df <= 0:
        raise StatsError("degrees of freedom must be positive")
    if not math.isfinite(t):
        return 0.0
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t))))


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t > 0 else tail


# -- Welch -----------------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    alpha: float
    verdict: str
    n_a: int = 0
    n_b: int = 0
    mean_a: float = float("nan")
    mean_b: float = float("nan")

    __test__ = False  # not a pytest class


def welch(a: Iterable[float], b: Iterable[float], alpha: float = 0.05) -> TestResult:
    """Two-sided Welch t-test; the verdict follows the sign of t when p < alpha."""
    a = np.asarray(list(a), dtype=np.float64)
    b = np.asarray(list(b), dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise StatsError(f"insufficient samples: need at least 2 per group, got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise StatsError("samples must be finite")
    if not 0 < alpha < 1:
        raise StatsError("alpha must lie in (0, 1)")
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)) / a.size, float(b.var(ddof=1)) / b.size
    se2 = va + vb
    common = dict(n_a=int(a.size), n_b=int(b.size), mean_a=ma, mean_b=mb, alpha=alpha)
    if se2 == 0.0:
        if ma == mb:
            return TestResult(0.0, float(a.size + b.size - 2), 1.0, verdict=INCONCLUSIVE, **common)
        # zero spread with different means: the difference is certain
        t = math.copysign(math.inf, ma - mb)
        return TestResult(t, float(a.size + b.size - 2), 0.0, verdict=A_BETTER if t > 0 else B_BETTER, **common)
    t = (ma - mb) / math.sqrt(se2)
    # Welch-Satterthwaite on the variance shares, which stays finite for tiny variances
    wa, wb = va / se2, vb / se2
    df = 1.0 / (wa * wa / (a.size - 1) + wb * wb / (b.size - 1))
    p = t_sf_two_sided(t, df)
    verdict = INCONCLUSIVE if p >= alpha or t == 0 else (A_BETTER if t > 0 else B_BETTER)
    return TestResult(t, df, p, verdict=verdict, **common)


# -- store comparisons -------------------------------------------------------------


def parse_key(text: str | Mapping[str, str]) -> dict[str, str]:
    """``"pipeline=BMD,algorithm=HGB"`` -> {"pipeline": "BMD", "algorithm": "HGB"}."""
    if isinstance(text, Mapping):
        return {k: str(v) for k, v in text.items()}
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise StatsError(f"bad key component {part!r}; expected field=value")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def samples(records, key: Mapping[str, str], metric: str) -> dict[int, float]:
    """Metric values of the non-skipped records matching ``key``, indexed by trial."""
    metric = METRIC_ALIASES.get(metric, metric)
    out: dict[int, float] = {}
    for r in records:
        if r.skipped or any(str(getattr(r, k, None)) != v for k, v in key.items()):
            continue
        if metric not in r.metrics:
            continue
        if r.trial in out:
            raise StatsError(f"key {dict(key)} matches more than one record for trial {r.trial}; narrow it")
        out[r.trial] = float(r.metrics[metric])
    return out


def compare_methods(store, key_a, key_b, metric: str, alpha: float = 0.05) -> TestResult:
    """Welch test between two record groups drawn from the same trials."""
    records = store.records if hasattr(store, "records") else store
    ka, kb = parse_key(key_a), parse_key(key_b)
    sa, sb = samples(records, ka, metric), samples(records, kb, metric)
    if len(sa) < 2 or len(sb) < 2:
        raise StatsError(f"insufficient samples: {len(sa)} and {len(sb)} trials (need at least 2 each)")
    if set(sa) != set(sb):
        raise StatsError("fairness violation: the two keys were evaluated on different trial sets")
    trials = sorted(sa)
    return welch([sa[t] for t in trials], [sb[t] for t in trials], alpha)
