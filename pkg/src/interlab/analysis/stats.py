"""Correlation, bootstrap intervals and paired trend verdicts."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Correlation:
    r: Optional[float]
    defined: bool
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def pearson(a, b) -> Correlation:
    """Pearson r; ``defined`` is False when either side has zero variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("pearson needs two 1-d sequences of equal length")
    if a.size < 2:
        return Correlation(None, False, int(a.size))
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(np.sum(da * da)), np.sqrt(np.sum(db * db))
    if sa == 0 or sb == 0:
        return Correlation(None, False, int(a.size))
    return Correlation(float(np.sum(da * db) / (sa * sb)), True, int(a.size))


def bootstrap_ci(values, n_boot: int = 2000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("bootstrap needs at least one value")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    means = values[idx].mean(axis=1)
    tail = (1 - level) / 2
    lo, hi = np.quantile(means, [tail, 1 - tail])
    return float(lo), float(hi)


@dataclass(frozen=True)
class PairedTrend:
    """Paired differences tested against an expected sign.

    verdict: "pass" when the interval excludes 0 on the expected side,
    "fail" when it excludes 0 on the other side, "warn" otherwise.
    """

    name: str
    expected_sign: int
    n: int
    mean: float
    ci_low: float
    ci_high: float
    sign: int
    verdict: str

    def to_dict(self) -> dict:
        return asdict(self)


def paired_trend(name: str, diffs, expected_sign: int, n_boot: int = 2000, seed: int = 0) -> PairedTrend:
    diffs = np.asarray(diffs, dtype=np.float64)
    lo, hi = bootstrap_ci(diffs, n_boot=n_boot, seed=seed)
    mean = float(diffs.mean())
    if expected_sign > 0:
        verdict = "pass" if lo > 0 else ("fail" if hi < 0 else "warn")
    else:
        verdict = "pass" if hi < 0 else ("fail" if lo > 0 else "warn")
    return PairedTrend(name, expected_sign, int(diffs.size), mean, lo, hi, int(np.sign(mean)), verdict)


def histogram(values, bins: int = 20) -> dict:
    values = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(values, bins=bins)
    return {"counts": counts.tolist(), "edges": edges.tolist(), "max": float(values.max()),
            "median": float(np.median(values)), "n": int(values.size)}
