"""Confidence intervals, fits and small statistical helpers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with a two-sided confidence interval."""

    value: float
    ci_low: float
    ci_high: float
    n: int
    confidence: float = 0.95
    method: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def stderr(self) -> float:
        return float(self.extra.get("stderr", (self.ci_high - self.ci_low) / (2 * _z(self.confidence))))

    def to_dict(self) -> dict:
        return asdict(self)


def _z(confidence: float) -> float:
    return float(sps.norm.ppf(0.5 + confidence / 2))


def proportion(successes: int, n: int, confidence: float = 0.95) -> Estimate:
    """Binomial proportion with a Clopper-Pearson interval."""
    if n <= 0:
        raise ValueError("need at least one trial")
    k = int(successes)
    alpha = 1 - confidence
    lo = 0.0 if k == 0 else float(sps.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(sps.beta.ppf(1 - alpha / 2, k + 1, n - k))
    p = k / n
    return Estimate(p, lo, hi, n, confidence, "clopper-pearson",
                    {"successes": k, "stderr": math.sqrt(p * (1 - p) / n)})


def mean_estimate(values: Sequence[float], confidence: float = 0.95) -> Estimate:
    """Sample mean with a normal-approximation interval."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("need at least one value")
    finite = np.isfinite(x)
    if not finite.all():
        m = float(np.mean(x))
        return Estimate(m, m, m, n, confidence, "normal", {"non_finite": int((~finite).sum()),
                                                          "stderr": math.inf})
    m = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    if se == 0.0:
        return Estimate(m, m, m, n, confidence, "normal", {"stderr": 0.0})
    z = _z(confidence)
    return Estimate(m, m - z * se, m + z * se, n, confidence, "normal", {"stderr": se})


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n: int


def linear_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    """Least-squares line; R^2 is 1 for exact fits and nan with fewer than two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return LinearFit(math.nan, math.nan, math.nan, int(x.size))
    res = sps.linregress(x, y)
    r2 = float(res.rvalue ** 2) if np.isfinite(res.rvalue) else 1.0
    return LinearFit(float(res.slope), float(res.intercept), r2, int(x.size))


def log_tail_fit(x: Sequence[float], p: Sequence[float]) -> LinearFit:
    """Fit log p against x over the strictly positive probabilities."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = p > 0
    return linear_fit(x[keep], np.log(p[keep]))
