"""Descriptive and inferential statistics used by the reports.

All tests are two-sided.  Two-sample t statistics are signed as
``mean(a) - mean(b)``; Hedges' g uses the same orientation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_two_sided: float
    method: str  # "Student" or "Welch"


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    f_stat: float
    df_pair: tuple[int, int]
    p: float
    rmse: float
    slope: float
    intercept: float
    n: int


@dataclass(frozen=True)
class EffectSize:
    hedges_g: float


def _arr(x):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise StatsError("expected a 1-d sample")
    return a


def mean_sd(x: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n - 1) standard deviation."""
    a = _arr(x)
    if a.size < 2:
        raise StatsError("need at least two values for a sample SD")
    return float(a.mean()), float(a.std(ddof=1))


def p_value_t(t: float, df: float) -> float:
    """Two-sided p-value of Student's t via the regularised incomplete beta."""
    if not df > 0:
        raise StatsError("df must be positive")
    if math.isinf(t):
        return 0.0
    return float(min(1.0, special.betainc(0.5 * df, 0.5, df / (df + t * t))))


def _t_from_parts(diff, se, df, method):
    if se == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, float(df), 1.0, method)
        raise StatsError("zero variance in both groups with unequal means")
    t = diff / se
    return TTestResult(float(t), float(df), p_value_t(t, df), method)


def student_t_summary(m1, s1, n1, m2, s2, n2) -> TTestResult:
    """Pooled-variance two-sample t from (mean, SD, N) of each group."""
    if n1 < 2 or n2 < 2:
        raise StatsError("each group needs at least two observations")
    df = n1 + n2 - 2
    pooled = ((n1 - 1) * s1 * s1 + (n2 - 1) * s2 * s2) / df
    se = math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    return _t_from_parts(m1 - m2, se, df, "Student")


def welch_t_summary(m1, s1, n1, m2, s2, n2) -> TTestResult:
    if n1 < 2 or n2 < 2:
        raise StatsError("each group needs at least two observations")
    v1, v2 = s1 * s1 / n1, s2 * s2 / n2
    se2 = v1 + v2
    if se2 == 0.0:
        return _t_from_parts(m1 - m2, 0.0, n1 + n2 - 2, "Welch")
    df = se2 * se2 / (v1 * v1 / (n1 - 1) + v2 * v2 / (n2 - 1))
    return _t_from_parts(m1 - m2, math.sqrt(se2), df, "Welch")


def student_t(a, b) -> TTestResult:
    a, b = _arr(a), _arr(b)
    return student_t_summary(*mean_sd(a), a.size, *mean_sd(b), b.size)


def welch_t(a, b) -> TTestResult:
    """Welch's unequal-variance t with Welch-Satterthwaite df."""
    a, b = _arr(a), _arr(b)
    return welch_t_summary(*mean_sd(a), a.size, *mean_sd(b), b.size)


def hedges_g(m1, s1, n1, m2, s2, n2) -> EffectSize:
    """Bias-corrected standardised mean difference ``(m1 - m2) / pooled SD``."""
    if n1 < 2 or n2 < 2:
        raise StatsError("each group needs at least two observations")
    df = n1 + n2 - 2
    pooled = math.sqrt(((n1 - 1) * s1 * s1 + (n2 - 1) * s2 * s2) / df)
    if pooled == 0.0:
        raise StatsError("pooled SD is zero")
    j = 1.0 - 3.0 / (4.0 * df - 1.0)
    return EffectSize(j * (m1 - m2) / pooled)


def pearson(x, y) -> CorrelationResult:
    """Pearson r plus the least-squares line of y on x.

    ``f_stat`` is the regression F on (1, n - 2) df, which equals t**2 of
    the correlation test.  RMSE divides the residual sum of squares by n.
    """
    x, y = _arr(x), _arr(y)
    if x.size != y.size:
        raise StatsError("x and y differ in length")
    n = x.size
    if n < 3:
        raise StatsError("need at least three pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy, sxy = dx @ dx, dy @ dy, dx @ dy
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("zero variance in x or y")
    r = float(np.clip(sxy / math.sqrt(sxx * syy), -1.0, 1.0))
    slope = sxy / sxx
    intercept = y.mean() - slope * x.mean()
    resid = y - (intercept + slope * x)
    rmse = math.sqrt(float(resid @ resid) / n)
    df = n - 2
    if abs(r) == 1.0:
        f_stat, p = math.inf, 0.0
    else:
        t = r * math.sqrt(df / (1.0 - r * r))
        f_stat, p = t * t, p_value_t(t, df)
    return CorrelationResult(r, f_stat, (1, df), p, rmse, float(slope), float(intercept), n)


def chi_square_2x2(table) -> tuple[float, int, float]:
    """Uncorrected Pearson chi-square for a 2x2 contingency table."""
    obs = np.asarray(table, dtype=np.float64)
    if obs.shape != (2, 2):
        raise StatsError("expected a 2x2 table")
    if np.any(obs < 0):
        raise StatsError("negative count")
    rows, cols, total = obs.sum(axis=1), obs.sum(axis=0), obs.sum()
    if np.any(rows == 0) or np.any(cols == 0):
        raise StatsError("a row or column total is zero")
    expected = np.outer(rows, cols) / total
    chi2 = float(((obs - expected) ** 2 / expected).sum())
    return chi2, 1, float(special.chdtrc(1, chi2))


def zscore(x) -> np.ndarray:
    a = _arr(x)
    m, s = mean_sd(a)
    if s == 0.0:
        raise StatsError("zero standard deviation")
    return (a - m) / s


def silverman_bandwidth(x) -> float:
    a = _arr(x)
    return 1.06 * mean_sd(a)[1] * a.size ** (-0.2)


def kde_gaussian(x, grid, bandwidth: float | str = "auto") -> np.ndarray:
    """Gaussian kernel density of ``x`` evaluated on ``grid``."""
    a = _arr(x)
    if a.size < 2:
        raise StatsError("need at least two points for a density estimate")
    h = silverman_bandwidth(a) if bandwidth == "auto" else float(bandwidth)
    if not h > 0:
        raise StatsError("bandwidth must be positive")
    g = np.asarray(grid, dtype=np.float64)
    u = (g[:, None] - a[None, :]) / h
    return np.exp(-0.5 * u * u).sum(axis=1) / (a.size * h * math.sqrt(2 * math.pi))
