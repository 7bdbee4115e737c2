"""Jackknife estimators used by every report."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    n: int

    def within(self, target: float, k: float = 4.0) -> bool:
        return abs(self.value - target) <= k * self.se


def jackknife(data, stat=None) -> Estimate:
    """Leave-one-out estimate of ``stat`` over the first axis of ``data``.

    With ``stat=None`` the statistic is the mean, whose jackknife SE equals the
    usual ``std / sqrt(n)`` and is computed in closed form.  A general ``stat``
    maps an array of rows to a float and is re-evaluated on every deletion.
    """
    x = np.asarray(data, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("jackknife needs at least two replicates")
    if stat is None:
        if np.all(x == x[0]):
            return Estimate(float(x[0]), 0.0, n)
        mean = x.mean(axis=0)
        se = x.std(axis=0, ddof=1) / np.sqrt(n)
        return Estimate(float(mean), float(se), n)
    full = float(stat(x))
    loo = np.array([stat(np.delete(x, i, axis=0)) for i in range(n)])
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return Estimate(full, float(se), n)


def jackknife_ratio(num, den) -> Estimate:
    """Self-normalised ratio ``sum num / sum den`` with a closed-form leave-one-out SE."""
    a = np.asarray(num, dtype=float)
    b = np.asarray(den, dtype=float)
    n = len(a)
    if n < 2:
        raise ValueError("jackknife needs at least two replicates")
    A, B = a.sum(), b.sum()
    loo = (A - a) / (B - b)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return Estimate(float(A / B), float(se), n)


def jackknife_cov(x, y) -> tuple[float, float]:
    """Unbiased covariance of paired samples and its jackknife SE (closed form)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("covariance jackknife needs at least three replicates")
    sx, sy, sxy = x.sum(), y.sum(), (x * y).sum()

    def cov(sx, sy, sxy, m):
        return (sxy - sx * sy / m) / (m - 1)

    full = cov(sx, sy, sxy, n)
    loo = cov(sx - x, sy - y, sxy - x * y, n - 1)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(full), float(se)


def ess(weights) -> float:
    """Kish effective sample size."""
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w * w))


def loglog_slope(eps, values) -> float:
    """Least-squares slope of ``log values`` against ``log eps``."""
    return float(np.polyfit(np.log(np.asarray(eps, dtype=float)),
                            np.log(np.asarray(values, dtype=float)), 1)[0])


def loglog_slope_se(eps, samples) -> Estimate:
    """Slope of ``log mean(samples)`` vs ``log eps`` with a jackknife SE over replicates.

    ``samples`` has replicates on the first axis and one column per scale.
    """
    s = np.asarray(samples, dtype=float)
    n = len(s)
    tot = s.sum(axis=0)
    full = loglog_slope(eps, tot / n)
    loo = np.array([loglog_slope(eps, (tot - s[i]) / (n - 1)) for i in range(n)])
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return Estimate(full, float(se), n)
