"""Two-sample group comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import mannwhitneyu

EXACT_MAX_TOTAL = 12


@dataclass(frozen=True)
class GroupComparison:
    metric_name: str
    time_hours: float
    group_a: str
    group_b: str
    n_a: int
    n_b: int
    u_statistic: float
    p_value: float
    method: str


def mann_whitney(a, b, method: str = "auto") -> tuple[float, float, str]:
    """Two-sided Mann-Whitney U test; returns ``(U, p, method_used)``.

    ``U`` counts pairs with ``a_i > b_j`` plus half the ties. ``auto``
    enumerates the exact null when ``n_a + n_b <= 12`` and there are no ties,
    and otherwise uses the normal approximation with tie and continuity
    corrections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = a[np.isfinite(a)], b[np.isfinite(b)]
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Mann-Whitney needs non-empty samples")
    if method == "auto":
        pooled = np.concatenate([a, b])
        tied = len(np.unique(pooled)) < len(pooled)
        method = "exact" if len(pooled) <= EXACT_MAX_TOTAL and not tied else "asymptotic"
    if method not in ("exact", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    pooled = np.concatenate([a, b])
    if method == "asymptotic" and np.all(pooled == pooled[0]):
        # zero variance: every arrangement is equivalent
        return len(a) * len(b) / 2.0, 1.0, method
    res = mannwhitneyu(a, b, alternative="two-sided", method=method, use_continuity=True)
    p = float(res.pvalue)
    return float(res.statistic), (1.0 if math.isnan(p) else min(1.0, p)), method


def significance_marker(p: float) -> str:
    if math.isnan(p):
        return ""
    if p < 0.001:
        return "**"
    if p < 0.05:
        return "*"
    return ""
