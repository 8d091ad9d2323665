"""Small shared statistics helpers (Student t tail, Welch's test)."""

import math

import numpy as np
from scipy.special import betainc


def t_sf(t, df):
    """One-sided survival function P(T > t) of Student's t via the regularized
    incomplete beta function."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if t == 0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return tail if t > 0 else 1.0 - tail


def t_pvalue_two_sided(t, df):
    return 2.0 * t_sf(abs(t), df)


def welch_t_test(a, b):
    """Welch's unequal-variance t-test; returns (t, df, two-sided p)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("welch_t_test needs at least 2 samples per group")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    denom = va + vb
    if denom == 0:
        t = 0.0 if a.mean() == b.mean() else math.inf
        return t, float(a.size + b.size - 2), 0.0 if t else 1.0
    t = (a.mean() - b.mean()) / math.sqrt(denom)
    df = denom ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return float(t), float(df), t_pvalue_two_sided(t, df)
