"""
Welch's unequal-variance t-test for w/o-vs-T3 comparisons.

t = (mean_a - mean_b) / sqrt(s1^2/n1 + s2^2/n2) with sample standard deviations,
Welch-Satterthwaite degrees of freedom, and an exact two-sided p-value from the
regularized incomplete beta: p = I_{df/(df+t^2)}(df/2, 1/2).
"""

import math

import numpy as np
from pydantic import BaseModel
from scipy.special import betainc


class TTestError(ValueError):
    pass


class TTestResult(BaseModel):
    mean_a: float
    mean_b: float
    s1: float
    s2: float
    n1: int
    n2: int
    t: float
    df: float
    p: float
    alpha: float
    significant: bool


def two_sided_p(t, df):
    if t == 0:
        return 1.0
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t)))))


def welch_t(a, b, alpha=0.05):
    """
    Two-sample Welch t-test of a against b.

    Both samples identical-valued with equal means gives t=0, p=1; zero variance
    on both sides with different means has no defined statistic and raises.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise TTestError(f"Welch t-test needs at least 2 values per sample, got {n1} and {n2}")

    mean_a, mean_b = float(a.mean()), float(b.mean())
    s1, s2 = float(a.std(ddof=1)), float(b.std(ddof=1))
    v1, v2 = s1 ** 2 / n1, s2 ** 2 / n2
    pooled = v1 + v2

    if pooled == 0:
        if mean_a != mean_b:
            raise TTestError(f"Both samples have zero variance and different means ({mean_a} vs {mean_b}); t is undefined")
        t, df, p = 0.0, float(n1 + n2 - 2), 1.0
    else:
        t = (mean_a - mean_b) / math.sqrt(pooled)
        df = pooled ** 2 / (v1 ** 2 / (n1 - 1) + v2 ** 2 / (n2 - 1))
        p = two_sided_p(t, df)

    return TTestResult(
        mean_a=mean_a, mean_b=mean_b, s1=s1, s2=s2, n1=n1, n2=n2,
        t=t, df=df, p=p, alpha=alpha, significant=p < alpha,
    )
