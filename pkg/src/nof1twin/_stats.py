"""Small shared statistics helpers (Welch two-sample intervals)."""

from __future__ import annotations

import numpy as np
from scipy.stats import t as t_dist


def welch_interval_from_moments(
    mean1: np.ndarray,
    var1: np.ndarray,
    n1: np.ndarray,
    mean0: np.ndarray,
    var0: np.ndarray,
    n0: np.ndarray,
    level: float = 0.95,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized Welch t interval for mean1 - mean0.

    Inputs are sample means, ddof-1 variances, and counts.  Where the
    interval is undefined (an arm smaller than 2, or zero pooled standard
    error) the bounds collapse onto the point estimate and the degenerate
    mask is set.
    """
    mean1, var1, n1 = np.asarray(mean1, float), np.asarray(var1, float), np.asarray(n1, float)
    mean0, var0, n0 = np.asarray(mean0, float), np.asarray(var0, float), np.asarray(n0, float)
    delta = mean1 - mean0
    degenerate = (n1 < 2) | (n0 < 2)
    v1 = np.where(degenerate, np.nan, var1 / np.maximum(n1, 1))
    v0 = np.where(degenerate, np.nan, var0 / np.maximum(n0, 1))
    se = np.sqrt(v1 + v0)
    degenerate = degenerate | ~(se > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        df = (v1 + v0) ** 2 / (v1**2 / (n1 - 1) + v0**2 / (n0 - 1))
        quant = t_dist.ppf(0.5 + level / 2.0, np.where(degenerate, 2.0, df))
        half = np.where(degenerate, 0.0, quant * se)
    return delta - half, delta + half, degenerate


def welch_interval(
    sample1: np.ndarray, sample0: np.ndarray, level: float = 0.95
) -> tuple[float, tuple[float, float], bool]:
    """Welch t interval for two samples; returns (delta, (lo, hi), degenerate)."""
    a = np.asarray(sample1, dtype=float)
    b = np.asarray(sample0, dtype=float)
    lo, hi, degen = welch_interval_from_moments(
        a.mean(),
        a.var(ddof=1) if len(a) > 1 else 0.0,
        len(a),
        b.mean(),
        b.var(ddof=1) if len(b) > 1 else 0.0,
        len(b),
        level,
    )
    return float(a.mean() - b.mean()), (float(lo), float(hi)), bool(degen)
