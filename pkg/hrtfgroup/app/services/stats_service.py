"""
Statistics service
Log-spectral distance and one-way ANOVA
"""
import logging
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc

from app.errors import InvalidArgumentError
from app.models.evaluation import AnovaResult

logger = logging.getLogger(__name__)


def _check_spectra(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise InvalidArgumentError(f"Spectra shapes differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidArgumentError("LSD input contains non-finite values")


def lsd(h_db: np.ndarray, h_hat_db: np.ndarray, k1: Optional[int] = None, k2: Optional[int] = None) -> float:
    """
    Log-spectral distance between two dB spectra

    sqrt(mean over k in [k1, k2] of (H(k) - H_hat(k))^2), bins inclusive;
    defaults to the full range.
    """
    a = np.asarray(h_db, dtype=np.float64)
    b = np.asarray(h_hat_db, dtype=np.float64)
    if a.ndim != 1:
        raise InvalidArgumentError("lsd expects 1-D spectra; use lsd_batch for stacks")
    _check_spectra(a, b)
    k1 = 0 if k1 is None else k1
    k2 = a.size - 1 if k2 is None else k2
    if not 0 <= k1 <= k2 < a.size:
        raise InvalidArgumentError(f"Bin range [{k1}, {k2}] outside [0, {a.size - 1}]")
    d = a[k1:k2 + 1] - b[k1:k2 + 1]
    return float(np.sqrt(np.mean(d * d)))


def lsd_batch(h_db: np.ndarray, h_hat_db: np.ndarray) -> np.ndarray:
    """Row-wise LSD over the last axis"""
    a = np.asarray(h_db, dtype=np.float64)
    b = np.asarray(h_hat_db, dtype=np.float64)
    _check_spectra(a, b)
    d = a - b
    return np.sqrt(np.mean(d * d, axis=-1))


def f_survival(f_stat: float, df_between: int, df_within: int) -> float:
    """P(F > f) via the regularized incomplete beta function"""
    if np.isinf(f_stat):
        return 0.0
    x = df_within / (df_within + df_between * f_stat)
    return float(np.clip(betainc(df_within / 2.0, df_between / 2.0, x), 0.0, 1.0))


def one_way_anova(*groups: Sequence[float]) -> AnovaResult:
    """
    One-way ANOVA across two or more groups

    F = MS_between / MS_within with df = (k - 1, N - k). Zero within-group
    variance gives F = 0 when all means are equal and an infinite F (flagged)
    otherwise.

    Raises:
        InvalidArgumentError: fewer than two groups, a group of fewer than two
            values, or non-finite values
    """
    if len(groups) < 2:
        raise InvalidArgumentError("one_way_anova needs at least two groups")
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    for i, a in enumerate(arrays):
        if a.size < 2:
            raise InvalidArgumentError(f"Group {i} has {a.size} values; at least 2 required")
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError(f"Group {i} contains non-finite values")

    k = len(arrays)
    n_total = sum(a.size for a in arrays)
    means = np.array([a.mean() for a in arrays])
    sizes = np.array([a.size for a in arrays], dtype=np.float64)
    grand = float(np.sum(sizes * means) / n_total)
    ss_between = float(np.sum(sizes * (means - grand) ** 2))
    ss_within = float(sum(np.sum((a - m) ** 2) for a, m in zip(arrays, means)))
    df_between, df_within = k - 1, n_total - k

    if ss_within == 0.0:
        if np.all(means == means[0]):
            return AnovaResult(0.0, df_between, df_within, 1.0)
        logger.warning("Zero within-group variance with unequal means; F is infinite")
        return AnovaResult(float("inf"), df_between, df_within, 0.0, infinite_f=True)

    f_stat = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(f_stat, df_between, df_within, f_survival(f_stat, df_between, df_within))
