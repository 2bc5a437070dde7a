"""Nonparametric ROC estimation: ECDFs, the staircase curve, rank AUC and tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .bootstrap import BatchResult, CurveEstimator
from .core import (
    Method,
    NullKind,
    RocCurveEstimate,
    TestResult,
    TwoGroupSample,
    ValidationError,
)
from .numerics import normal_cdf, normal_quantile

__all__ = [
    "EmpiricalDistribution",
    "EmpiricalEstimator",
    "ecdf_eval",
    "empirical_auc",
    "empirical_quantile",
    "empirical_roc",
    "empirical_roc_at",
    "ks_test",
    "mann_whitney_test",
    "quantile_rank",
    "wilson_interval",
]

EXACT_MW_MAX_PAIRS = 400


@dataclass(frozen=True)
class EmpiricalDistribution:
    sorted_values: np.ndarray

    @classmethod
    def from_values(cls, values) -> "EmpiricalDistribution":
        arr = np.sort(np.asarray(values, dtype=float))
        if arr.size < 2:
            raise ValidationError("empirical distribution needs at least 2 values")
        arr.setflags(write=False)
        return cls(arr)

    @property
    def n(self) -> int:
        return int(self.sorted_values.size)


def ecdf_eval(dist: EmpiricalDistribution, t):
    """Fraction of values ``<= t`` (right-continuous)."""
    out = np.searchsorted(dist.sorted_values, t, side="right") / dist.n
    return float(out) if np.ndim(out) == 0 else out


def quantile_rank(p, n: int):
    """Smallest count ``m`` in 1..n with ``m / n > p``.

    The generalized inverse inf{t : F(t) > p} of an ECDF over ``n`` values is
    the ``m``-th order statistic.  The comparison is done exactly as the ECDF
    would be evaluated, so grid values such as ``p = 1/3`` land consistently.
    """
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(p_arr < 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("empirical quantile requires 0 <= p < 1")
    counts = np.arange(1, n + 1)
    m = np.argmax(counts[None, :] / n > p_arr[:, None], axis=1) + 1
    return m if np.ndim(p) else int(m[0])


def empirical_quantile(dist: EmpiricalDistribution, p):
    """Generalized inverse ``inf{t : F(t) > p}`` of the ECDF."""
    m = quantile_rank(p, dist.n)
    out = dist.sorted_values[np.asarray(m) - 1]
    return float(out) if np.ndim(out) == 0 else out


def empirical_roc_at(reference, comparator, grid) -> np.ndarray:
    """Empirical ROC ``F1(F0^{-1}(p))`` at each grid FPR."""
    ref = np.sort(np.asarray(reference, dtype=float))
    comp = np.sort(np.asarray(comparator, dtype=float))
    thresholds = ref[quantile_rank(np.asarray(grid, dtype=float), ref.size) - 1]
    return np.searchsorted(comp, thresholds, side="right") / comp.size


def empirical_roc(sample: TwoGroupSample) -> RocCurveEstimate:
    """Staircase ROC curve with one vertex per distinct pooled value.

    Tied reference/comparator values move both coordinates at once, giving a
    diagonal segment; the trapezoid area then equals the tie-adjusted
    Mann-Whitney proportion P(Y0 > Y1) + P(Y0 = Y1) / 2.
    """
    ref = np.sort(sample.reference)
    comp = np.sort(sample.comparator)
    cuts = np.unique(np.concatenate([ref, comp]))
    fpr = np.searchsorted(ref, cuts, side="right") / ref.size
    tpr = np.searchsorted(comp, cuts, side="right") / comp.size
    return RocCurveEstimate(
        fpr=np.concatenate(([0.0], fpr)),
        tpr=np.concatenate(([0.0], tpr)),
        method=Method.EMPIRICAL,
        thresholds=np.concatenate(([-np.inf], cuts)),
    )


def _twice_u_reference(sample: TwoGroupSample) -> tuple[int, np.ndarray]:
    # 2U = sum over reference values of (#comparator below + #comparator at or below),
    # which equals 2R - n0(n0 + 1) for the average-rank sum R.
    comp = np.sort(sample.comparator)
    below = np.searchsorted(comp, sample.reference, side="left")
    at_or_below = np.searchsorted(comp, sample.reference, side="right")
    two_u = int(below.sum() + at_or_below.sum())
    return two_u, np.concatenate([sample.reference, sample.comparator])


def empirical_auc(sample: TwoGroupSample) -> float:
    """Rank-based AUC, reported on the 0.5 <= AUC <= 1 scale.

    Algebraically this is ``(1 + |2(1 + (n0+1)/(2 n1) - R/(n0 n1)) - 1|) / 2``
    with ``R`` the average-rank sum of the reference group.  It is evaluated
    on the integer ``2U = 2R - n0(n0+1)`` so the result is the correctly
    rounded ratio of integers.
    """
    two_u, _ = _twice_u_reference(sample)
    denom = 2 * sample.n0 * sample.n1
    return max(two_u, denom - two_u) / denom


def wilson_interval(successes, trials, level: float = 0.95):
    """Wilson score interval for a binomial proportion (vectorized)."""
    x = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    if np.any(n < 1):
        raise ValueError("wilson_interval requires trials >= 1")
    if np.any(x < 0) or np.any(x > n):
        raise ValueError("successes must lie in [0, trials]")
    z = normal_quantile(0.5 + level / 2.0)
    denom = n + z * z
    centre = (x + z * z / 2.0) / denom
    half = z * np.sqrt(x * (n - x) / n + z * z / 4.0) / denom
    lo = np.clip(centre - half, 0.0, 1.0)
    hi = np.clip(centre + half, 0.0, 1.0)
    lo = np.where(x == 0, 0.0, lo)
    hi = np.where(x == n, 1.0, hi)
    if np.ndim(lo) == 0:
        return float(lo), float(hi)
    return lo, hi


def _mw_exact_cdf(n0: int, n1: int) -> np.ndarray:
    """Counts of each U value over all C(n0+n1, n0) rank arrangements."""
    # counts[m][k] holds the distribution for (m, k) group sizes, built column-wise.
    prev = [np.ones(1, dtype=np.int64) for _ in range(n1 + 1)]  # m = 0
    for m in range(1, n0 + 1):
        cur = [np.ones(1, dtype=np.int64)]  # k = 0: U is always 0
        for k in range(1, n1 + 1):
            size = m * k + 1
            out = np.zeros(size, dtype=np.int64)
            a = prev[k]  # largest value from the m-group: contributes k pairs
            out[k : k + a.size] += a
            b = cur[k - 1]
            out[: b.size] += b
            cur.append(out)
        prev = cur
    return prev[n1]


def mann_whitney_test(sample: TwoGroupSample) -> TestResult:
    """Two-sided Mann-Whitney test of the weak null AUC = 1/2.

    Exact when ``n0 * n1 <= 400`` and there are no ties, otherwise the normal
    approximation with tie and continuity corrections.  The statistic is the
    reference-group U (pairs with Y0 > Y1, ties counted one half).
    """
    two_u, pooled = _twice_u_reference(sample)
    u = two_u / 2.0
    n0, n1, n = sample.n0, sample.n1, sample.n
    has_ties = np.unique(pooled).size < n
    if n0 * n1 <= EXACT_MW_MAX_PAIRS and not has_ties:
        counts = _mw_exact_cdf(n0, n1)
        total = counts.sum()
        k = int(round(u))
        lower = counts[: k + 1].sum() / total
        upper = counts[k:].sum() / total
        p = min(1.0, 2.0 * min(lower, upper))
        ref = f"exact Mann-Whitney U distribution (n0={n0}, n1={n1})"
    else:
        _, tie_counts = np.unique(pooled, return_counts=True)
        tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
        var = n0 * n1 / 12.0 * ((n + 1) - tie_term)
        if var <= 0:
            p = 1.0
        else:
            z = max(abs(u - n0 * n1 / 2.0) - 0.5, 0.0) / math.sqrt(var)
            p = float(min(1.0, 2.0 * normal_cdf(-z)))
        ref = "normal approximation with tie and continuity corrections"
    return TestResult("mann-whitney", u, float(p), NullKind.WEAK, ref)


def ks_test(sample: TwoGroupSample) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test of the strong null ROC(p) = p."""
    ref = np.sort(sample.reference)
    comp = np.sort(sample.comparator)
    cuts = np.concatenate([ref, comp])
    f0 = np.searchsorted(ref, cuts, side="right") / ref.size
    f1 = np.searchsorted(comp, cuts, side="right") / comp.size
    d = float(np.max(np.abs(f0 - f1)))
    scale = math.sqrt(sample.n0 * sample.n1 / sample.n)
    p = float(special.kolmogorov(scale * d))
    return TestResult("kolmogorov-smirnov", d, min(max(p, 0.0), 1.0), NullKind.STRONG, "asymptotic Kolmogorov distribution")


class EmpiricalEstimator(CurveEstimator):
    """Empirical ROC at fixed FPR values, with a vectorized bootstrap path."""

    method = Method.EMPIRICAL

    def evaluate(self, reference, comparator, grid):
        return empirical_roc_at(reference, comparator, grid), None

    def evaluate_batch(self, sample, ref_idx, comp_idx, grid) -> BatchResult:
        # Work on dense ranks in the pooled sample: cumulative comparator
        # counts per replicate give F1 at every reference order statistic.
        cuts, inverse = np.unique(np.concatenate([sample.reference, sample.comparator]), return_inverse=True)
        k = cuts.size
        rank0 = inverse[: sample.n0]
        rank1 = inverse[sample.n0 :]
        b = ref_idx.shape[0]
        ref_ranks = np.sort(rank0[ref_idx], axis=1)
        offsets = (np.arange(b) * k)[:, None]
        c1 = np.bincount((rank1[comp_idx] + offsets).ravel(), minlength=b * k).reshape(b, k).cumsum(axis=1)
        m = quantile_rank(np.asarray(grid, dtype=float), sample.n0)
        thr = ref_ranks[:, m - 1]
        values = np.take_along_axis(c1, thr, axis=1) / sample.n1
        return BatchResult(values, np.zeros(b, dtype=bool))
