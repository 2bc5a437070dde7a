"""Maximum-likelihood biexponential and binormal ROC fits.

Both families have closed-form pointwise intervals:

* biexponential, ROC(p) = 1 - (1 - p)**alpha with alpha = lambda1 / lambda0:
  a normal interval for log(alpha) with variance 1/n0 + 1/n1, pushed through
  the curve;
* binormal, ROC(p) = Phi(beta0 + beta1 * Phi^{-1}(p)): a Welch t interval for
  the mean difference, shifted by ``S0 * Phi^{-1}(p)`` and scaled by ``S1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EstimationError, Method, NullKind, RocCurveEstimate, TestResult, TwoGroupSample, materialize
from .numerics import chi2_sf, integrate_unit_interval, normal_cdf, normal_quantile, t_quantile, t_sf

__all__ = [
    "BiexpFit",
    "BinormFit",
    "DegenerateFitError",
    "biexp_auc",
    "biexp_curve",
    "biexp_curve_ci",
    "binorm_auc",
    "binorm_curve",
    "binorm_curve_ci",
    "exponential_lrt",
    "fit_biexponential",
    "fit_binormal",
    "normal_lrt",
    "param_biexp_estimate",
    "param_binorm_estimate",
    "welch_t_test",
]


class DegenerateFitError(EstimationError):
    """A group has zero variance, so the normal model is undefined."""


def _z(level: float) -> float:
    return normal_quantile(0.5 + level / 2.0)


def biexp_curve(alpha, p):
    """1 - (1 - p)**alpha, computed without cancellation for small p."""
    return -np.expm1(alpha * np.log1p(-np.asarray(p, dtype=float)))


def binorm_curve(beta0, beta1, p):
    return normal_cdf(beta0 + beta1 * normal_quantile(p))


@dataclass(frozen=True)
class BiexpFit:
    alpha: float
    lambda0_hat: float
    lambda1_hat: float
    n0: int
    n1: int


def _require_positive(sample: TwoGroupSample):
    if np.any(sample.reference <= 0) or np.any(sample.comparator <= 0):
        raise ValueError("exponential model requires positive support")


def fit_biexponential(sample: TwoGroupSample) -> BiexpFit:
    """Rate MLEs ``1 / mean`` per group and their ratio ``alpha``."""
    _require_positive(sample)
    m0 = float(np.mean(sample.reference))
    m1 = float(np.mean(sample.comparator))
    return BiexpFit(alpha=m0 / m1, lambda0_hat=1.0 / m0, lambda1_hat=1.0 / m1, n0=sample.n0, n1=sample.n1)


def biexp_curve_ci(fit: BiexpFit, p, level: float = 0.95, n0: int | None = None, n1: int | None = None):
    """Pointwise ``(lower, point, upper)`` for the biexponential curve at ``p``."""
    n0 = fit.n0 if n0 is None else n0
    n1 = fit.n1 if n1 is None else n1
    half = _z(level) * math.sqrt(1.0 / n0 + 1.0 / n1)
    log_alpha = math.log(fit.alpha)
    point = biexp_curve(fit.alpha, p)
    lower = biexp_curve(math.exp(log_alpha - half), p)
    upper = biexp_curve(math.exp(log_alpha + half), p)
    return np.clip(lower, 0.0, 1.0), point, np.clip(upper, 0.0, 1.0)


def biexp_auc(fit_or_alpha) -> float:
    alpha = getattr(fit_or_alpha, "alpha", fit_or_alpha)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return 1.0 - 1.0 / (alpha + 1.0)


def exponential_lrt(sample: TwoGroupSample, null_kind: NullKind = NullKind.STRONG) -> TestResult:
    """Likelihood-ratio test of equal exponential rates (alpha = 1).

    The statistic is the deviance ``2 (n0 log l0 + n1 log l1 - n log l)``,
    referred to chi-square with one degree of freedom.  Under the exponential
    model alpha = 1 is both the weak and the strong null.
    """
    _require_positive(sample)
    fit = fit_biexponential(sample)
    lam = sample.n / float(np.sum(sample.reference) + np.sum(sample.comparator))
    dev = 2.0 * (sample.n0 * math.log(fit.lambda0_hat) + sample.n1 * math.log(fit.lambda1_hat) - sample.n * math.log(lam))
    dev = max(dev, 0.0)
    return TestResult("exponential-lrt", dev, chi2_sf(dev, 1), null_kind, "chi-square, 1 df")


@dataclass(frozen=True)
class BinormFit:
    beta0: float
    beta1: float
    mu0_hat: float
    mu1_hat: float
    s0: float
    s1: float
    welch_df: float
    n0: int
    n1: int

    @property
    def delta(self) -> float:
        return self.mu0_hat - self.mu1_hat


def _sample_sd(values: np.ndarray, what: str) -> float:
    sd = float(np.std(values, ddof=1))
    if not sd > 0:
        raise DegenerateFitError(f"{what} group has zero variance")
    return sd


def fit_binormal(sample: TwoGroupSample) -> BinormFit:
    """Group means, sample SDs (divisor n - 1) and Welch-Satterthwaite df."""
    s0 = _sample_sd(sample.reference, "reference")
    s1 = _sample_sd(sample.comparator, "comparator")
    mu0 = float(np.mean(sample.reference))
    mu1 = float(np.mean(sample.comparator))
    v0 = s0 * s0 / sample.n0
    v1 = s1 * s1 / sample.n1
    df = (v0 + v1) ** 2 / (v0 * v0 / (sample.n0 - 1) + v1 * v1 / (sample.n1 - 1))
    return BinormFit(
        beta0=(mu0 - mu1) / s1,
        beta1=s0 / s1,
        mu0_hat=mu0,
        mu1_hat=mu1,
        s0=s0,
        s1=s1,
        welch_df=df,
        n0=sample.n0,
        n1=sample.n1,
    )


def binorm_curve_ci(fit: BinormFit, p, level: float = 0.95, n0: int | None = None, n1: int | None = None):
    """Pointwise ``(lower, point, upper)`` for the binormal curve at ``p``."""
    n0 = fit.n0 if n0 is None else n0
    n1 = fit.n1 if n1 is None else n1
    half = t_quantile(0.5 + level / 2.0, fit.welch_df) * math.sqrt(fit.s0**2 / n0 + fit.s1**2 / n1)
    centre = fit.delta + fit.s0 * normal_quantile(p)
    point = normal_cdf(centre / fit.s1)
    lower = normal_cdf((centre - half) / fit.s1)
    upper = normal_cdf((centre + half) / fit.s1)
    return lower, point, upper


def binorm_auc(fit_or_betas) -> float:
    """Area under the binormal curve by adaptive quadrature."""
    if isinstance(fit_or_betas, BinormFit):
        b0, b1 = fit_or_betas.beta0, fit_or_betas.beta1
    else:
        b0, b1 = fit_or_betas
    return integrate_unit_interval(lambda p: float(binorm_curve(b0, b1, p)))


def welch_t_test(sample: TwoGroupSample) -> TestResult:
    """Two-sided unequal-variance t test of equal means (weak null)."""
    fit = fit_binormal(sample)
    se = math.sqrt(fit.s0**2 / sample.n0 + fit.s1**2 / sample.n1)
    t = fit.delta / se
    p = min(1.0, 2.0 * float(t_sf(abs(t), fit.welch_df)))
    return TestResult("welch-t", t, p, NullKind.WEAK, f"Student t, {fit.welch_df:.4g} df (Welch-Satterthwaite)")


def normal_lrt(sample: TwoGroupSample) -> TestResult:
    """Likelihood-ratio test that both groups share one normal distribution.

    Uses maximum-likelihood variances (divisor n) throughout; substituting
    sample variances would break the chi-square(2) reference.
    """
    _sample_sd(sample.reference, "reference")
    _sample_sd(sample.comparator, "comparator")
    v0 = float(np.var(sample.reference))
    v1 = float(np.var(sample.comparator))
    v = float(np.var(np.concatenate([sample.reference, sample.comparator])))
    stat = sample.n * math.log(v) - sample.n0 * math.log(v0) - sample.n1 * math.log(v1)
    stat = max(stat, 0.0)
    return TestResult("normal-lrt", stat, chi2_sf(stat, 2), NullKind.STRONG, "chi-square, 2 df")


def param_biexp_estimate(sample: TwoGroupSample, grid, level: float = 0.95) -> tuple[RocCurveEstimate, BiexpFit]:
    fit = fit_biexponential(sample)
    lo, point, hi = biexp_curve_ci(fit, np.asarray(grid, dtype=float), level)
    return materialize(grid, point, Method.PARAM_BIEXP, lo, hi, level), fit


def param_binorm_estimate(sample: TwoGroupSample, grid, level: float = 0.95) -> tuple[RocCurveEstimate, BinormFit]:
    fit = fit_binormal(sample)
    lo, point, hi = binorm_curve_ci(fit, np.asarray(grid, dtype=float), level)
    return materialize(grid, point, Method.PARAM_BINORM, lo, hi, level), fit
