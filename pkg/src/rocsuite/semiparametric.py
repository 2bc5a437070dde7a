"""Semiparametric ROC models fitted to pairwise placement indicators.

Each reference observation ``Y0i`` gets a placement value ``p_i = F0n(Y0i)``
and each pair contributes ``U_ij = I(Y1j <= Y0i)`` with E[U_ij | p] = ROC(p).
Two binomial-regression models are fitted to these indicators:

* biexponential, log E[1 - U | p] = alpha * log(1 - p) (log link, no intercept);
* binormal, Phi^{-1}(E[U | p]) = beta0 + beta1 * Phi^{-1}(p) (probit link).

Within a row the placement is constant, so the n0 x n1 sums collapse to one
binomial count ``sum_j U_ij`` out of ``n1`` per row.  The solvers work on that
grouped form with a leading batch axis, which lets bootstrap refits run as
one vectorized solve.  Rows whose placement equals 1 (the reference maximum)
are excluded because log(1 - p) and Phi^{-1}(p) are infinite there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from .bootstrap import BandConfig, BatchResult, CurveEstimator, band_from_replicates, bootstrap_replicates
from .core import EstimationError, Method, NullKind, RocCurveEstimate, TestResult, TwoGroupSample
from .numerics import chi2_sf, normal_cdf, normal_quantile
from .parametric import biexp_curve

__all__ = [
    "ConvergenceError",
    "InsufficientDataError",
    "PairwiseDesign",
    "SemiEstimator",
    "SemiFit",
    "SemiInference",
    "SeparationError",
    "build_pairwise_design",
    "fit_semi_biexponential",
    "fit_semi_binormal",
    "semi_curve",
    "semi_inference",
]

SCORE_TOL = 1e-10  # per usable pair
RESIDUAL_FLOOR = 1e-8  # per pair; accepted once the root is bracketed to rounding
MAX_ITER = 200
ALPHA_BOUNDS = (1e-6, 1e6)
BETA_LIMIT = 1e3
MIN_USABLE_ROWS = 3

_OK, _RUNNING, _SEPARATED, _NOT_CONVERGED, _SINGULAR = 0, 1, 2, 3, 4


class InsufficientDataError(EstimationError):
    """Too few reference rows remain once the maximum is excluded."""


class SeparationError(EstimationError):
    """The indicators are perfectly separated; the estimate diverges."""


class ConvergenceError(EstimationError):
    """The solver hit its iteration limit."""

    def __init__(self, message: str, iterations: int, gradient_norm: float):
        super().__init__(message)
        self.iterations = iterations
        self.gradient_norm = gradient_norm


@dataclass(frozen=True)
class PairwiseDesign:
    """Placement values and pairwise indicators, stored one row per reference value.

    ``placement[i]`` is F0n(Y0i) and ``u_count[i]`` is the number of comparator
    values ``<= Y0i``; the n0 x n1 matrices are available on demand.
    """

    placement: np.ndarray
    u_count: np.ndarray
    included: np.ndarray
    reference: np.ndarray
    comparator: np.ndarray

    @property
    def n0(self) -> int:
        return int(self.placement.size)

    @property
    def n1(self) -> int:
        return int(self.comparator.size)

    @property
    def usable_rows(self) -> int:
        return int(self.included.sum())

    @property
    def usable_pairs(self) -> int:
        return self.usable_rows * self.n1

    def placement_matrix(self) -> np.ndarray:
        return np.repeat(self.placement[:, None], self.n1, axis=1)

    def indicator_matrix(self) -> np.ndarray:
        """U[i, j] = I(Y1j <= Y0i)."""
        return (self.comparator[None, :] <= self.reference[:, None]).astype(np.int8)


def build_pairwise_design(sample: TwoGroupSample) -> PairwiseDesign:
    """Placements, indicator counts and the mask dropping rows with placement 1."""
    ref = np.asarray(sample.reference, dtype=float)
    comp = np.asarray(sample.comparator, dtype=float)
    counts = np.searchsorted(np.sort(ref), ref, side="right")
    included = counts < ref.size
    if included.sum() < MIN_USABLE_ROWS:
        raise InsufficientDataError(
            f"only {int(included.sum())} usable reference rows after excluding the maximum (need {MIN_USABLE_ROWS})"
        )
    u_count = np.searchsorted(np.sort(comp), ref, side="right")
    return PairwiseDesign(counts / ref.size, u_count, included, ref, comp)


@dataclass(frozen=True)
class SemiFit:
    family: str
    params: tuple
    converged: bool
    iterations: int
    final_gradient_norm: float
    tolerance: float
    usable_pairs: int
    flags: tuple = ()

    @property
    def alpha(self) -> float:
        if self.family != "biexp":
            raise AttributeError("alpha is only defined for the biexponential model")
        return self.params[0]

    @property
    def beta(self) -> tuple:
        if self.family != "binorm":
            raise AttributeError("beta is only defined for the binormal model")
        return self.params


# --- grouped form ------------------------------------------------------------


@dataclass
class _Grouped:
    """Batch of designs: weight = rows sharing a placement, s = U count per row."""

    weight: np.ndarray
    placement: np.ndarray
    successes: np.ndarray
    n1: int

    @property
    def pairs(self) -> np.ndarray:
        return self.n1 * self.weight.sum(axis=1)


def _grouped_from_design(design: PairwiseDesign) -> _Grouped:
    keep = design.included
    p = design.placement[keep][None, :]
    s = design.u_count[keep][None, :].astype(float)
    return _Grouped(np.ones_like(p), p, s, design.n1)


def _grouped_from_indices(sample: TwoGroupSample, ref_idx, comp_idx) -> _Grouped:
    cuts, inverse = np.unique(np.concatenate([sample.reference, sample.comparator]), return_inverse=True)
    k = cuts.size
    b = ref_idx.shape[0]
    offsets = (np.arange(b) * k)[:, None]
    rank0 = inverse[: sample.n0][ref_idx] + offsets
    rank1 = inverse[sample.n0 :][comp_idx] + offsets
    c0 = np.bincount(rank0.ravel(), minlength=b * k).reshape(b, k)
    cum0 = c0.cumsum(axis=1)
    cum1 = np.bincount(rank1.ravel(), minlength=b * k).reshape(b, k).cumsum(axis=1)
    n0 = ref_idx.shape[1]
    weight = np.where(cum0 < n0, c0, 0).astype(float)
    placement = np.where(weight > 0, cum0 / n0, 0.5)
    return _Grouped(weight, placement, cum1.astype(float), comp_idx.shape[1])


def _rowsum(a: np.ndarray) -> np.ndarray:
    return np.add.reduce(a, axis=1)


# --- biexponential -----------------------------------------------------------


def _biexp_score(alpha, g: _Grouped, rows):
    x = np.log1p(-g.placement[rows])
    ax = alpha[:, None] * x
    mu = np.exp(ax)
    one_minus = np.maximum(-np.expm1(ax), 1e-12)
    v = g.n1 - g.successes[rows]
    w = g.weight[rows]
    score = _rowsum(w * x * (v - g.n1 * mu) / one_minus)
    slope = _rowsum(w * x * x * mu * (v - g.n1) / (one_minus * one_minus))
    return score, slope


def _solve_biexp(g: _Grouped, start: np.ndarray):
    nb = g.weight.shape[0]
    status = np.full(nb, _RUNNING)
    iters = np.zeros(nb, dtype=int)
    gnorm = np.full(nb, np.nan)
    tol = SCORE_TOL * g.pairs
    floor = RESIDUAL_FLOOR * g.pairs

    v_total = _rowsum(g.weight * (g.n1 - g.successes))
    u_total = _rowsum(g.weight * g.successes)
    all_rows = np.arange(nb)
    s_lo, _ = _biexp_score(np.full(nb, ALPHA_BOUNDS[0]), g, all_rows)
    s_hi, _ = _biexp_score(np.full(nb, ALPHA_BOUNDS[1]), g, all_rows)
    separated = (v_total == 0) | (u_total == 0) | ~(s_lo > 0) | ~(s_hi < 0)
    status[separated] = _SEPARATED

    lo = np.full(nb, math.log(ALPHA_BOUNDS[0]))
    hi = np.full(nb, math.log(ALPHA_BOUNDS[1]))
    theta = np.clip(np.log(start), lo, hi)
    for it in range(MAX_ITER + 1):
        rows = np.flatnonzero(status == _RUNNING)
        if rows.size == 0:
            break
        th = theta[rows]
        alpha = np.exp(th)
        score, slope = _biexp_score(alpha, g, rows)
        gnorm[rows] = np.abs(score)
        iters[rows] = it
        bracketed = (hi[rows] - lo[rows]) <= 4 * np.spacing(np.abs(hi[rows]) + 1.0)
        done = (np.abs(score) <= tol[rows]) | (bracketed & (np.abs(score) <= floor[rows]))
        status[rows[done]] = _OK
        if it == MAX_ITER:
            break
        live = ~done
        rows, th, alpha, score, slope = rows[live], th[live], alpha[live], score[live], slope[live]
        # The score is decreasing in alpha, so its sign brackets the root.
        lo[rows] = np.where(score > 0, th, lo[rows])
        hi[rows] = np.where(score < 0, th, hi[rows])
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = alpha - score / slope
            proposal = np.where(newton > 0, np.log(newton), -np.inf)
        mid = 0.5 * (lo[rows] + hi[rows])
        ok = np.isfinite(proposal) & (proposal > lo[rows]) & (proposal < hi[rows])
        theta[rows] = np.where(ok, proposal, mid)
    status[status == _RUNNING] = _NOT_CONVERGED
    return np.exp(theta)[:, None], status, iters, gnorm


# --- binormal ----------------------------------------------------------------

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _binorm_terms(beta, x, w, s, n1, derivatives=True):
    z = beta[:, 0:1] + beta[:, 1:2] * x
    log_cdf = special.log_ndtr(z)
    log_sf = special.log_ndtr(-z)
    loglik = _rowsum(w * (s * log_cdf + (n1 - s) * log_sf))
    if not derivatives:
        return loglik
    log_pdf = -0.5 * z * z - _LOG_SQRT_2PI
    lam_p = np.exp(log_pdf - log_cdf)  # phi / Phi
    lam_m = np.exp(log_pdf - log_sf)  # phi / (1 - Phi)
    dz = s * lam_p - (n1 - s) * lam_m
    hz = -s * lam_p * (z + lam_p) - (n1 - s) * lam_m * (lam_m - z)
    grad = np.stack([_rowsum(w * dz), _rowsum(w * dz * x)], axis=1)
    h00 = _rowsum(w * hz)
    h01 = _rowsum(w * hz * x)
    h11 = _rowsum(w * hz * x * x)
    return loglik, grad, h00, h01, h11


def _solve_binorm(g: _Grouped, start: np.ndarray):
    nb = g.weight.shape[0]
    status = np.full(nb, _RUNNING)
    iters = np.zeros(nb, dtype=int)
    gnorm = np.full(nb, np.nan)
    tol = SCORE_TOL * g.pairs
    x_all = special.ndtri(g.placement)
    u_total = _rowsum(g.weight * g.successes)
    status[(u_total == 0) | (u_total == g.pairs)] = _SEPARATED
    beta = np.array(start, dtype=float, copy=True)

    for it in range(MAX_ITER + 1):
        rows = np.flatnonzero(status == _RUNNING)
        if rows.size == 0:
            break
        x, w, s = x_all[rows], g.weight[rows], g.successes[rows]
        ll, grad, h00, h01, h11 = _binorm_terms(beta[rows], x, w, s, g.n1)
        norm = np.hypot(grad[:, 0], grad[:, 1])
        gnorm[rows] = norm
        iters[rows] = it
        done = norm <= tol[rows]
        status[rows[done]] = _OK
        if it == MAX_ITER:
            break
        live = ~done
        rows, x, w, s = rows[live], x[live], w[live], s[live]
        ll, grad, h00, h01, h11 = ll[live], grad[live], h00[live], h01[live], h11[live]
        det = h00 * h11 - h01 * h01
        singular = ~(det > 1e-12 * (h00 * h00 + h11 * h11 + 1e-300)) | ~(h00 < 0)
        status[rows[singular]] = _SINGULAR
        keep = ~singular
        rows, x, w, s, ll = rows[keep], x[keep], w[keep], s[keep], ll[keep]
        grad, h00, h01, h11, det = grad[keep], h00[keep], h01[keep], h11[keep], det[keep]
        # Newton direction -H^{-1} g for the concave log-likelihood.
        step = np.stack(
            [-(h11 * grad[:, 0] - h01 * grad[:, 1]) / det, -(-h01 * grad[:, 0] + h00 * grad[:, 1]) / det], axis=1
        )
        t = np.ones(rows.size)
        pending = np.arange(rows.size)
        for _ in range(60):
            cand = beta[rows[pending]] + t[pending, None] * step[pending]
            ll_new = _binorm_terms(cand, x[pending], w[pending], s[pending], g.n1, derivatives=False)
            worse = ~(ll_new >= ll[pending] - 1e-12 * (1.0 + np.abs(ll[pending])))
            accepted = pending[~worse]
            beta[rows[accepted]] = cand[~worse]
            pending = pending[worse]
            if pending.size == 0:
                break
            t[pending] *= 0.5
        diverged = np.abs(beta[rows]).max(axis=1) > BETA_LIMIT
        status[rows[diverged]] = _SEPARATED
    status[status == _RUNNING] = _NOT_CONVERGED
    return beta, status, iters, gnorm


def _raise_for(status: int, iterations: int, gnorm: float, family: str):
    if status == _SEPARATED:
        raise SeparationError(f"semiparametric {family} fit: indicators are separated, estimate diverges")
    if status == _SINGULAR:
        raise EstimationError(f"semiparametric {family} fit: information matrix is singular")
    if status == _NOT_CONVERGED:
        raise ConvergenceError(
            f"semiparametric {family} fit did not converge in {iterations} iterations (|G| = {gnorm:.3g})",
            iterations,
            gnorm,
        )


def _single(design: PairwiseDesign, family: str, start) -> SemiFit:
    g = _grouped_from_design(design)
    if family == "biexp":
        params, status, iters, gnorm = _solve_biexp(g, np.array([start if start else 1.0], dtype=float))
    else:
        params, status, iters, gnorm = _solve_binorm(g, np.array([start if start else (0.0, 1.0)], dtype=float))
    _raise_for(int(status[0]), int(iters[0]), float(gnorm[0]), family)
    flags = ()
    if family == "binorm" and params[0, 1] <= 0:
        flags = ("beta1 <= 0: curve violates the chosen orientation convention",)
    return SemiFit(
        family=family,
        params=tuple(float(v) for v in params[0]),
        converged=True,
        iterations=int(iters[0]),
        final_gradient_norm=float(gnorm[0]),
        tolerance=float(SCORE_TOL * g.pairs[0]),
        usable_pairs=design.usable_pairs,
        flags=flags,
    )


def fit_semi_biexponential(design: PairwiseDesign, start: Optional[float] = None) -> SemiFit:
    """Solve the log-link estimating equation for ``alpha``.

    The score is strictly decreasing in ``alpha``, so Newton steps are taken
    in ``log(alpha)`` and fall back to bisection of the sign bracket whenever
    they would leave it.

    Raises
    ------
    SeparationError
        If every (or no) comparator lies above every usable reference value,
        or the score does not change sign on [1e-6, 1e6].
    ConvergenceError
        If the iteration limit is reached.
    """
    return _single(design, "biexp", start)


def fit_semi_binormal(design: PairwiseDesign, start: Optional[tuple] = None) -> SemiFit:
    """Solve the probit estimating equations for ``(beta0, beta1)``.

    The equations are the score of a concave binomial log-likelihood; Newton
    steps with step halving on that likelihood start from ``(0, 1)``.
    """
    return _single(design, "binorm", start)


def semi_curve(fit: SemiFit, p):
    if fit.family == "biexp":
        return biexp_curve(fit.params[0], p)
    b0, b1 = fit.params
    return normal_cdf(b0 + b1 * normal_quantile(p))


class SemiEstimator(CurveEstimator):
    """Semiparametric curve estimator for the bootstrap engine.

    Bootstrap refits are solved jointly from the grouped counts of every
    replicate, warm-started at the fit on the original sample.
    """

    def __init__(self, family: str):
        if family not in ("biexp", "binorm"):
            raise ValueError("family must be 'biexp' or 'binorm'")
        self.family = family
        self.method = Method.SEMI_BIEXP if family == "biexp" else Method.SEMI_BINORM
        self.n_params = 1 if family == "biexp" else 2

    def fit(self, reference, comparator, start=None) -> SemiFit:
        design = build_pairwise_design(TwoGroupSample(np.asarray(reference), np.asarray(comparator)))
        return _single(design, self.family, start)

    def evaluate(self, reference, comparator, grid):
        fit = self.fit(reference, comparator)
        return semi_curve(fit, np.asarray(grid, dtype=float)), np.asarray(fit.params)

    def evaluate_batch(self, sample, ref_idx, comp_idx, grid) -> BatchResult:
        original = self.fit(sample.reference, sample.comparator)
        g = _grouped_from_indices(sample, ref_idx, comp_idx)
        nb = ref_idx.shape[0]
        start = np.tile(np.asarray(original.params, dtype=float), (nb, 1))
        solve = _solve_biexp if self.family == "biexp" else _solve_binorm
        params, status, _, _ = solve(g, start[:, 0] if self.family == "biexp" else start)
        failed = (status != _OK) | (_rowsum(g.weight) < MIN_USABLE_ROWS)
        grid = np.asarray(grid, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            if self.family == "biexp":
                values = biexp_curve(params[:, 0:1], grid[None, :])
            else:
                values = normal_cdf(params[:, 0:1] + params[:, 1:2] * normal_quantile(grid)[None, :])
        values[failed] = np.nan
        params = params.copy()
        params[failed] = np.nan
        return BatchResult(values, failed, params)


class SemiInference(NamedTuple):
    curve: RocCurveEstimate
    weak: TestResult
    strong: TestResult
    fit: SemiFit


def semi_inference(sample: TwoGroupSample, family: str, config: BandConfig) -> SemiInference:
    """Bootstrap band plus Wald tests built from the bootstrap replicates.

    Biexponential: a Wald test of log(alpha) = 0 on the bootstrap standard
    error serves both nulls.  Binormal: the weak null beta0 = 0 uses the
    bootstrap standard error of beta0; the strong null (beta0, beta1) = (0, 1)
    uses a 2-df Wald statistic on (beta0, log beta1) with the bootstrap covariance.
    """
    estimator = SemiEstimator(family)
    fit = estimator.fit(sample.reference, sample.comparator)
    point = semi_curve(fit, config.fpr_grid)
    reps = bootstrap_replicates(sample, estimator, config)
    curve = band_from_replicates(np.asarray(point, dtype=float), reps, config, estimator.method)
    boot = reps.params[~reps.failed]
    if family == "biexp":
        se = float(np.std(np.log(boot[:, 0]), ddof=1))
        stat = (math.log(fit.alpha) / se) ** 2 if se > 0 else math.inf
        p = chi2_sf(stat, 1) if math.isfinite(stat) else 0.0
        ref = "chi-square, 1 df (Wald on log alpha, bootstrap SE)"
        weak = TestResult("semi-biexp-wald", stat, float(p), NullKind.WEAK, ref)
        strong = TestResult("semi-biexp-wald", stat, float(p), NullKind.STRONG, ref)
    else:
        b = np.asarray(fit.params)
        se0 = float(np.std(boot[:, 0], ddof=1))
        w1 = (b[0] / se0) ** 2 if se0 > 0 else math.inf
        # beta1 behaves like a scale ratio; its log is closer to normal
        pos = boot[boot[:, 1] > 0]
        if b[1] > 0 and pos.shape[0] > 2:
            theta = np.column_stack([pos[:, 0], np.log(pos[:, 1])])
            d = np.array([b[0], math.log(b[1])])
            try:
                w2 = float(d @ np.linalg.solve(np.cov(theta, rowvar=False, ddof=1), d))
            except np.linalg.LinAlgError:
                w2 = math.inf
        else:
            w2 = math.inf
        p1 = chi2_sf(w1, 1) if math.isfinite(w1) else 0.0
        p2 = chi2_sf(max(w2, 0.0), 2) if math.isfinite(w2) else 0.0
        weak = TestResult("semi-binorm-wald", w1, float(p1), NullKind.WEAK, "chi-square, 1 df (Wald on beta0, bootstrap SE)")
        strong = TestResult(
            "semi-binorm-wald", w2, float(p2), NullKind.STRONG, "chi-square, 2 df (Wald on (beta0, log beta1) = (0, 0), bootstrap covariance)"
        )
    return SemiInference(curve, weak, strong, fit)
