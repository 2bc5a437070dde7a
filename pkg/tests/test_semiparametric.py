import math

import numpy as np
import pytest
from scipy import stats

from rocsuite.bootstrap import BandConfig
from rocsuite.core import validate_sample
from rocsuite.parametric import fit_binormal
from rocsuite.semiparametric import (
    InsufficientDataError,
    SemiEstimator,
    SeparationError,
    build_pairwise_design,
    fit_semi_biexponential,
    fit_semi_binormal,
    semi_curve,
    semi_inference,
)


def full_matrices(y0, y1):
    """Placement and indicator matrices built pair by pair, with the p = 1 rows dropped."""
    y0, y1 = np.asarray(y0, float), np.asarray(y1, float)
    p = np.array([[np.mean(y0 <= a)] * y1.size for a in y0])
    u = np.array([[1.0 if b <= a else 0.0 for b in y1] for a in y0])
    keep = p[:, 0] < 1
    return p[keep], u[keep]


def score_biexp(alpha, y0, y1):
    p, u = full_matrices(y0, y1)
    q = (1 - p) ** alpha
    return float(np.sum(np.log(1 - p) / (1 - q) * ((1 - u) - q)))


def score_binorm(beta, y0, y1):
    p, u = full_matrices(y0, y1)
    x = stats.norm.ppf(p)
    eta = beta[0] + beta[1] * x
    mu = stats.norm.cdf(eta)
    w = stats.norm.pdf(eta) / (mu * (1 - mu))
    r = w * (u - mu)
    return np.array([r.sum(), (r * x).sum()])


def bisection_alpha(y0, y1):
    """Scan a log grid on [1e-3, 1e3] for a sign change, then bisect."""
    grid = np.logspace(-3, 3, 601)
    vals = [score_biexp(a, y0, y1) for a in grid]
    k = next(i for i in range(len(grid) - 1) if vals[i] * vals[i + 1] <= 0)
    lo, hi = grid[k], grid[k + 1]
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if score_biexp(mid, y0, y1) > 0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


class TestDesign:
    def test_placements_and_mask(self):
        d = build_pairwise_design(validate_sample([1, 2, 3, 4], [2.5, 9]))
        np.testing.assert_allclose(d.placement, [0.25, 0.5, 0.75, 1.0])
        np.testing.assert_array_equal(d.included, [True, True, True, False])

    def test_indicator_column(self):
        d = build_pairwise_design(validate_sample([1, 2, 3, 4], [2.5, 0.0]))
        np.testing.assert_array_equal(d.indicator_matrix()[:, 0], [0, 0, 1, 1])
        np.testing.assert_array_equal(d.indicator_matrix()[d.included, 0], [0, 0, 1])
        np.testing.assert_array_equal(d.u_count, d.indicator_matrix().sum(axis=1))

    def test_masking_multiplicity(self):
        with pytest.raises(InsufficientDataError):
            build_pairwise_design(validate_sample([1, 3, 3], [1, 2]))
        d = build_pairwise_design(validate_sample([1, 2, 3, 5, 5], [1, 2]))
        assert d.usable_rows == 3 and d.usable_pairs == 6

    def test_three_values(self):
        with pytest.raises(InsufficientDataError):
            build_pairwise_design(validate_sample([1, 2, 3], [1, 2]))

    def test_matches_full_matrices(self):
        rng = np.random.default_rng(0)
        y0, y1 = rng.integers(0, 8, 15).astype(float), rng.integers(0, 8, 11).astype(float)
        d = build_pairwise_design(validate_sample(y0, y1))
        p, u = full_matrices(y0, y1)
        np.testing.assert_allclose(d.placement_matrix()[d.included], p)
        np.testing.assert_array_equal(d.indicator_matrix()[d.included], u)
        assert d.placement.min() >= 1 / 15

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        y0, y1 = rng.normal(size=20), rng.normal(size=14)
        a = build_pairwise_design(validate_sample(y0, y1))
        b = build_pairwise_design(validate_sample(np.exp(y0) * 4, np.exp(y1) * 4))
        np.testing.assert_array_equal(a.placement, b.placement)
        np.testing.assert_array_equal(a.u_count, b.u_count)
        np.testing.assert_array_equal(a.included, b.included)


class TestBiexponentialFit:
    def test_self_paired(self):
        y = np.random.default_rng(2).exponential(size=40)
        fit = fit_semi_biexponential(build_pairwise_design(validate_sample(y, y)))
        assert fit.alpha == pytest.approx(1.0, abs=1e-8)
        assert abs(score_biexp(1.0, y, y)) < 1e-9

    def test_consistency(self):
        rng = np.random.default_rng(3)
        s = validate_sample(rng.exponential(1.0, 2000), rng.exponential(0.25, 2000))
        assert fit_semi_biexponential(build_pairwise_design(s)).alpha == pytest.approx(4.0, abs=0.4)

    def test_residual_independent(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            y0, y1 = rng.exponential(1, 25), rng.exponential(0.4, 20)
            d = build_pairwise_design(validate_sample(y0, y1))
            fit = fit_semi_biexponential(d)
            assert fit.converged and fit.final_gradient_norm <= fit.tolerance
            assert abs(score_biexp(fit.alpha, y0, y1)) <= 1e-8 * d.usable_pairs

    def test_bisection_oracle(self):
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 40:
            n0, n1 = rng.integers(4, 7), rng.integers(2, 7)
            y0, y1 = rng.integers(0, 9, n0).astype(float), rng.integers(0, 9, n1).astype(float)
            try:
                fit = fit_semi_biexponential(build_pairwise_design(validate_sample(y0, y1)))
            except (InsufficientDataError, SeparationError):
                continue
            assert fit.alpha == pytest.approx(bisection_alpha(y0, y1), abs=1e-6)
            checked += 1

    def test_separation(self):
        with pytest.raises(SeparationError):
            fit_semi_biexponential(build_pairwise_design(validate_sample([10, 11, 12, 13, 14], [0, 1])))

    def test_curve(self):
        fit = fit_semi_biexponential(build_pairwise_design(validate_sample([1, 2, 3, 4], [1, 2, 3, 4])))
        p = np.linspace(0.05, 0.95, 7)
        np.testing.assert_allclose(semi_curve(fit, p), p, atol=1e-8)
        from dataclasses import replace

        assert semi_curve(replace(fit, params=(4.48,)), 0.1) == pytest.approx(0.376, abs=1e-3)


class TestBinormalFit:
    def test_self_paired(self):
        y = np.random.default_rng(6).normal(size=50)
        fit = fit_semi_binormal(build_pairwise_design(validate_sample(y, y)))
        assert fit.beta[0] == pytest.approx(0.0, abs=0.05)
        assert fit.beta[1] == pytest.approx(1.0, abs=0.1)
        assert np.all(np.abs(score_binorm((0.0, 1.0), y, y)) < 2.0)

    def test_consistency(self):
        rng = np.random.default_rng(7)
        s = validate_sample(rng.normal(5.5, 1, 2000), rng.normal(4.0, 1, 2000))
        b0, b1 = fit_semi_binormal(build_pairwise_design(s)).beta
        assert b0 == pytest.approx(1.5, abs=0.15) and b1 == pytest.approx(1.0, abs=0.1)

    def test_residual_independent(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            y0, y1 = rng.normal(1, 1, 25), rng.normal(0, 1.4, 20)
            d = build_pairwise_design(validate_sample(y0, y1))
            fit = fit_semi_binormal(d)
            assert fit.converged and fit.final_gradient_norm <= fit.tolerance
            assert np.max(np.abs(score_binorm(fit.beta, y0, y1))) <= 1e-8 * d.usable_pairs

    def test_approaches_parametric(self):
        rng = np.random.default_rng(9)
        gaps = {}
        for n in (200, 2000):
            diffs = []
            for _ in range(10):
                s = validate_sample(rng.normal(5.5, 1, n), rng.normal(4.0, 1, n))
                diffs.append(abs(fit_semi_binormal(build_pairwise_design(s)).beta[0] - fit_binormal(s).beta0))
            gaps[n] = np.mean(diffs)
        assert gaps[2000] < gaps[200]

    def test_identity_curve(self):
        y = np.arange(10.0)
        fit = fit_semi_binormal(build_pairwise_design(validate_sample(y, y)))
        from dataclasses import replace

        p = np.linspace(0.05, 0.95, 7)
        np.testing.assert_allclose(semi_curve(replace(fit, params=(0.0, 1.0)), p), p, atol=1e-12)


class TestInference:
    def test_reproducible(self):
        rng = np.random.default_rng(10)
        s = validate_sample(rng.normal(1, 1, 40), rng.normal(0, 1, 40))
        cfg = BandConfig(replicates=300, seed=5)
        a = semi_inference(s, "binorm", cfg)
        b = semi_inference(s, "binorm", cfg)
        assert a.curve.lower.tobytes() == b.curve.lower.tobytes()
        assert a.strong.statistic == b.strong.statistic

    def test_estimator_validation(self):
        with pytest.raises(ValueError):
            SemiEstimator("logit")

    @pytest.mark.parametrize("family", ["biexp", "binorm"])
    def test_size(self, family):
        rng = np.random.default_rng(11)
        keep = np.zeros(2)
        m = 500
        for r in range(m):
            s = validate_sample(rng.exponential(1, 60), rng.exponential(1, 60))
            res = semi_inference(s, family, BandConfig(replicates=200, seed=r, fpr_grid=[0.5]))
            keep += [res.weak.p_value > 0.05, res.strong.p_value > 0.05]
        # each test on its own keeps the null in at least 93% of replicates
        assert np.all(keep / m >= 0.93)

    def test_power(self):
        rng = np.random.default_rng(12)
        m = 200
        rej = 0
        for r in range(m):
            s = validate_sample(rng.exponential(1, 60), rng.exponential(0.25, 60))
            rej += semi_inference(s, "biexp", BandConfig(replicates=200, seed=r, fpr_grid=[0.5])).weak.p_value < 0.05
        assert rej / m > 0.99
