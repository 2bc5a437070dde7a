import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rocsuite.core import (
    Method,
    NullKind,
    Orientation,
    RocCurveEstimate,
    TestResult,
    ValidationError,
    auc_orient,
    canonical_orientation,
    convention_reflect,
    default_grid,
    materialize,
    validate_sample,
)
from rocsuite.empirical import empirical_auc, empirical_roc


class TestValidateSample:
    def test_valid(self):
        s = validate_sample([1, 2, 3], [4, 5, 6], Orientation.LOWER_LESS_DESIRABLE)
        assert (s.n0, s.n1, s.n) == (3, 3, 6)

    def test_too_small(self):
        with pytest.raises(ValidationError, match="reference group too small"):
            validate_sample([1], [2, 3])
        with pytest.raises(ValidationError, match="comparator group too small"):
            validate_sample([1, 2], [3])

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite(self, bad):
        with pytest.raises(ValidationError, match="non-finite value"):
            validate_sample([1, bad], [2, 3])

    def test_immutable(self):
        s = validate_sample([1, 2, 3], [4, 5, 6])
        with pytest.raises(ValueError):
            s.reference[0] = 10.0

    def test_auto_orientation(self):
        assert validate_sample([4, 5, 6], [1, 2, 3], "auto").orientation is Orientation.LOWER_LESS_DESIRABLE
        assert validate_sample([1, 2, 3], [4, 5, 6], "auto").orientation is Orientation.HIGHER_LESS_DESIRABLE


class TestCanonicalOrientation:
    def test_identity_when_canonical(self):
        s = validate_sample([1, 2], [3, 4], "lower")
        assert canonical_orientation(s) is s

    def test_negation(self):
        c = canonical_orientation(validate_sample([1, 2], [3, 4], "higher"))
        np.testing.assert_array_equal(c.reference, [-1, -2])
        np.testing.assert_array_equal(c.comparator, [-3, -4])
        assert c.is_canonical

    def test_idempotent(self):
        s = validate_sample([1, 2], [3, 4], "higher")
        once = canonical_orientation(s)
        twice = canonical_orientation(once)
        np.testing.assert_array_equal(once.reference, twice.reference)
        np.testing.assert_array_equal(once.comparator, twice.comparator)

    def test_matches_manual_negation(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=15), rng.normal(size=12)
        c1 = empirical_roc(canonical_orientation(validate_sample(a, b, "higher")))
        c2 = empirical_roc(validate_sample(-a, -b, "lower"))
        np.testing.assert_array_equal(c1.fpr, c2.fpr)
        np.testing.assert_array_equal(c1.tpr, c2.tpr)


def _curve(fpr, tpr, lo=None, hi=None):
    return RocCurveEstimate(np.asarray(fpr, float), np.asarray(tpr, float), Method.EMPIRICAL, lo, hi)


class TestConventionReflect:
    def test_point_mapping(self):
        c = convention_reflect(_curve([0, 0.1, 1], [0, 0.6, 1]))
        np.testing.assert_allclose(c.fpr, [0, 0.4, 1])
        np.testing.assert_allclose(c.tpr, [0, 0.9, 1])

    def test_fixed_line(self):
        c = convention_reflect(_curve([0, 0.2, 1], [0, 0.8, 1]))
        np.testing.assert_allclose(c.fpr[1], 0.2)
        np.testing.assert_allclose(c.tpr[1], 0.8)

    def test_involution_with_band(self):
        c = _curve([0, 0.1, 0.4, 1], [0, 0.5, 0.8, 1], [0, 0.3, 0.6, 1], [0, 0.7, 0.95, 1])
        r = convention_reflect(c)
        assert r.band_axis == "fpr" and r.band_contains_estimate()
        rr = convention_reflect(r)
        for attr in ("fpr", "tpr", "lower", "upper"):
            np.testing.assert_allclose(getattr(rr, attr), getattr(c, attr), atol=1e-15)
        assert rr.band_axis == "tpr"

    @given(st.lists(st.integers(0, 6), min_size=2, max_size=12), st.lists(st.integers(0, 6), min_size=2, max_size=12))
    @settings(max_examples=200, deadline=None)
    def test_area_preserved(self, a, b):
        curve = empirical_roc(validate_sample(a, b))
        assert convention_reflect(curve).trapezoid_auc() == pytest.approx(curve.trapezoid_auc(), abs=1e-12)


class TestAucOrient:
    @pytest.mark.parametrize("auc, expected", [(0.25, 0.75), (0.5, 0.5), (0.8, 0.8)])
    def test_values(self, auc, expected):
        assert auc_orient(auc) == expected

    def test_domain(self):
        with pytest.raises(ValueError):
            auc_orient(1.2)


class TestRocCurveEstimate:
    def test_endpoints_required(self):
        with pytest.raises(ValidationError):
            _curve([0.1, 1], [0.2, 1])

    def test_monotone_required(self):
        with pytest.raises(ValidationError):
            _curve([0, 0.5, 1], [0, 0.9, 0.8])

    def test_band_order(self):
        with pytest.raises(ValidationError):
            _curve([0, 0.5, 1], [0, 0.6, 1], [0, 0.7, 1], [0, 0.5, 1])

    def test_points(self):
        pts = empirical_roc(validate_sample([1, 2], [3, 4])).points
        assert pts[0].threshold is None and pts[-1].fpr == 1.0 and pts[-1].tpr == 1.0

    def test_default_grid(self):
        g = default_grid()
        assert g.size == 199 and g[0] == pytest.approx(0.005) and g[-1] == pytest.approx(0.995)
        c = materialize(g, g, Method.PARAM_BINORM)
        assert c.fpr.size == 201 and c.fpr[0] == 0 and c.fpr[-1] == 1

    def test_test_result_pvalue(self):
        with pytest.raises(ValidationError):
            TestResult("x", 1.0, 1.5, NullKind.WEAK, "none")
