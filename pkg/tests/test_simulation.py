import csv
import io

import numpy as np
import pytest
from scipy import stats

from rocsuite.numerics import RngStream
from rocsuite.simulation import (
    CSV_COLUMNS,
    BINORMAL_DECILE_P,
    Dgm,
    export_report,
    report_csv,
    run_scenario,
    sample_dgm,
    true_roc,
)


class TestDgm:
    def test_exp_means(self):
        s = sample_dgm(Dgm.exp_exp(1, 4), 1000, 1000, RngStream(0, 0))
        assert s.reference.mean() == pytest.approx(1.0, abs=0.1)
        assert s.comparator.mean() == pytest.approx(0.25, abs=0.05)

    def test_normal_means(self):
        s = sample_dgm(Dgm.norm_norm(5.5, 1, 4, 1), 1000, 1000, RngStream(0, 1))
        assert s.comparator.mean() == pytest.approx(4.0, abs=0.1)
        assert s.reference.mean() == pytest.approx(5.5, abs=0.1)

    def test_norm_ref_biexp_alpha_one(self):
        s = sample_dgm(Dgm.norm_ref_biexp(0, 1, 1), 3000, 3000, RngStream(0, 2))
        assert stats.kstest(s.comparator, "norm").pvalue > 1e-3
        assert stats.kstest(s.reference, "norm").pvalue > 1e-3

    @pytest.mark.parametrize("dgm", [Dgm.norm_ref_biexp(1, 2, 3), Dgm.exp_ref_binorm(2, 0.8, 0.6)])
    def test_crossed_kinds_have_stated_curve(self, dgm):
        # empirical F1(F0^-1(p)) from large samples matches the analytic curve
        s = sample_dgm(dgm, 20000, 20000, RngStream(1, 3))
        p = np.array([0.1, 0.3, 0.5, 0.8])
        thr = np.quantile(s.reference, p)
        emp = np.searchsorted(np.sort(s.comparator), thr) / 20000
        np.testing.assert_allclose(emp, true_roc(dgm, p), atol=0.015)

    def test_true_roc(self):
        assert true_roc(Dgm.exp_exp(1, 4), 0.2) == pytest.approx(1 - 0.8**4)
        nn = Dgm.norm_norm(5.5, 1, 4, 1)
        assert true_roc(nn, 0.0670) == pytest.approx(0.50, abs=0.005)
        assert true_roc(nn, 0.4140) == pytest.approx(0.90, abs=0.005)

    @pytest.mark.parametrize("kind, params", [("exp-exp", (1,)), ("norm-norm", (0, -1, 0, 1)), ("bogus", ())])
    def test_invalid(self, kind, params):
        with pytest.raises(ValueError):
            Dgm(kind, params)


class TestRunScenario:
    def test_single_replicate(self):
        rep = run_scenario(Dgm.exp_exp(1, 4), 20, 20, ["param-biexp", "empirical"], [0.3, 0.6], 1, bootstrap=200, seed=3)
        assert len(rep.records) == 4
        assert all(r.coverage in (0.0, 1.0) for r in rep.records)
        assert all(r.n_ok == 1 for r in rep.records)

    def test_empty_grid(self, tmp_path):
        rep = run_scenario(Dgm.exp_exp(1, 4), 20, 20, ["empirical"], [], 5)
        path = tmp_path / "r.csv"
        export_report(rep, path)
        assert path.read_bytes() == (",".join(CSV_COLUMNS) + "\n").encode()

    def test_table_layout(self):
        dgm = Dgm.norm_norm(5.5, 1, 4, 1)
        reps = [run_scenario(dgm, n, n, ["empirical", "wilson"], BINORMAL_DECILE_P, 3, bootstrap=100, seed=1) for n in (30, 60)]
        rows = list(csv.DictReader(io.StringIO(report_csv(reps))))
        assert sum(r["method"] == "empirical" for r in rows) == 10

    def test_reexport_identical(self, tmp_path):
        rep = run_scenario(Dgm.exp_exp(1, 4), 30, 30, ["param-binorm", "semi-biexp"], [0.2, 0.5], 4, bootstrap=100, seed=9)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        export_report(rep, a)
        export_report(rep, b)
        assert a.read_bytes() == b.read_bytes()
        assert b"\r" not in a.read_bytes()

    def test_worker_invariance(self):
        args = (Dgm.norm_norm(5.5, 1, 4, 1), 25, 25, ["empirical", "wilson", "semi-binorm"], [0.1, 0.4], 45)
        a = run_scenario(*args, bootstrap=100, seed=5, workers=1)
        b = run_scenario(*args, bootstrap=100, seed=5, workers=3)
        assert report_csv(a) == report_csv(b)

    def test_failures_counted_and_flagged(self):
        # normal data centred at zero breaks the positive-support model on most replicates
        rep = run_scenario(Dgm.norm_norm(0, 1, 0, 1), 20, 20, ["param-biexp", "param-binorm"], [0.5], 10, seed=0)
        assert rep.record("param-biexp", 0.5).failures == 10
        assert "param-biexp" in rep.flagged and "param-binorm" not in rep.flagged
        assert np.isnan(rep.record("param-biexp", 0.5).mean_est)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            run_scenario(Dgm.exp_exp(1, 4), 20, 20, ["magic"], [0.5], 1)


class TestPatterns:
    def test_exponential_dgm_breaks_binormal(self):
        rep = run_scenario(Dgm.exp_exp(1, 4), 60, 60, ["param-binorm"], [0.3, 0.5, 0.7], 200, seed=4)
        assert min(r.coverage for r in rep.records) < 0.85

    def test_normal_dgm_biases_biexponential(self):
        rep = run_scenario(Dgm.norm_norm(5.5, 1, 4, 1), 60, 60, ["param-biexp"], [0.1, 0.3, 0.5], 200, seed=4)
        assert max(abs(r.mean_est - r.true_roc) for r in rep.records) > 0.1
