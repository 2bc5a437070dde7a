"""Monte-Carlo coverage studies for the ROC estimators.

A scenario draws ``M`` two-group samples from a data generating mechanism
(DGM), applies each method, and scores its pointwise interval at every FPR
of the grid against the analytic curve.  Replicate ``m`` draws its data from
stream ``m`` under path ``(0,)`` and its bootstrap resamples under path
``(1, m)``, so reports do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special

from .bootstrap import BandConfig, BootstrapError, band_from_replicates, bootstrap_replicates
from .core import TwoGroupSample
from .empirical import EmpiricalEstimator, empirical_roc_at, quantile_rank, wilson_interval
from .numerics import RngStream, normal_cdf, normal_quantile
from .parametric import biexp_curve, biexp_curve_ci, binorm_curve_ci, fit_biexponential, fit_binormal
from .semiparametric import SemiEstimator

__all__ = [
    "ALL_METHODS",
    "CSV_COLUMNS",
    "Dgm",
    "ScenarioRecord",
    "ScenarioReport",
    "BINORMAL_DECILE_P",
    "export_report",
    "run_scenario",
    "sample_dgm",
    "true_roc",
]

ALL_METHODS = ("empirical", "wilson", "param-biexp", "param-binorm", "semi-biexp", "semi-binorm")
CSV_COLUMNS = ("scenario", "method", "n0", "n1", "p", "true_roc", "mean_est", "mean_width", "coverage", "failures")
# FPR values at which the normal DGM (delta = 1.5, unit variances) has ROC = 0.1, 0.3, ..., 0.9.
BINORMAL_DECILE_P = (0.0027, 0.0215, 0.0670, 0.1650, 0.4140)
SUMMARY_P = tuple(round(0.1 * k, 1) for k in range(1, 10))
FLAG_FAILURE_RATE = 0.10
REPLICATES_PER_TASK = 20


@dataclass(frozen=True)
class Dgm:
    """Data generating mechanism.

    ``kind`` is one of

    * ``"exp-exp"``: params ``(lambda0, lambda1)``;
    * ``"norm-norm"``: params ``(mu0, sd0, mu1, sd1)``;
    * ``"norm-ref-biexp"``: params ``(mu0, sd0, alpha)``; normal reference and a
      comparator CDF 1 - (1 - Phi((t - mu0) / sd0))**alpha;
    * ``"exp-ref-binorm"``: params ``(lambda0, beta0, beta1)``; exponential
      reference and a comparator CDF Phi(beta0 + beta1 Phi^{-1}(1 - exp(-lambda0 t))).
    """

    kind: str
    params: tuple

    def __post_init__(self):
        arity = {"exp-exp": 2, "norm-norm": 4, "norm-ref-biexp": 3, "exp-ref-binorm": 3}
        if self.kind not in arity:
            raise ValueError(f"unknown DGM kind {self.kind!r}")
        params = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != arity[self.kind] or not all(math.isfinite(v) for v in params):
            raise ValueError(f"{self.kind} needs {arity[self.kind]} finite parameters")
        positive = {"exp-exp": (0, 1), "norm-norm": (1, 3), "norm-ref-biexp": (1, 2), "exp-ref-binorm": (0, 2)}
        if any(params[i] <= 0 for i in positive[self.kind]):
            raise ValueError(f"{self.kind}: rates, standard deviations, alpha and beta1 must be positive")

    @classmethod
    def exp_exp(cls, lambda0: float, lambda1: float) -> "Dgm":
        return cls("exp-exp", (lambda0, lambda1))

    @classmethod
    def norm_norm(cls, mu0: float, sd0: float, mu1: float, sd1: float) -> "Dgm":
        return cls("norm-norm", (mu0, sd0, mu1, sd1))

    @classmethod
    def norm_ref_biexp(cls, mu0: float, sd0: float, alpha: float) -> "Dgm":
        return cls("norm-ref-biexp", (mu0, sd0, alpha))

    @classmethod
    def exp_ref_binorm(cls, lambda0: float, beta0: float, beta1: float) -> "Dgm":
        return cls("exp-ref-binorm", (lambda0, beta0, beta1))

    @property
    def label(self) -> str:
        return f"{self.kind}({', '.join(f'{v:g}' for v in self.params)})"

    def true_curve(self, p):
        return true_roc(self, p)


def true_roc(dgm: Dgm, p):
    """Analytic ROC(p) of a DGM."""
    p = np.asarray(p, dtype=float)
    k, a = dgm.kind, dgm.params
    if k == "exp-exp":
        return biexp_curve(a[1] / a[0], p)
    if k == "norm-norm":
        mu0, sd0, mu1, sd1 = a
        return normal_cdf((mu0 - mu1) / sd1 + sd0 / sd1 * normal_quantile(p))
    if k == "norm-ref-biexp":
        return biexp_curve(a[2], p)
    return normal_cdf(a[1] + a[2] * normal_quantile(p))


def _draw(dgm: Dgm, u0: np.ndarray, u1: np.ndarray):
    k, a = dgm.kind, dgm.params
    if k == "exp-exp":
        return -np.log1p(-u0) / a[0], -np.log1p(-u1) / a[1]
    if k == "norm-norm":
        return a[0] + a[1] * special.ndtri(u0), a[2] + a[3] * special.ndtri(u1)
    if k == "norm-ref-biexp":
        mu0, sd0, alpha = a
        # F1(t) = u  <=>  1 - Phi(z) = (1 - u)**(1/alpha)
        return mu0 + sd0 * special.ndtri(u0), mu0 - sd0 * special.ndtri(np.exp(np.log1p(-u1) / alpha))
    lam0, b0, b1 = a
    # F1(t) = u  <=>  exp(-lam0 t) = Phi(-(Phi^{-1}(u) - b0) / b1)
    y1 = -special.log_ndtr(-(special.ndtri(u1) - b0) / b1) / lam0
    return -np.log1p(-u0) / lam0, y1


def sample_dgm(dgm: Dgm, n0: int, n1: int, rng: RngStream) -> TwoGroupSample:
    """Independent draws per group by inverse-transform sampling."""
    u = rng.uniform(n0 + n1)
    y0, y1 = _draw(dgm, u[:n0], u[n0:])
    return TwoGroupSample(np.asarray(y0, dtype=float), np.asarray(y1, dtype=float))


@dataclass(frozen=True)
class ScenarioRecord:
    method: str
    p: float
    true_roc: float
    mean_est: float
    mean_width: float
    coverage: float
    failures: int
    n_ok: int


@dataclass
class ScenarioReport:
    scenario: str
    dgm: Dgm
    n0: int
    n1: int
    replicates: int
    bootstrap: int
    methods: tuple
    p_grid: tuple
    records: list = field(default_factory=list)
    flagged: tuple = ()

    def record(self, method: str, p: float) -> ScenarioRecord:
        for r in self.records:
            if r.method == method and math.isclose(r.p, p, rel_tol=0, abs_tol=1e-12):
                return r
        raise KeyError((method, p))

    def failures(self, method: str) -> int:
        return max((r.failures for r in self.records if r.method == method), default=0)


def _method_interval(method, sample, grid, level, bootstrap, seed, m):
    """``(estimate, lower, upper)`` arrays over ``grid`` for one method."""
    if method in ("empirical", "wilson"):
        est = empirical_roc_at(sample.reference, sample.comparator, grid)
        if method == "wilson":
            thr = np.sort(sample.reference)[quantile_rank(grid, sample.n0) - 1]
            successes = np.searchsorted(np.sort(sample.comparator), thr, side="right")
            lo, hi = wilson_interval(successes, sample.n1, level)
            return est, lo, hi
        config = BandConfig(bootstrap, level, grid, seed, stream_path=(1, m))
        estimator = EmpiricalEstimator()
        curve = band_from_replicates(est, bootstrap_replicates(sample, estimator, config), config, estimator.method)
        return est, curve.lower[1:-1], curve.upper[1:-1]
    if method == "param-biexp":
        lo, est, hi = biexp_curve_ci(fit_biexponential(sample), grid, level)
        return est, lo, hi
    if method == "param-binorm":
        lo, est, hi = binorm_curve_ci(fit_binormal(sample), grid, level)
        return est, lo, hi
    family = "biexp" if method == "semi-biexp" else "binorm"
    estimator = SemiEstimator(family)
    est, _ = estimator.evaluate(sample.reference, sample.comparator, grid)
    config = BandConfig(bootstrap, level, grid, seed, stream_path=(1, m))
    curve = band_from_replicates(np.asarray(est), bootstrap_replicates(sample, estimator, config), config, estimator.method)
    return np.asarray(est), curve.lower[1:-1], curve.upper[1:-1]


def _run_replicates(args):
    dgm, n0, n1, methods, grid, bootstrap, seed, level, start, stop = args
    out = []
    for m in range(start, stop):
        sample = sample_dgm(dgm, n0, n1, RngStream(seed, m, (0,)))
        per_method = []
        for method in methods:
            try:
                per_method.append(_method_interval(method, sample, grid, level, bootstrap, seed, m))
            except (ArithmeticError, ValueError, BootstrapError):
                per_method.append(None)
        out.append(per_method)
    return out


def run_scenario(
    dgm: Dgm,
    n0: int,
    n1: int,
    methods: Sequence[str],
    p_grid: Iterable[float],
    replicates: int,
    bootstrap: int = 3000,
    seed: int = 0,
    level: float = 0.95,
    workers: int = 1,
    name: Optional[str] = None,
) -> ScenarioReport:
    """Run ``replicates`` Monte-Carlo replicates and aggregate per (method, p).

    A method that fails on a replicate (e.g. a positive-support model on data
    with negative values) is skipped for that replicate and counted; methods
    failing on more than 10% of replicates are listed in ``report.flagged``.
    """
    methods = tuple(methods)
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    if replicates < 1:
        raise ValueError("need at least one replicate")
    grid = np.asarray(sorted(float(p) for p in p_grid), dtype=float)
    report = ScenarioReport(
        scenario=name or dgm.label,
        dgm=dgm,
        n0=n0,
        n1=n1,
        replicates=replicates,
        bootstrap=bootstrap,
        methods=methods,
        p_grid=tuple(grid),
    )
    if grid.size == 0 or not methods:
        return report
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise ValueError("p_grid must lie inside (0, 1)")

    tasks = [
        (dgm, n0, n1, methods, grid, bootstrap, seed, level, s, min(s + REPLICATES_PER_TASK, replicates))
        for s in range(0, replicates, REPLICATES_PER_TASK)
    ]
    workers = max(1, min(int(workers), len(tasks)))
    if workers == 1:
        chunks = [_run_replicates(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_replicates, tasks))
    results = [rep for chunk in chunks for rep in chunk]

    truth = np.asarray(true_roc(dgm, grid), dtype=float)
    flagged = []
    for k, method in enumerate(methods):
        ok = [r[k] for r in results if r[k] is not None]
        failures = replicates - len(ok)
        if failures > FLAG_FAILURE_RATE * replicates:
            flagged.append(method)
        if ok:
            est = np.stack([o[0] for o in ok])
            lo = np.stack([o[1] for o in ok])
            hi = np.stack([o[2] for o in ok])
            mean_est = est.mean(axis=0)
            mean_width = (hi - lo).mean(axis=0)
            coverage = ((lo <= truth) & (truth <= hi)).mean(axis=0)
        else:
            mean_est = mean_width = coverage = np.full(grid.size, np.nan)
        for j, p in enumerate(grid):
            report.records.append(
                ScenarioRecord(
                    method, float(p), float(truth[j]), float(mean_est[j]), float(mean_width[j]), float(coverage[j]), failures, len(ok)
                )
            )
    report.flagged = tuple(flagged)
    return report


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def report_rows(reports) -> list:
    if isinstance(reports, ScenarioReport):
        reports = [reports]
    rows = []
    for rep in reports:
        for r in rep.records:
            rows.append(
                [rep.scenario, r.method, rep.n0, rep.n1, r.p, r.true_roc, r.mean_est, r.mean_width, r.coverage, r.failures]
            )
    return rows


def report_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report_rows(reports):
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def export_report(reports, path) -> None:
    """Write one or more reports as UTF-8 CSV with LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_csv(reports))
