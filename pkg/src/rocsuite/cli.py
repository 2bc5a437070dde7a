"""Command-line interface.

Subcommands
-----------
fit
    Estimate one ROC curve from a ``group,value`` CSV and print a JSON document.
report
    Run the empirical estimator and all four model fits on one CSV, writing a
    JSON document and an SVG plot per method into a directory.
simulate
    Run a Monte-Carlo coverage scenario and write the CSV report.

Results go to standard output or the requested files; diagnostics, including
a JSON error object on failure, go to standard error.  Exit status is 0 on
success, 1 when estimation fails and 2 for usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .bootstrap import BandConfig, bootstrap_band, default_workers
from .core import Method, NullKind, RocCurveEstimate, TwoGroupSample, canonical_orientation, default_grid, validate_sample
from .empirical import EmpiricalEstimator, empirical_auc, empirical_roc, ks_test, mann_whitney_test
from .parametric import (
    biexp_auc,
    binorm_auc,
    exponential_lrt,
    normal_lrt,
    param_biexp_estimate,
    param_binorm_estimate,
    welch_t_test,
)
from .semiparametric import semi_inference
from .simulation import ALL_METHODS, SUMMARY_P, Dgm, export_report, run_scenario

FIT_METHODS = tuple(m.value for m in Method)
STOCHASTIC = {"empirical", "semi-biexp", "semi-binorm"}


class UsageError(ValueError):
    """Bad flags or malformed input; reported with exit status 2."""


class ParseError(UsageError):
    pass


# --- input -------------------------------------------------------------------


def parse_dataset(data, orientation="auto") -> TwoGroupSample:
    """Parse ``group,value`` CSV text (or UTF-8 bytes) into a validated sample.

    Group labels are ``0`` (reference) and ``1`` (comparator).  Blank lines
    are skipped.  Errors name the first offending line, counting the header
    as line 1.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not valid UTF-8: {exc}") from None
    rows = csv.reader(io.StringIO(data))
    groups = {0: [], 1: []}
    header_seen = False
    line = 0
    for line, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        cells = [c.strip() for c in row]
        if not header_seen:
            if [c.lower() for c in cells] != ["group", "value"]:
                raise ParseError(f"line {line}: missing header 'group,value'")
            header_seen = True
            continue
        if len(cells) != 2:
            raise ParseError(f"line {line}: expected 2 fields, found {len(cells)}")
        if cells[0] not in ("0", "1"):
            raise ParseError(f"line {line}: unknown group label {cells[0]!r}")
        try:
            value = float(cells[1])
        except ValueError:
            raise ParseError(f"line {line}: non-numeric value {cells[1]!r}") from None
        if not math.isfinite(value):
            raise ParseError(f"line {line}: non-finite value {cells[1]!r}")
        groups[int(cells[0])].append(value)
    if not header_seen:
        raise ParseError("line 1: missing header 'group,value'")
    for g in (0, 1):
        if len(groups[g]) < 2:
            raise ParseError(f"line {line + 1}: group {g} has {len(groups[g])} rows (need at least 2)")
    try:
        return validate_sample(groups[0], groups[1], orientation)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


# --- JSON --------------------------------------------------------------------


def _num(v) -> str:
    v = float(v)
    if not math.isfinite(v):
        return "null"
    return format(v, ".17g")


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits; NaN/inf become null."""
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _test_json(res):
    if res is None:
        return None
    return {
        "name": res.name,
        "statistic": res.statistic,
        "p_value": res.p_value,
        "null": res.null_kind.value,
        "reference_distribution": res.reference_distribution,
    }


def _curve_json(curve: RocCurveEstimate):
    lo = curve.lower if curve.has_band else [None] * curve.fpr.size
    hi = curve.upper if curve.has_band else [None] * curve.fpr.size
    return [{"fpr": f, "tpr": t, "lo": a, "hi": b} for f, t, a, b in zip(curve.fpr, curve.tpr, lo, hi)]


# --- estimation --------------------------------------------------------------


def fit_document(sample: TwoGroupSample, method: str, *, level=0.95, bootstrap=3000, grid=199, seed=None, workers=1):
    """Run one method and return ``(document, curve, staircase)``.

    ``staircase`` is the full empirical step curve for plotting (empirical
    method only).
    """
    if method not in FIT_METHODS:
        raise UsageError(f"unknown method {method!r}")
    if method in STOCHASTIC and seed is None:
        raise UsageError(f"--seed is required for method {method}")
    canon = canonical_orientation(sample)
    fpr_grid = default_grid(grid)
    stochastic = method in STOCHASTIC
    try:
        config = BandConfig(bootstrap if stochastic else 100, level, fpr_grid, seed or 0, workers=workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    params = {"alpha": None, "beta0": None, "beta1": None}
    warnings = []
    staircase = None
    if method == "empirical":
        curve = bootstrap_band(canon, EmpiricalEstimator(), config)
        auc = empirical_auc(canon)
        weak, strong = mann_whitney_test(canon), ks_test(canon)
        staircase = empirical_roc(canon)
    elif method == "param-biexp":
        curve, fit = param_biexp_estimate(canon, fpr_grid, level)
        params["alpha"] = fit.alpha
        auc = biexp_auc(fit)
        weak = exponential_lrt(canon, null_kind=NullKind.WEAK)
        strong = exponential_lrt(canon)
    elif method == "param-binorm":
        curve, fit = param_binorm_estimate(canon, fpr_grid, level)
        params["beta0"], params["beta1"] = fit.beta0, fit.beta1
        auc = binorm_auc(fit)
        weak, strong = welch_t_test(canon), normal_lrt(canon)
    else:
        family = "biexp" if method == "semi-biexp" else "binorm"
        inf = semi_inference(canon, family, config)
        curve, weak, strong = inf.curve, inf.weak, inf.strong
        if family == "biexp":
            params["alpha"] = inf.fit.alpha
            auc = biexp_auc(inf.fit.alpha)
        else:
            params["beta0"], params["beta1"] = inf.fit.beta
            auc = binorm_auc(inf.fit.beta)
        warnings.extend(inf.fit.flags)
    warnings.extend(curve.warnings)
    doc = {
        "method": method,
        "orientation": sample.orientation.value,
        "n0": sample.n0,
        "n1": sample.n1,
        "level": level,
        "bootstrap": bootstrap if stochastic else None,
        "seed": seed if stochastic else None,
        "params": params,
        "auc": auc,
        "curve": _curve_json(curve),
        "tests": {"weak": _test_json(weak), "strong": _test_json(strong)},
        "warnings": list(warnings),
    }
    return doc, curve, staircase


# --- SVG ---------------------------------------------------------------------


def render_svg(curve: RocCurveEstimate, width=600, height=600, staircase: Optional[RocCurveEstimate] = None, title=""):
    """Minimal SVG: shaded band, estimate, diagonal reference and labeled axes."""
    margin = 60
    pw, ph = width - 2 * margin, height - 2 * margin

    def xy(x, y):
        return f"{margin + x * pw:.3f},{margin + (1 - y) * ph:.3f}"

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{margin}" y="{margin}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin + ph}" x2="{margin + pw}" y2="{margin}" stroke="grey" stroke-dasharray="4,4"/>',
    ]
    if curve.has_band:
        if curve.band_axis == "tpr":
            upper = [xy(x, y) for x, y in zip(curve.fpr, curve.upper)]
            lower = [xy(x, y) for x, y in zip(curve.fpr[::-1], curve.lower[::-1])]
        else:
            upper = [xy(x, y) for x, y in zip(curve.lower, curve.tpr)]
            lower = [xy(x, y) for x, y in zip(curve.upper[::-1], curve.tpr[::-1])]
        parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="steelblue" fill-opacity="0.3" stroke="none"/>')
    line = staircase if staircase is not None else curve
    if staircase is not None:
        # horizontal-then-vertical steps through the vertices
        pts = [xy(line.fpr[0], line.tpr[0])]
        for i in range(1, line.fpr.size):
            pts.append(xy(line.fpr[i], line.tpr[i - 1]))
            pts.append(xy(line.fpr[i], line.tpr[i]))
    else:
        pts = [xy(x, y) for x, y in zip(line.fpr, line.tpr)]
    parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="navy" stroke-width="2"/>')
    for k in range(6):
        t = k / 5
        parts.append(f'<text x="{margin + t * pw:.1f}" y="{margin + ph + 18}" font-size="12" text-anchor="middle">{t:.1f}</text>')
        parts.append(f'<text x="{margin - 8}" y="{margin + (1 - t) * ph + 4:.1f}" font-size="12" text-anchor="end">{t:.1f}</text>')
    parts.append(
        f'<text x="{margin + pw / 2}" y="{height - 15}" font-size="14" text-anchor="middle">{escape("1 − Specificity")}</text>'
    )
    parts.append(
        f'<text x="18" y="{margin + ph / 2}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 18 {margin + ph / 2})">Sensitivity</text>'
    )
    if title:
        parts.append(f'<text x="{width / 2}" y="{margin / 2}" font-size="14" text-anchor="middle">{escape(title)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _estimation_flags(p):
    p.add_argument("data", help="CSV file with header 'group,value' ('-' for standard input)")
    p.add_argument("--convention", choices=["lower", "higher", "auto"], default="auto",
                   help="which values are less desirable (default: auto)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--bootstrap", type=_positive_int, default=3000, help="bootstrap replicates")
    p.add_argument("--grid", type=_positive_int, default=199, help="number of interior FPR grid points")
    p.add_argument("--seed", type=_seed, default=None, help="required for bootstrap-based methods")
    p.add_argument("--workers", type=_positive_int, default=default_workers())
    p.add_argument("--width", type=_positive_int, default=600)
    p.add_argument("--height", type=_positive_int, default=600)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rocsuite", description="ROC curve estimation and coverage simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="estimate one ROC curve")
    _estimation_flags(fit)
    fit.add_argument("--method", choices=FIT_METHODS, default="empirical")
    fit.add_argument("--svg", help="also write an SVG plot to this path")
    fit.add_argument("--out", help="write the JSON here instead of standard output")

    rep = sub.add_parser("report", help="empirical curve plus all four model fits")
    _estimation_flags(rep)
    rep.add_argument("--outdir", required=True)

    sim = sub.add_parser("simulate", help="Monte-Carlo coverage scenario")
    sim.add_argument("--dgm", choices=["exp", "norm", "norm-ref-biexp", "exp-ref-binorm"], required=True)
    for name in ("lambda0", "lambda1", "mu0", "mu1", "sd0", "sd1", "alpha", "beta0", "beta1"):
        sim.add_argument(f"--{name}", type=float)
    sim.add_argument("--n0", type=_positive_int, required=True)
    sim.add_argument("--n1", type=_positive_int, required=True)
    sim.add_argument("--methods", default="empirical,wilson")
    sim.add_argument("--p", default=",".join(str(v) for v in SUMMARY_P), help="comma-separated FPR values")
    sim.add_argument("--M", dest="replicates", type=_positive_int, default=1000)
    sim.add_argument("--B", dest="bootstrap", type=_positive_int, default=3000)
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument("--seed", type=_seed, required=True)
    sim.add_argument("--workers", type=_positive_int, default=default_workers())
    sim.add_argument("--out", help="CSV report path")
    return parser


def _read_data(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _cmd_fit(args, stdout):
    sample = parse_dataset(_read_data(args.data), args.convention)
    doc, curve, stairs = fit_document(
        sample, args.method, level=args.level, bootstrap=args.bootstrap, grid=args.grid, seed=args.seed, workers=args.workers
    )
    text = dumps(doc) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        stdout.write(text)
    if args.svg:
        _write(args.svg, render_svg(curve, args.width, args.height, stairs, title=args.method))
    return 0


def _cmd_report(args, stdout):
    if args.seed is None:
        raise UsageError("--seed is required for report")
    sample = parse_dataset(_read_data(args.data), args.convention)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    index = {}
    status = 0
    for method in FIT_METHODS:
        try:
            doc, curve, stairs = fit_document(
                sample, method, level=args.level, bootstrap=args.bootstrap, grid=args.grid, seed=args.seed, workers=args.workers
            )
        except (ArithmeticError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            index[method] = {"status": "error", "error": _error_json(exc)["error"]}
            sys.stderr.write(f"rocsuite: {method}: {exc}\n")
            status = 1
            continue
        _write(out / f"{method}.json", dumps(doc) + "\n")
        _write(out / f"{method}.svg", render_svg(curve, args.width, args.height, stairs, title=method))
        index[method] = {"status": "ok", "json": f"{method}.json", "svg": f"{method}.svg", "params": doc["params"], "auc": doc["auc"]}
    summary = dumps({"n0": sample.n0, "n1": sample.n1, "orientation": sample.orientation.value, "methods": index}) + "\n"
    _write(out / "index.json", summary)
    stdout.write(summary)
    return status


def _dgm_from_args(args) -> Dgm:
    need = {
        "exp": ("lambda0", "lambda1"),
        "norm": ("mu0", "sd0", "mu1", "sd1"),
        "norm-ref-biexp": ("mu0", "sd0", "alpha"),
        "exp-ref-binorm": ("lambda0", "beta0", "beta1"),
    }[args.dgm]
    missing = [f"--{n}" for n in need if getattr(args, n) is None]
    if missing:
        raise UsageError(f"--dgm {args.dgm} requires {', '.join(missing)}")
    kind = {"exp": "exp-exp", "norm": "norm-norm"}.get(args.dgm, args.dgm)
    try:
        return Dgm(kind, tuple(getattr(args, n) for n in need))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_simulate(args, stdout):
    dgm = _dgm_from_args(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in ALL_METHODS]
    if bad:
        raise UsageError(f"unknown methods: {', '.join(bad)} (choose from {', '.join(ALL_METHODS)})")
    try:
        grid = [float(v) for v in args.p.split(",") if v.strip()]
    except ValueError:
        raise UsageError("--p must be a comma-separated list of numbers") from None
    if any(not 0 < v < 1 for v in grid):
        raise UsageError("--p values must lie inside (0, 1)")
    if any(m in STOCHASTIC for m in methods):
        try:
            BandConfig(args.bootstrap, args.level, grid or [0.5])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    report = run_scenario(
        dgm, args.n0, args.n1, methods, grid, args.replicates, args.bootstrap, args.seed, args.level, args.workers
    )
    if args.out:
        export_report(report, args.out)
    lines = [f"scenario {report.scenario}  n0={report.n0} n1={report.n1}  M={report.replicates} B={report.bootstrap}"]
    lines.append(f"{'method':<13} {'p':>7} {'true':>7} {'mean':>7} {'width':>7} {'CP':>6} {'fail':>5}")
    for r in report.records:
        lines.append(
            f"{r.method:<13} {r.p:7.4f} {r.true_roc:7.4f} {r.mean_est:7.4f} {r.mean_width:7.4f} {r.coverage:6.3f} {r.failures:5d}"
        )
    if report.flagged:
        lines.append(f"flagged (>10% failed replicates): {', '.join(report.flagged)}")
    stdout.write("\n".join(lines) + "\n")
    return 0


def _error_json(exc):
    return {"error": {"type": type(exc).__name__, "message": str(exc)}}


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        handler = {"fit": _cmd_fit, "report": _cmd_report, "simulate": _cmd_simulate}[args.command]
        return handler(args, stdout)
    except UsageError as exc:
        sys.stderr.write(dumps(_error_json(exc)) + "\n")
        return 2
    except (ArithmeticError, ValueError, OSError) as exc:
        sys.stderr.write(dumps(_error_json(exc)) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
