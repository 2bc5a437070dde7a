"""Stratified bootstrap percentile bands for any ROC curve estimator.

Replicate ``b`` always draws its resample from stream ``b`` of the configured
seed, and replicates are processed in fixed-size chunks, so a band does not
depend on how many workers computed it.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import EstimationError, Method, RocCurveEstimate, TwoGroupSample, default_grid, materialize
from .numerics import RngStream, uniform_block

__all__ = [
    "BandConfig",
    "BatchResult",
    "BootstrapError",
    "CurveEstimator",
    "ReplicateSet",
    "bootstrap_band",
    "bootstrap_replicates",
    "draw_indices",
    "stratified_resample",
]

CHUNK_SIZE = 250
WARN_FAILURE_RATE = 0.01
MAX_FAILURE_RATE = 0.10


class BootstrapError(EstimationError):
    """Too many bootstrap replicates failed to produce an estimate."""


@dataclass(frozen=True)
class BandConfig:
    replicates: int = 3000
    level: float = 0.95
    fpr_grid: np.ndarray = field(default_factory=default_grid)
    seed: int = 0
    unconditional: bool = False
    workers: int = 1
    stream_path: tuple = ()

    def __post_init__(self):
        grid = np.asarray(self.fpr_grid, dtype=float)
        object.__setattr__(self, "fpr_grid", grid)
        if self.replicates < 100:
            raise ValueError("at least 100 bootstrap replicates are required")
        if not 0.5 < self.level < 1.0:
            raise ValueError("level must lie in (0.5, 1)")
        if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
            raise ValueError("fpr_grid must be strictly increasing inside (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


@dataclass
class BatchResult:
    values: np.ndarray
    failed: np.ndarray
    params: Optional[np.ndarray] = None


class CurveEstimator:
    """Maps a two-group sample to ROC values on an FPR grid.

    Subclasses implement :meth:`evaluate`; those with a vectorized way of
    handling many resamples override :meth:`evaluate_batch`.  Both paths must
    agree replicate by replicate.
    """

    method: Method
    n_params = 0

    def evaluate(self, reference, comparator, grid):
        """Return ``(values, params)`` for one sample; ``params`` may be None."""
        raise NotImplementedError

    def evaluate_batch(self, sample: TwoGroupSample, ref_idx, comp_idx, grid) -> BatchResult:
        b = len(ref_idx)
        values = np.full((b, len(grid)), np.nan)
        params = np.full((b, self.n_params), np.nan) if self.n_params else None
        failed = np.zeros(b, dtype=bool)
        for r in range(b):
            ref = sample.reference[ref_idx[r]]
            comp = sample.comparator[comp_idx[r]]
            if ref.size < 2 or comp.size < 2:
                failed[r] = True
                continue
            try:
                v, p = self.evaluate(ref, comp, grid)
            except (ArithmeticError, ValueError):
                failed[r] = True
                continue
            values[r] = v
            if params is not None:
                params[r] = p
        return BatchResult(values, failed, params)


def _split(u: np.ndarray, n0: int, n1: int, unconditional: bool):
    if not unconditional:
        ref_idx = np.minimum(np.floor(u[:, :n0] * n0).astype(np.int64), n0 - 1)
        comp_idx = np.minimum(np.floor(u[:, n0:] * n1).astype(np.int64), n1 - 1)
        return ref_idx, comp_idx
    n = n0 + n1
    pooled = np.minimum(np.floor(u * n).astype(np.int64), n - 1)
    ref_idx = [row[row < n0] for row in pooled]
    comp_idx = [row[row >= n0] - n0 for row in pooled]
    return ref_idx, comp_idx


def draw_indices(sample: TwoGroupSample, seed: int, stream_ids, path: Sequence[int] = (), unconditional=False):
    """Resample indices for the given replicate streams.

    Stratified resampling draws ``n0`` reference and ``n1`` comparator indices
    independently within group; the unconditional variant resamples the pooled
    data, so group sizes vary (and are returned as ragged lists).
    """
    u = uniform_block(seed, np.asarray(stream_ids), sample.n, path)
    return _split(u, sample.n0, sample.n1, unconditional)


def stratified_resample(sample: TwoGroupSample, rng: RngStream) -> TwoGroupSample:
    """Full-size resample with replacement within each group."""
    u = rng.uniform(sample.n)[None, :]
    ref_idx, comp_idx = _split(u, sample.n0, sample.n1, False)
    return TwoGroupSample(sample.reference[ref_idx[0]], sample.comparator[comp_idx[0]], sample.orientation)


@dataclass
class ReplicateSet:
    values: np.ndarray
    failed: np.ndarray
    params: Optional[np.ndarray] = None

    @property
    def n_failed(self) -> int:
        return int(self.failed.sum())

    @property
    def ok_values(self) -> np.ndarray:
        return self.values[~self.failed]


def _run_chunk(args):
    sample, estimator, config, start, stop = args
    ref_idx, comp_idx = draw_indices(sample, config.seed, np.arange(start, stop), config.stream_path, config.unconditional)
    if config.unconditional:
        return CurveEstimator.evaluate_batch(estimator, sample, ref_idx, comp_idx, config.fpr_grid)
    return estimator.evaluate_batch(sample, ref_idx, comp_idx, config.fpr_grid)


def bootstrap_replicates(sample: TwoGroupSample, estimator: CurveEstimator, config: BandConfig) -> ReplicateSet:
    """Evaluate ``estimator`` on every bootstrap resample, in replicate order."""
    tasks = [
        (sample, estimator, config, start, min(start + CHUNK_SIZE, config.replicates))
        for start in range(0, config.replicates, CHUNK_SIZE)
    ]
    workers = max(1, min(int(config.workers), len(tasks)))
    if workers == 1:
        results = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    values = np.concatenate([r.values for r in results])
    failed = np.concatenate([r.failed for r in results])
    params = None
    if results[0].params is not None:
        params = np.concatenate([r.params for r in results])
    return ReplicateSet(values, failed, params)


def percentile_band(values: np.ndarray, level: float):
    """Pointwise percentile interval over replicate rows (linear interpolation)."""
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [tail, 1.0 - tail], axis=0, method="linear")
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


def failure_warnings(reps: ReplicateSet, total: int) -> list[str]:
    rate = reps.n_failed / total
    if rate > MAX_FAILURE_RATE:
        raise BootstrapError(f"{reps.n_failed} of {total} bootstrap replicates failed")
    if rate > WARN_FAILURE_RATE:
        return [f"{reps.n_failed} of {total} bootstrap replicates failed and were dropped"]
    return []


def band_from_replicates(point: np.ndarray, reps: ReplicateSet, config: BandConfig, method: Method) -> RocCurveEstimate:
    notes = failure_warnings(reps, config.replicates)
    lo, hi = percentile_band(reps.ok_values, config.level)
    if np.any(point < lo - 1e-12) or np.any(point > hi + 1e-12):
        notes.append("point estimate falls outside the percentile band at some FPR values")
    return materialize(config.fpr_grid, point, method, lo, hi, config.level, tuple(notes))


def bootstrap_band(sample: TwoGroupSample, estimator: CurveEstimator, config: BandConfig) -> RocCurveEstimate:
    """Point estimate on the original sample plus a pointwise percentile band."""
    point, _ = estimator.evaluate(sample.reference, sample.comparator, config.fpr_grid)
    reps = bootstrap_replicates(sample, estimator, config)
    return band_from_replicates(np.asarray(point, dtype=float), reps, config, estimator.method)


def default_workers() -> int:
    return os.cpu_count() or 1
