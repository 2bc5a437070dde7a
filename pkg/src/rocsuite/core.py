"""Two-group samples, ROC curve containers and orientation conventions.

Throughout the package the *canonical* convention is the one in which lower
values are less desirable: ROC(p) = F1(F0^{-1}(p)) and AUC = P(Y0 > Y1).
Samples declared the other way round are brought into canonical form by
negating every value, so each estimator has a single code path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "DEFAULT_GRID_SIZE",
    "EstimationError",
    "Method",
    "NullKind",
    "Orientation",
    "RocCurveEstimate",
    "RocPoint",
    "TestResult",
    "TwoGroupSample",
    "ValidationError",
    "auc_orient",
    "canonical_orientation",
    "convention_reflect",
    "default_grid",
    "validate_sample",
]

DEFAULT_GRID_SIZE = 199


class ValidationError(ValueError):
    """Input data or a curve violates a structural invariant."""


class EstimationError(ArithmeticError):
    """A fit could not be computed (degenerate data, separation, no convergence)."""


class Orientation(enum.Enum):
    LOWER_LESS_DESIRABLE = "lower"
    HIGHER_LESS_DESIRABLE = "higher"


class Method(enum.Enum):
    EMPIRICAL = "empirical"
    PARAM_BIEXP = "param-biexp"
    PARAM_BINORM = "param-binorm"
    SEMI_BIEXP = "semi-biexp"
    SEMI_BINORM = "semi-binorm"


class NullKind(enum.Enum):
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class TwoGroupSample:
    """Reference (group 0) and comparator (group 1) measurements."""

    reference: np.ndarray
    comparator: np.ndarray
    orientation: Orientation = Orientation.LOWER_LESS_DESIRABLE

    @property
    def n0(self) -> int:
        return int(self.reference.size)

    @property
    def n1(self) -> int:
        return int(self.comparator.size)

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    @property
    def is_canonical(self) -> bool:
        return self.orientation is Orientation.LOWER_LESS_DESIRABLE

    def swapped(self) -> "TwoGroupSample":
        """Same data with the roles of the two groups exchanged."""
        return TwoGroupSample(self.comparator, self.reference, self.orientation)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


def _prob_reference_greater(reference: np.ndarray, comparator: np.ndarray) -> float:
    s = np.sort(comparator)
    below = np.searchsorted(s, reference, side="left").sum()
    ties = (np.searchsorted(s, reference, side="right") - np.searchsorted(s, reference, side="left")).sum()
    return (2 * below + ties) / (2 * reference.size * comparator.size)


def validate_sample(reference, comparator, orientation="lower") -> TwoGroupSample:
    """Build a :class:`TwoGroupSample`, rejecting tiny groups and non-finite values.

    ``orientation`` may be an :class:`Orientation`, one of ``"lower"`` /
    ``"higher"``, or ``"auto"``; the latter picks the convention under which
    the empirical AUC is at least 0.5.
    """
    ref = _frozen(reference)
    comp = _frozen(comparator)
    if ref.size < 2:
        raise ValidationError("reference group too small (need at least 2 observations)")
    if comp.size < 2:
        raise ValidationError("comparator group too small (need at least 2 observations)")
    if not (np.all(np.isfinite(ref)) and np.all(np.isfinite(comp))):
        raise ValidationError("non-finite value in sample")
    if isinstance(orientation, str) and orientation == "auto":
        theta = _prob_reference_greater(ref, comp)
        orientation = Orientation.LOWER_LESS_DESIRABLE if theta >= 0.5 else Orientation.HIGHER_LESS_DESIRABLE
    return TwoGroupSample(ref, comp, Orientation(orientation))


def canonical_orientation(sample: TwoGroupSample) -> TwoGroupSample:
    """Map a sample into the lower-is-less-desirable convention by negation."""
    if sample.is_canonical:
        return sample
    return TwoGroupSample(_frozen(-sample.reference), _frozen(-sample.comparator), Orientation.LOWER_LESS_DESIRABLE)


def auc_orient(auc: float) -> float:
    """Report an AUC under the convention 0.5 <= AUC <= 1."""
    if not 0.0 <= auc <= 1.0:
        raise ValueError("auc must lie in [0, 1]")
    return max(auc, 1.0 - auc)


def default_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """``size`` equally spaced FPR values strictly inside (0, 1)."""
    return np.linspace(0.0, 1.0, size + 2)[1:-1]


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float
    threshold: Optional[float] = None


@dataclass(frozen=True)
class TestResult:
    """Outcome of a hypothesis test about the ROC curve."""

    __test__ = False  # not a pytest class

    name: str
    statistic: float
    p_value: float
    null_kind: NullKind
    reference_distribution: str

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValidationError(f"p-value {self.p_value} outside [0, 1]")


_MONO_TOL = 1e-12


@dataclass(frozen=True)
class RocCurveEstimate:
    """An ROC curve on a finite FPR grid, optionally with a pointwise band.

    ``band_axis`` names the coordinate the band brackets.  Estimators always
    produce vertical bands (``"tpr"``); :func:`convention_reflect` turns them
    into horizontal ones (``"fpr"``).
    """

    fpr: np.ndarray
    tpr: np.ndarray
    method: Method
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    level: float = 0.95
    thresholds: Optional[np.ndarray] = None
    band_axis: str = "tpr"
    warnings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        fpr = _frozen(self.fpr)
        tpr = _frozen(self.tpr)
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)
        if fpr.shape != tpr.shape or fpr.size < 2:
            raise ValidationError("fpr and tpr must be equal-length vectors of at least 2 points")
        if np.any(fpr < 0) or np.any(fpr > 1) or np.any(tpr < 0) or np.any(tpr > 1):
            raise ValidationError("curve coordinates must lie in [0, 1]")
        if np.any(np.diff(fpr) < -_MONO_TOL) or np.any(np.diff(tpr) < -_MONO_TOL):
            raise ValidationError("curve must be sorted by fpr with nondecreasing tpr")
        if fpr[0] != 0.0 or tpr[0] != 0.0 or fpr[-1] != 1.0 or tpr[-1] != 1.0:
            raise ValidationError("curve must start at (0, 0) and end at (1, 1)")
        if (self.lower is None) != (self.upper is None):
            raise ValidationError("band needs both lower and upper")
        if self.lower is not None:
            lo = _frozen(self.lower)
            hi = _frozen(self.upper)
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
            if lo.shape != fpr.shape or hi.shape != fpr.shape:
                raise ValidationError("band must have one interval per point")
            if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
                raise ValidationError("band endpoints must satisfy 0 <= lower <= upper <= 1")
        if self.thresholds is not None:
            object.__setattr__(self, "thresholds", _frozen(self.thresholds))
        if self.band_axis not in ("tpr", "fpr"):
            raise ValidationError("band_axis must be 'tpr' or 'fpr'")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("level must lie in (0, 1)")

    @property
    def has_band(self) -> bool:
        return self.lower is not None

    @property
    def points(self) -> list[RocPoint]:
        thr = self.thresholds if self.thresholds is not None else [None] * self.fpr.size
        return [
            RocPoint(float(x), float(y), None if t is None or not np.isfinite(t) else float(t))
            for x, y, t in zip(self.fpr, self.tpr, thr)
        ]

    def band_contains_estimate(self) -> bool:
        if not self.has_band:
            return True
        coord = self.tpr if self.band_axis == "tpr" else self.fpr
        return bool(np.all((self.lower <= coord + _MONO_TOL) & (coord <= self.upper + _MONO_TOL)))

    def trapezoid_auc(self) -> float:
        """Area under the polyline through the stored points."""
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1])) / 2.0)


def convention_reflect(curve: RocCurveEstimate) -> RocCurveEstimate:
    """Reflect a curve about the line y = 1 - x.

    This is the combined effect of flipping the direction convention and
    swapping the groups.  A band ``(lo, hi)`` on one axis becomes
    ``(1 - hi, 1 - lo)`` on the other, so applying the map twice is exact.
    """
    fpr = (1.0 - curve.tpr)[::-1]
    tpr = (1.0 - curve.fpr)[::-1]
    lower = upper = None
    if curve.has_band:
        lower = (1.0 - curve.upper)[::-1]
        upper = (1.0 - curve.lower)[::-1]
    thresholds = None if curve.thresholds is None else (-curve.thresholds)[::-1]
    return replace(
        curve,
        fpr=fpr,
        tpr=tpr,
        lower=lower,
        upper=upper,
        thresholds=thresholds,
        band_axis="fpr" if curve.band_axis == "tpr" else "tpr",
    )


def materialize(
    fpr_grid: Sequence[float],
    tpr: np.ndarray,
    method: Method,
    lower=None,
    upper=None,
    level: float = 0.95,
    warnings: tuple = (),
) -> RocCurveEstimate:
    """Wrap grid values of a smooth curve, appending the (0, 0) and (1, 1) endpoints."""
    grid = np.asarray(fpr_grid, dtype=float)
    pad = lambda v: np.concatenate(([0.0], np.clip(np.asarray(v, dtype=float), 0.0, 1.0), [1.0]))
    band = (None, None) if lower is None else (pad(lower), pad(upper))
    return RocCurveEstimate(
        fpr=pad(grid),
        tpr=pad(tpr),
        method=method,
        lower=band[0],
        upper=band[1],
        level=level,
        warnings=tuple(warnings),
    )
