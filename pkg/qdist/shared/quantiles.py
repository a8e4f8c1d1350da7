"""Subject-specific quantile functions and quantile-space geometry.

Quantile functions live on a shared grid of levels in (0, 1). Every integral
over [0, 1] in qdist is a midpoint-rule sum over that grid, so all modules
agree on the same quadrature.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import ValidationError

if TYPE_CHECKING:
    from .datasets import RepeatedMeasuresDataset

# 100 midpoint levels keep p away from 0 and 1, where empirical quantiles
# are driven by single extreme observations.
DEFAULT_RESOLUTION = 100

# Relative slack for monotonicity checks on computed curves.
_MONOTONE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """Strictly increasing quantile levels shared by all subjects."""
    levels: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float).ravel()
        if levels.size == 0:
            raise ValidationError("quantile grid needs at least one level")
        if not np.all(np.isfinite(levels)):
            raise ValidationError("quantile grid levels must be finite")
        if levels[0] <= 0.0 or levels[-1] >= 1.0:
            raise ValidationError("quantile grid levels must lie strictly inside (0, 1)")
        if np.any(np.diff(levels) <= 0):
            raise ValidationError("quantile grid levels must be strictly increasing")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def midpoint(cls, resolution: int = DEFAULT_RESOLUTION) -> "QuantileGrid":
        """Grid p_j = (j - 0.5) / M, j = 1..M."""
        if resolution < 1:
            raise ValidationError(f"grid resolution must be >= 1, got {resolution}")
        return cls((np.arange(1, resolution + 1) - 0.5) / resolution)

    @property
    def resolution(self) -> int:
        return int(self.levels.size)

    @property
    def cell_edges(self) -> np.ndarray:
        """Cell boundaries: 0, midpoints between levels, 1."""
        inner = 0.5 * (self.levels[1:] + self.levels[:-1])
        return np.concatenate(([0.0], inner, [1.0]))

    @property
    def cell_weights(self) -> np.ndarray:
        """Quadrature weights (cell widths); they sum to 1."""
        return np.diff(self.cell_edges)

    def same_as(self, other: "QuantileGrid") -> bool:
        return self is other or (
            self.resolution == other.resolution
            and np.array_equal(self.levels, other.levels)
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantileGrid):
            return NotImplemented
        return self.same_as(other)

    def __hash__(self) -> int:
        return hash((self.resolution, self.levels.tobytes()))


@dataclass(frozen=True, eq=False)
class QuantileFunction:
    """A nondecreasing quantile function sampled on a QuantileGrid."""
    grid: QuantileGrid
    values: np.ndarray
    subject_id: str = ""
    feature_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.resolution:
            raise ValidationError(
                f"quantile function has {values.size} values but the grid has "
                f"{self.grid.resolution} levels"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("quantile function values must be finite")
        steps = np.diff(values)
        slack = _MONOTONE_RTOL * max(1.0, float(np.max(np.abs(values))))
        if np.any(steps < -slack):
            raise ValidationError(
                f"quantile function for subject '{self.subject_id}' "
                f"feature '{self.feature_id}' is not nondecreasing"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def levels(self) -> np.ndarray:
        return self.grid.levels

    def __call__(self, p) -> np.ndarray:
        """Linear interpolation between grid levels (flat beyond the ends)."""
        return np.interp(p, self.grid.levels, self.values)


def _check_same_grid(grids: Iterable[QuantileGrid]) -> QuantileGrid:
    grids = list(grids)
    first = grids[0]
    for g in grids[1:]:
        if not first.same_as(g):
            raise ValidationError("quantile functions are on different grids")
    return first


def integrate_on_grid(values, grid: QuantileGrid) -> float:
    """Midpoint-rule integral over [0, 1] using the grid's cells."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.resolution:
        raise ValidationError(
            f"cannot integrate {values.shape[-1]} values on a grid of "
            f"{grid.resolution} levels"
        )
    return values @ grid.cell_weights


def estimate_quantile_function(
    sample,
    grid: QuantileGrid,
    subject_id: str = "",
    feature_id: str = "",
) -> QuantileFunction:
    """
    Empirical quantile function by linear interpolation of order statistics.

    At level p with h = (n + 1) p, k = floor(h) and w = h - k the estimate is
    (1 - w) X_(k) + w X_(k+1). Order-statistic indices outside [1, n] clamp
    to the extreme observations.

    Args:
        sample: Raw observations (any order, ties allowed)
        grid: Shared quantile grid
        subject_id: Label carried on the result
        feature_id: Label carried on the result

    Returns:
        QuantileFunction on ``grid``
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("no observations")
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        shown = ", ".join(str(i) for i in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        raise ValidationError(f"non-finite observations at positions {shown}{more}")

    x = np.sort(x, kind="stable")
    n = x.size
    h = (n + 1) * grid.levels
    k = np.floor(h).astype(int)
    w = h - k
    lo = x[np.clip(k, 1, n) - 1]
    hi = x[np.clip(k + 1, 1, n) - 1]
    # The clip keeps each value inside [lo, hi] so rounding can't break order.
    values = np.clip(lo + w * (hi - lo), lo, hi)
    return QuantileFunction(grid=grid, values=values, subject_id=subject_id, feature_id=feature_id)


def group_mean_quantile(
    curves: Sequence[QuantileFunction],
    subject_id: str = "group-mean",
) -> QuantileFunction:
    """Pointwise average of quantile functions (the 2-Wasserstein barycenter)."""
    if len(curves) == 0:
        raise ValidationError("cannot average an empty list of quantile functions")
    grid = _check_same_grid(c.grid for c in curves)
    values = np.mean(np.stack([c.values for c in curves]), axis=0)
    return QuantileFunction(
        grid=grid,
        values=values,
        subject_id=subject_id,
        feature_id=curves[0].feature_id,
    )


def wasserstein2_distance(a: QuantileFunction, b: QuantileFunction) -> float:
    """L2 distance between quantile functions on their shared grid."""
    grid = _check_same_grid([a.grid, b.grid])
    diff = a.values - b.values
    return float(np.sqrt(max(integrate_on_grid(diff * diff, grid), 0.0)))


def robust_standardize(qf: QuantileFunction) -> QuantileFunction:
    """Rescale a quantile function to (Q(p) - median) / IQR."""
    q25, q50, q75 = qf(np.array([0.25, 0.5, 0.75]))
    iqr = q75 - q25
    if iqr <= 0:
        raise ValidationError(
            f"interquartile range is zero for subject '{qf.subject_id}' "
            f"feature '{qf.feature_id}'"
        )
    return QuantileFunction(
        grid=qf.grid,
        values=(qf.values - q50) / iqr,
        subject_id=qf.subject_id,
        feature_id=qf.feature_id,
    )


def estimate_quantile_functions(
    dataset: "RepeatedMeasuresDataset",
    feature: str,
    grid: QuantileGrid,
) -> dict[str, QuantileFunction]:
    """Quantile function of ``feature`` for every subject, keyed by subject id."""
    dataset.require_feature(feature)
    return {
        s.subject_id: estimate_quantile_function(
            s.observations[feature], grid, subject_id=s.subject_id, feature_id=feature
        )
        for s in dataset.subjects
    }


def quantile_matrix(curves: Sequence[QuantileFunction]) -> np.ndarray:
    """Stack quantile functions into an (n_subjects, M) array."""
    if len(curves) == 0:
        raise ValidationError("no quantile functions to stack")
    _check_same_grid(c.grid for c in curves)
    return np.stack([c.values for c in curves])


def group_barycenters(
    dataset: "RepeatedMeasuresDataset",
    feature: str,
    grid: QuantileGrid,
) -> dict[str, QuantileFunction]:
    """
    Barycenter of each outcome group.

    Binary outcomes give groups "0" and "1"; continuous outcomes are split at
    the median into "low" and "high".
    """
    curves = estimate_quantile_functions(dataset, feature, grid)
    y = dataset.outcomes()
    ids = dataset.subject_ids
    if dataset.outcome_type == "binary":
        labels = np.where(y > 0.5, "1", "0")
    else:
        labels = np.where(y > np.median(y), "high", "low")

    groups: dict[str, list[QuantileFunction]] = {}
    for sid, label in zip(ids, labels):
        groups.setdefault(str(label), []).append(curves[sid])
    return {
        label: group_mean_quantile(members, subject_id=f"group-{label}")
        for label, members in sorted(groups.items())
    }
