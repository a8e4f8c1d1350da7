"""
L-moments of quantile functions and samples.

The r-th L-moment is the projection of the quantile function onto the
shifted Legendre polynomial P_{r-1}:

    L_r = integral_0^1 Q(p) P_{r-1}(p) dp

and Q is recovered from its first K L-moments as
sum_r (2r - 1) L_r P_{r-1}(p). Sample L-moments use the unbiased
probability-weighted-moment estimator on order statistics.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import eval_sh_legendre

from .errors import ValidationError
from .quantiles import (
    QuantileFunction,
    QuantileGrid,
    estimate_quantile_function,
    integrate_on_grid,
)

if TYPE_CHECKING:
    from .datasets import RepeatedMeasuresDataset

# Integer coefficients overflow double precision past this degree.
MAX_LEGENDRE_DEGREE = 12

# First four L-moments: location, scale, skewness and kurtosis analogues.
DEFAULT_ORDER = 4
MAX_ORDER = 8

METHODS = ("projection", "sample")


@dataclass(frozen=True)
class LegendreBasis:
    """Exact integer coefficients s_{r,k} of shifted Legendre polynomials."""
    max_degree: int
    coefficients: tuple[tuple[int, ...], ...]

    @classmethod
    def build(cls, max_degree: int) -> "LegendreBasis":
        _check_degree(max_degree)
        return cls(max_degree=max_degree, coefficients=_coefficient_table(max_degree))

    def row(self, r: int) -> tuple[int, ...]:
        """Coefficients s_{r,0..r} of P_r(p) = sum_k s_{r,k} p^k."""
        if not 0 <= r <= self.max_degree:
            raise ValidationError(f"degree {r} outside 0..{self.max_degree}")
        return self.coefficients[r]

    def evaluate(self, r: int, p) -> np.ndarray:
        """P_r(p) from the integer coefficients; exact for moderate degrees."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise ValidationError("shifted Legendre polynomials are defined on [0, 1]")
        return np.polynomial.polynomial.polyval(p, np.asarray(self.row(r), dtype=float))


def _check_degree(r: int) -> None:
    if r < 0:
        raise ValidationError(f"Legendre degree must be nonnegative, got {r}")
    if r > MAX_LEGENDRE_DEGREE:
        raise ValidationError(
            f"Legendre degree {r} exceeds the supported maximum {MAX_LEGENDRE_DEGREE}"
        )


@lru_cache(maxsize=None)
def _coefficient_table(max_degree: int) -> tuple[tuple[int, ...], ...]:
    return tuple(
        tuple((-1) ** (r - k) * comb(r, k) * comb(r + k, k) for k in range(r + 1))
        for r in range(max_degree + 1)
    )


def legendre_shifted(r: int, p) -> np.ndarray:
    """Shifted Legendre polynomial P_r on [0, 1]."""
    _check_degree(r)
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("shifted Legendre polynomials are defined on [0, 1]")
    # three-term recurrence inside scipy; stabler than the monomial sum
    return eval_sh_legendre(r, p)


@lru_cache(maxsize=32)
def _legendre_on_grid(levels: bytes, order: int) -> np.ndarray:
    p = np.frombuffer(levels, dtype=float)
    table = np.stack([legendre_shifted(r, p) for r in range(order)])
    table.setflags(write=False)
    return table


def legendre_table(grid: QuantileGrid, order: int) -> np.ndarray:
    """(order, M) array with P_0..P_{order-1} evaluated on the grid."""
    _check_degree(order - 1)
    return _legendre_on_grid(grid.levels.tobytes(), order)


@dataclass(frozen=True, eq=False)
class LMomentVector:
    """First K L-moments L_1..L_K of one subject-feature distribution."""
    values: np.ndarray
    subject_id: str = ""
    feature_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size < 1:
            raise ValidationError("an L-moment vector needs at least one value")
        if not np.all(np.isfinite(values)):
            raise ValidationError("L-moments must be finite")
        if values.size >= 2:
            slack = 1e-10 * max(1.0, abs(values[0]))
            if values[1] < -slack:
                raise ValidationError(f"L-scale must be nonnegative, got {values[1]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def order(self) -> int:
        return int(self.values.size)

    def __getitem__(self, r: int) -> float:
        """1-based access: lm[1] is the mean."""
        if not 1 <= r <= self.order:
            raise IndexError(f"L-moment order {r} outside 1..{self.order}")
        return float(self.values[r - 1])


@dataclass(frozen=True, eq=False)
class PveProfile:
    """Proportion of quantile-function variance explained by k L-moments."""
    tau_sq: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau_sq, dtype=float).ravel()
        tau.setflags(write=False)
        object.__setattr__(self, "tau_sq", tau)

    def __getitem__(self, k: int) -> float:
        return float(self.tau_sq[k - 1])


def _check_order(K: int) -> None:
    if K < 1:
        raise ValidationError(f"L-moment order must be >= 1, got {K}")
    _check_degree(K - 1)


def lmoments_from_quantile(qf: QuantileFunction, K: int = DEFAULT_ORDER) -> LMomentVector:
    """Projection L-moments L_r = integral Q(p) P_{r-1}(p) dp on the grid."""
    _check_order(K)
    table = legendre_table(qf.grid, K)
    values = integrate_on_grid(table * qf.values, qf.grid)
    return LMomentVector(values=values, subject_id=qf.subject_id, feature_id=qf.feature_id)


def _pwm_weights(n: int, K: int) -> np.ndarray:
    """(K, n) weights with b_r = weights[r] @ sorted sample."""
    i = np.arange(1, n + 1, dtype=float)
    weights = np.empty((K, n))
    ratio = np.ones(n)
    weights[0] = ratio / n
    for r in range(1, K):
        # prod_{j=1..r} (i - j) / (n - j)
        ratio = ratio * (i - r) / (n - r)
        weights[r] = ratio / n
    return weights


def lmoments_sample(
    sample,
    K: int = DEFAULT_ORDER,
    subject_id: str = "",
    feature_id: str = "",
) -> LMomentVector:
    """
    Unbiased sample L-moments from order statistics.

    Computes probability-weighted moments b_0..b_{K-1} and combines them with
    the shifted Legendre coefficients: L_{r+1} = sum_k s_{r,k} b_k.

    Args:
        sample: Raw observations
        K: Number of L-moments
        subject_id: Label carried on the result
        feature_id: Label carried on the result

    Returns:
        LMomentVector; L_1 is the sample mean
    """
    _check_order(K)
    x = np.sort(np.asarray(sample, dtype=float).ravel(), kind="stable")
    if not np.all(np.isfinite(x)):
        raise ValidationError("sample contains non-finite values")
    n = x.size
    if n < K:
        raise ValidationError(f"insufficient sample for order {K}: got {n} observations")

    b = _pwm_weights(n, K) @ x
    basis = LegendreBasis.build(K - 1)
    values = np.empty(K)
    values[0] = x.mean()
    for r in range(1, K):
        values[r] = sum(float(s) * b[k] for k, s in enumerate(basis.row(r)))
    return LMomentVector(values=values, subject_id=subject_id, feature_id=feature_id)


def reconstruct_quantile(lm: LMomentVector, grid: QuantileGrid) -> np.ndarray:
    """Q^K(p) = sum_r (2r - 1) L_r P_{r-1}(p) on the grid."""
    table = legendre_table(grid, lm.order)
    weights = (2.0 * np.arange(1, lm.order + 1) - 1.0) * lm.values
    out = np.zeros(grid.resolution)
    for r in range(lm.order):
        out = out + weights[r] * table[r]
    return out


def pve(qf: QuantileFunction, K: int = DEFAULT_ORDER) -> PveProfile:
    """
    tau_k^2 = 1 - int (Q - Q^k)^2 / int (Q - mu)^2 for k = 1..K.

    A constant quantile function is reconstructed exactly by its mean, so
    its profile is 0 at k = 1 and 1 afterwards.
    """
    lm = lmoments_from_quantile(qf, K)
    mu = lm.values[0]
    denom = integrate_on_grid((qf.values - mu) ** 2, qf.grid)
    tau = np.zeros(K)
    if np.ptp(qf.values) == 0 or denom <= 0:
        tau[1:] = 1.0
        return PveProfile(tau)
    for k in range(1, K + 1):
        partial = LMomentVector(values=lm.values[:k])
        resid = qf.values - reconstruct_quantile(partial, qf.grid)
        tau[k - 1] = 1.0 - integrate_on_grid(resid ** 2, qf.grid) / denom
    return PveProfile(tau)


def regular_moments_from_quantile(qf: QuantileFunction, K: int = DEFAULT_ORDER) -> np.ndarray:
    """Raw moments mu'_k = int Q(p)^k dp for k = 1..K."""
    if K < 1:
        raise ValidationError(f"moment order must be >= 1, got {K}")
    return np.array([integrate_on_grid(qf.values ** k, qf.grid) for k in range(1, K + 1)])


def central_moments(moments) -> np.ndarray:
    """
    Central moments c_2..c_K from raw moments mu'_1..mu'_K.

    Uses c_k = sum_j C(k, j) mu'_j (-mu)^{k-j} with mu'_0 = 1.
    """
    raw = np.asarray(moments, dtype=float).ravel()
    if raw.size < 4:
        raise ValidationError("central moments need at least four raw moments")
    mu = raw[0]
    full = np.concatenate(([1.0], raw))
    return np.array([
        sum(comb(k, j) * full[j] * (-mu) ** (k - j) for j in range(k + 1))
        for k in range(2, raw.size + 1)
    ])


def lmoment_ratios(lm: LMomentVector) -> np.ndarray:
    """
    L-moment ratios: L-CV L_2/L_1 followed by L_r/L_2 for r >= 3.

    Undefined ratios (zero denominator) are NaN.
    """
    if lm.order < 2:
        raise ValidationError("L-moment ratios need at least two L-moments")
    v = lm.values
    with np.errstate(divide="ignore", invalid="ignore"):
        lcv = v[1] / v[0] if v[0] != 0 else np.nan
        higher = v[2:] / v[1] if v[1] != 0 else np.full(v.size - 2, np.nan)
    return np.concatenate(([lcv], higher))


def select_order_by_pve(
    curves: Sequence[QuantileFunction],
    threshold: float = 0.9,
    max_order: int = MAX_ORDER,
) -> int:
    """Smallest k whose mean tau_k^2 over ``curves`` reaches ``threshold``."""
    if not curves:
        raise ValidationError("no quantile functions to select an order from")
    if not 0 < threshold <= 1:
        raise ValidationError(f"PVE threshold must be in (0, 1], got {threshold}")
    profiles = np.stack([pve(c, max_order).tau_sq for c in curves])
    mean_tau = profiles.mean(axis=0)
    reached = np.flatnonzero(mean_tau >= threshold)
    return int(reached[0] + 1) if reached.size else max_order


def compute_lmoments(
    sample,
    grid: QuantileGrid,
    K: int,
    method: str = "projection",
    subject_id: str = "",
    feature_id: str = "",
) -> LMomentVector:
    """L-moments of one raw sample by projection of its quantile function or directly."""
    if method == "projection":
        qf = estimate_quantile_function(sample, grid, subject_id=subject_id, feature_id=feature_id)
        return lmoments_from_quantile(qf, K)
    if method == "sample":
        return lmoments_sample(sample, K, subject_id=subject_id, feature_id=feature_id)
    raise ValidationError(f"unknown L-moment method '{method}'; use one of {', '.join(METHODS)}")


def lmoment_matrix(
    dataset: "RepeatedMeasuresDataset",
    feature: str,
    grid: QuantileGrid,
    K: int,
    method: str = "projection",
) -> np.ndarray:
    """(n_subjects, K) L-moments of ``feature`` in dataset subject order."""
    min_obs = K if method == "sample" else 2
    dataset.require_feature(feature, min_observations=max(2, min_obs))
    return np.stack([
        compute_lmoments(s.observations[feature], grid, K, method, s.subject_id, feature).values
        for s in dataset.subjects
    ])


def lmoment_table(
    dataset: "RepeatedMeasuresDataset",
    features: Sequence[str],
    grid: QuantileGrid,
    K: int = DEFAULT_ORDER,
    method: str = "projection",
) -> list[dict]:
    """Rows ``subject_id, feature_id, L1..LK`` for every subject and feature."""
    rows = []
    for feature in features:
        matrix = lmoment_matrix(dataset, feature, grid, K, method)
        for sid, values in zip(dataset.subject_ids, matrix):
            row = {"subject_id": sid, "feature_id": feature}
            row.update({f"L{r + 1}": float(v) for r, v in enumerate(values)})
            rows.append(row)
    return rows
