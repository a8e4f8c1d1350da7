"""B-spline bases, roughness penalties and tensor-product designs."""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from .errors import ClampingWarning, ValidationError
from .quantiles import QuantileGrid

DEFAULT_DEGREE = 3
# Basis size for beta(p); lambda controls the effective complexity.
DEFAULT_BASIS_SIZE = 10
# Marginal basis size for each direction of a tensor-product surface.
DEFAULT_SURFACE_BASIS_SIZE = 7

PENALTY_KINDS = ("second_derivative", "second_difference")


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Clamped B-spline basis with equally spaced interior knots on [lower, upper]."""
    lower: float
    upper: float
    degree: int
    n_basis: int
    knots: np.ndarray

    @property
    def domain(self) -> tuple[float, float]:
        return (self.lower, self.upper)

    @cached_property
    def _spline(self) -> BSpline:
        # One spline with identity coefficients evaluates every basis function.
        return BSpline(self.knots, np.eye(self.n_basis), self.degree, extrapolate=True)

    def evaluate(self, x, deriv: int = 0) -> np.ndarray:
        """(len(x), n_basis) basis values (or derivatives) at x clipped to the domain."""
        x = np.clip(np.asarray(x, dtype=float).ravel(), self.lower, self.upper)
        if deriv == 0:
            return self._spline(x)
        if deriv > self.degree:
            return np.zeros((x.size, self.n_basis))
        return self._spline.derivative(deriv)(x)


def build_basis(
    domain: tuple[float, float] = (0.0, 1.0),
    degree: int = DEFAULT_DEGREE,
    n_basis: int = DEFAULT_BASIS_SIZE,
) -> SplineBasis:
    """
    Clamped B-spline basis on ``domain``.

    Boundary knots are repeated degree + 1 times; the n_basis - degree - 1
    interior knots are equally spaced.
    """
    lower, upper = float(domain[0]), float(domain[1])
    if not lower < upper:
        raise ValidationError(f"spline domain must satisfy a < b, got [{lower}, {upper}]")
    if degree < 0:
        raise ValidationError(f"spline degree must be >= 0, got {degree}")
    if n_basis < degree + 1:
        raise ValidationError(
            f"basis size {n_basis} too small for degree {degree} (need >= {degree + 1})"
        )
    n_interior = n_basis - degree - 1
    interior = np.linspace(lower, upper, n_interior + 2)[1:-1]
    knots = np.concatenate((
        np.full(degree + 1, lower),
        interior,
        np.full(degree + 1, upper),
    ))
    return SplineBasis(lower=lower, upper=upper, degree=degree, n_basis=n_basis, knots=knots)


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """Symmetric positive semidefinite roughness penalty."""
    matrix: np.ndarray
    kind: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("penalty matrix must be square")
        if self.kind not in PENALTY_KINDS + ("tensor",):
            raise ValidationError(f"unknown penalty kind '{self.kind}'")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])


def second_derivative_penalty(basis: SplineBasis) -> PenaltyMatrix:
    """
    P_kl = int theta_k''(x) theta_l''(x) dx, exact by Gauss-Legendre per knot span.

    theta'' is a polynomial of degree (degree - 2) on each span, so
    degree - 1 nodes integrate the products exactly; one extra node is used.
    """
    if basis.degree < 2:
        raise ValidationError(
            f"second-derivative penalty needs spline degree >= 2, got {basis.degree}"
        )
    nodes, weights = leggauss(basis.degree)
    breaks = np.unique(basis.knots)
    penalty = np.zeros((basis.n_basis, basis.n_basis))
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        x = a + half * (nodes + 1.0)
        d2 = basis.evaluate(x, deriv=2)
        penalty += d2.T @ (d2 * (half * weights)[:, None])
    return PenaltyMatrix(penalty, "second_derivative")


def difference_penalty(n_basis: int, order: int = 2) -> PenaltyMatrix:
    """D^T D with D the order-th difference operator on coefficients."""
    if n_basis <= order:
        raise ValidationError(
            f"difference penalty of order {order} needs more than {order} coefficients"
        )
    D = np.diff(np.eye(n_basis), order, axis=0)
    return PenaltyMatrix(D.T @ D, "second_difference")


def tensor_design_row(
    q_values,
    basis_q: SplineBasis,
    basis_p: SplineBasis,
    grid: QuantileGrid,
) -> np.ndarray:
    """
    Integrated tensor-product design row for one quantile function.

    Entry (k, l), stored at k * L + l, is int B_{Q,k}(Q(p)) B_{P,l}(p) dp on
    the grid. Quantile values outside the q-basis domain are clamped.
    """
    q_values = np.asarray(q_values, dtype=float).ravel()
    if q_values.size != grid.resolution:
        raise ValidationError(
            f"quantile values have length {q_values.size}, grid has {grid.resolution}"
        )
    outside = (q_values < basis_q.lower) | (q_values > basis_q.upper)
    if np.any(outside):
        warnings.warn(
            f"{int(outside.sum())} quantile values outside the q-basis domain "
            f"[{basis_q.lower:.6g}, {basis_q.upper:.6g}] were clamped",
            ClampingWarning,
            stacklevel=2,
        )
    Bq = basis_q.evaluate(q_values)
    Bp = basis_p.evaluate(grid.levels)
    return np.einsum("j,jk,jl->kl", grid.cell_weights, Bq, Bp).ravel()


def tensor_design(
    q_matrix: np.ndarray,
    basis_q: SplineBasis,
    basis_p: SplineBasis,
    grid: QuantileGrid,
) -> np.ndarray:
    """Stack of tensor_design_row over the rows of an (n, M) quantile matrix."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ClampingWarning)
        rows = np.stack([tensor_design_row(q, basis_q, basis_p, grid) for q in q_matrix])
    n_clamped = sum(1 for w in caught if issubclass(w.category, ClampingWarning))
    if n_clamped:
        warnings.warn(
            f"quantile values of {n_clamped} subjects were clamped to the q-basis domain",
            ClampingWarning,
            stacklevel=2,
        )
    return rows


def kronecker_penalty(
    P_q: PenaltyMatrix,
    P_p: PenaltyMatrix,
    lam_q: float,
    lam_p: float,
) -> PenaltyMatrix:
    """lam_q (P_q kron I_L) + lam_p (I_K kron P_p) for coefficients indexed k * L + l."""
    if lam_q < 0 or lam_p < 0:
        raise ValidationError(f"smoothing parameters must be nonnegative, got {lam_q}, {lam_p}")
    K, L = P_q.size, P_p.size
    row = np.kron(P_q.matrix, np.eye(L))
    col = np.kron(np.eye(K), P_p.matrix)
    return PenaltyMatrix(lam_q * row + lam_p * col, "tensor")


def kronecker_components(P_q: PenaltyMatrix, P_p: PenaltyMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Unscaled q-direction and p-direction components of the tensor penalty."""
    return (
        kronecker_penalty(P_q, P_p, 1.0, 0.0).matrix,
        kronecker_penalty(P_q, P_p, 0.0, 1.0).matrix,
    )
