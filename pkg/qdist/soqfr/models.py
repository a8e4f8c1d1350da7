"""
Regression models with distributional predictors.

Each model is a recipe (the configuration) whose ``fit(dataset)`` returns a
fitted model with ``predict(dataset)``. Everything derived from data, such as
q-domains, L-moment ranges, bin edges and centering constraints, comes from
the training dataset and is frozen in the fitted object.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..shared.datasets import RepeatedMeasuresDataset
from ..shared.errors import ClampingWarning, ValidationError
from ..shared.lmoments import MAX_ORDER, METHODS, legendre_table, lmoment_matrix
from ..shared.pglm import (
    FAMILIES,
    ModelSpec,
    PenalizedBlock,
    PenalizedFit,
    deviance_explained,
    fit_pirls,
    pointwise_band,
    select_lambda_gcv,
)
from ..shared.quantiles import (
    DEFAULT_RESOLUTION,
    QuantileGrid,
    estimate_quantile_function,
    robust_standardize,
)
from ..shared.splines import (
    DEFAULT_BASIS_SIZE,
    DEFAULT_DEGREE,
    DEFAULT_SURFACE_BASIS_SIZE,
    SplineBasis,
    build_basis,
    difference_penalty,
    kronecker_components,
    second_derivative_penalty,
    tensor_design,
)

SOQFR_BASES = ("bspline", "legendre", "constant")

# 11 x 11 product grid for the two surface smoothing parameters.
FGAM_LAMBDA_GRID = np.logspace(-5, 5, 11)

# The q-basis domain extends the training range by this fraction per side.
Q_DOMAIN_MARGIN = 0.02

GAM_BASIS_SIZE = 6

DEFAULT_SLICE_LEVELS = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass(frozen=True)
class BinSpec:
    """Equal-width bins on [lower, upper]; bounds default to the training range."""
    n_bins: int = 22
    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValidationError(f"histogram needs at least 2 bins, got {self.n_bins}")
        if self.lower is not None and self.upper is not None and not self.lower < self.upper:
            raise ValidationError(f"bin range must satisfy lower < upper, got [{self.lower}, {self.upper}]")

    def edges(self, samples: Sequence[np.ndarray]) -> np.ndarray:
        lower = self.lower if self.lower is not None else min(float(np.min(s)) for s in samples)
        upper = self.upper if self.upper is not None else max(float(np.max(s)) for s in samples)
        if not lower < upper:
            raise ValidationError("observations have zero range; cannot build histogram bins")
        return np.linspace(lower, upper, self.n_bins + 1)


# Step velocity: 22 equal bins of width 10 between 35 and 255.
STEP_VELOCITY_BINS = BinSpec(n_bins=22, lower=35.0, upper=255.0)


@dataclass(frozen=True, eq=False)
class FunctionalCoefficient:
    """A coefficient function sampled on points, with a pointwise 95% band."""
    points: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    axis: str = "p"

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, k), dtype=float).ravel()
                  for k in ("points", "estimate", "lower", "upper")]
        if len({a.size for a in arrays}) != 1:
            raise ValidationError("functional coefficient arrays differ in length")
        for name, a in zip(("points", "estimate", "lower", "upper"), arrays):
            object.__setattr__(self, name, a)

    def rows(self) -> list[dict]:
        """Long rows ``<axis>,estimate,lower,upper`` for CSV emission."""
        return [
            {self.axis: float(x), "estimate": float(e), "lower": float(lo), "upper": float(hi)}
            for x, e, lo, hi in zip(self.points, self.estimate, self.lower, self.upper)
        ]

    def integral(self, weights: Optional[np.ndarray] = None) -> float:
        """Quadrature of the estimate, by default with equal weights."""
        if weights is None:
            weights = np.full(self.points.size, 1.0 / self.points.size)
        return float(self.estimate @ weights)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            self.axis: self.points.tolist(),
            "estimate": self.estimate.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SurfaceCoefficient:
    """Fitted surface F(q, p) on a q-grid by p-grid mesh."""
    q_grid: np.ndarray
    p_grid: np.ndarray
    values: np.ndarray
    basis_q: SplineBasis
    basis_p: SplineBasis
    coefficients: np.ndarray

    def evaluate(self, q, p) -> np.ndarray:
        """F at the mesh of ``q`` (rows) and ``p`` (columns)."""
        theta = self.coefficients.reshape(self.basis_q.n_basis, self.basis_p.n_basis)
        return self.basis_q.evaluate(q) @ theta @ self.basis_p.evaluate(p).T

    def slice_at(self, levels: Sequence[float] = DEFAULT_SLICE_LEVELS) -> dict[float, np.ndarray]:
        """F(q, p) over the q-grid at each fixed p in ``levels``."""
        surface = self.evaluate(self.q_grid, np.asarray(levels, dtype=float))
        return {float(p): surface[:, j] for j, p in enumerate(levels)}

    def rows(self) -> list[dict]:
        """Long rows ``q,p,value``."""
        return [
            {"q": float(q), "p": float(p), "value": float(self.values[i, j])}
            for i, q in enumerate(self.q_grid)
            for j, p in enumerate(self.p_grid)
        ]


@dataclass(frozen=True, eq=False)
class HistogramPredictor:
    """Shared bin edges and per-subject relative frequencies."""
    edges: np.ndarray
    frequencies: np.ndarray

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @classmethod
    def from_samples(cls, samples: Sequence[np.ndarray], edges: np.ndarray) -> "HistogramPredictor":
        lower, upper = float(edges[0]), float(edges[-1])
        n_clamped = 0
        rows = []
        for x in samples:
            x = np.asarray(x, dtype=float)
            outside = (x < lower) | (x > upper)
            n_clamped += int(outside.sum())
            counts, _ = np.histogram(np.clip(x, lower, upper), bins=edges)
            rows.append(counts / counts.sum())
        if n_clamped:
            warnings.warn(
                f"{n_clamped} observations outside [{lower:.6g}, {upper:.6g}] "
                "were clamped to the end bins",
                ClampingWarning,
                stacklevel=3,
            )
        return cls(edges=np.asarray(edges, dtype=float), frequencies=np.stack(rows))


def resolve_family(family: Optional[str], dataset: RepeatedMeasuresDataset) -> str:
    """``None`` or "auto" picks binomial for 0/1 outcomes and gaussian otherwise."""
    if family in (None, "auto"):
        return "binomial" if dataset.outcome_type == "binary" else "gaussian"
    if family not in FAMILIES:
        raise ValidationError(f"unknown family '{family}'; use one of {', '.join(FAMILIES)}")
    return family


def _sum_to_zero_basis(column_means: np.ndarray) -> np.ndarray:
    """Orthonormal basis Z of {theta : column_means @ theta = 0}."""
    q, _ = np.linalg.qr(column_means.reshape(-1, 1), mode="complete")
    return q[:, 1:]


@dataclass(frozen=True, eq=False)
class CenteredSmooth:
    """Frozen sum-to-zero reparametrization of a design block."""
    means: np.ndarray
    Z: np.ndarray

    @classmethod
    def from_design(cls, design: np.ndarray) -> "CenteredSmooth":
        means = design.mean(axis=0)
        return cls(means=means, Z=_sum_to_zero_basis(means))

    def transform(self, design: np.ndarray) -> np.ndarray:
        return (design - self.means) @ self.Z

    def penalty(self, matrix: np.ndarray) -> np.ndarray:
        return self.Z.T @ matrix @ self.Z


class _Recipe:
    """Shared plumbing: feature samples, covariates and family."""
    name = ""
    feature: str
    covariates: tuple[str, ...]
    family: Optional[str]

    def _covariates(self, dataset: RepeatedMeasuresDataset) -> np.ndarray:
        return dataset.covariate_matrix(list(self.covariates))

    def _spec(self, family, dataset, blocks, extra=None, extra_names=()):
        Z = self._covariates(dataset)
        names = list(self.covariates)
        if extra is not None:
            Z = np.hstack([Z, extra])
            names += list(extra_names)
        return ModelSpec.build(family, len(dataset), Z, names, blocks)


@dataclass
class FittedModel:
    """A fitted recipe: the penalized fit plus frozen preprocessing."""
    name: str
    fit: PenalizedFit
    recipe: object
    family: str

    def design(self, dataset: RepeatedMeasuresDataset) -> np.ndarray:
        raise NotImplementedError

    def predict(self, dataset: RepeatedMeasuresDataset) -> np.ndarray:
        """Response-scale predictions (probabilities for binomial fits)."""
        return self.fit.predict(self.design(dataset))

    def linear_predictor(self, dataset: RepeatedMeasuresDataset) -> np.ndarray:
        return self.fit.predict_linear(self.design(dataset))

    @property
    def deviance_explained(self) -> float:
        return deviance_explained(self.fit)

    def to_dict(self) -> dict:
        return {"model": self.name, "fit": self.fit.to_dict()}


def _quantile_matrix(
    dataset: RepeatedMeasuresDataset,
    feature: str,
    grid: QuantileGrid,
    standardize: bool = False,
) -> np.ndarray:
    dataset.require_feature(feature)
    rows = []
    for s in dataset.subjects:
        qf = estimate_quantile_function(s.observations[feature], grid, s.subject_id, feature)
        if standardize:
            qf = robust_standardize(qf)
        rows.append(qf.values)
    return np.stack(rows)


# --- SOQFR -------------------------------------------------------------------


@dataclass(frozen=True)
class SoqfrModel(_Recipe):
    """
    Scalar-on-quantile-function regression.

    g(mu_i) = alpha + Z_i' gamma + int Q_i(p) beta(p) dp, with beta expanded in
    a penalized B-spline basis (``bspline``), an unpenalized shifted Legendre
    basis (``legendre``, size ``n_basis``) or the constant function
    (``constant``, which is a GLM on the grid means of Q_i).
    """
    feature: str
    covariates: tuple[str, ...] = ()
    family: Optional[str] = None
    basis: str = "bspline"
    n_basis: int = DEFAULT_BASIS_SIZE
    degree: int = DEFAULT_DEGREE
    resolution: int = DEFAULT_RESOLUTION
    lambda_grid: Optional[tuple[float, ...]] = None
    lambdas: Optional[tuple[float, ...]] = None
    standardize: bool = False
    name: str = "soqfr"

    def __post_init__(self):
        if self.basis not in SOQFR_BASES:
            raise ValidationError(f"unknown SOQFR basis '{self.basis}'; use one of {', '.join(SOQFR_BASES)}")
        object.__setattr__(self, "covariates", tuple(self.covariates))

    def basis_matrix(self, grid: QuantileGrid) -> np.ndarray:
        """(M, K) basis functions theta_k(p_j)."""
        if self.basis == "bspline":
            return build_basis((0.0, 1.0), self.degree, self.n_basis).evaluate(grid.levels)
        if self.basis == "legendre":
            return legendre_table(grid, self.n_basis).T
        return np.ones((grid.resolution, 1))

    def fit(self, dataset: RepeatedMeasuresDataset) -> "FittedSoqfr":
        family = resolve_family(self.family, dataset)
        grid = QuantileGrid.midpoint(self.resolution)
        theta = self.basis_matrix(grid)
        projector = grid.cell_weights[:, None] * theta
        Q = _quantile_matrix(dataset, self.feature, grid, self.standardize)

        penalties: tuple = ()
        if self.basis == "bspline":
            basis = build_basis((0.0, 1.0), self.degree, self.n_basis)
            penalties = (second_derivative_penalty(basis).matrix,)
        block = PenalizedBlock(name="beta", design=Q @ projector, penalties=penalties)
        spec = self._spec(family, dataset, [block])

        if self.lambdas is not None or not penalties:
            fit = fit_pirls(spec, dataset.outcomes(), self.lambdas if penalties else None)
        else:
            fit = select_lambda_gcv(spec, dataset.outcomes(), self.lambda_grid)

        estimate, lower, upper = pointwise_band(
            fit.block_coefficients("beta"), fit.block_covariance("beta"), theta
        )
        coefficient = FunctionalCoefficient(grid.levels, estimate, lower, upper, axis="p")
        return FittedSoqfr(
            name=self.name, fit=fit, recipe=self, family=family,
            grid=grid, projector=projector, coefficient=coefficient,
        )


@dataclass
class FittedSoqfr(FittedModel):
    grid: QuantileGrid = None
    projector: np.ndarray = None
    coefficient: FunctionalCoefficient = None

    def design(self, dataset):
        recipe: SoqfrModel = self.recipe
        Q = _quantile_matrix(dataset, recipe.feature, self.grid, recipe.standardize)
        Z = dataset.covariate_matrix(list(recipe.covariates))
        return np.hstack([np.ones((len(dataset), 1)), Z, Q @ self.projector])

    def to_dict(self):
        out = super().to_dict()
        out["beta"] = self.coefficient.to_dict()
        out["deviance_explained"] = self.deviance_explained
        return out


def fit_soqfr(
    dataset: RepeatedMeasuresDataset,
    feature: str,
    covariates: Sequence[str] = (),
    family: Optional[str] = None,
    **options,
) -> tuple[PenalizedFit, FunctionalCoefficient]:
    """Fit SOQFR; returns the penalized fit and beta(p) with 95% bands."""
    fitted = SoqfrModel(feature, tuple(covariates), family, **options).fit(dataset)
    return fitted.fit, fitted.coefficient


# --- FGAM on quantile functions ------------------------------------------------


@dataclass(frozen=True)
class FgamModel(_Recipe):
    """
    Functional generalized additive model on quantile functions.

    g(mu_i) = alpha + Z_i' gamma + int F(Q_i(p), p) dp with F a tensor-product
    B-spline surface, second-difference penalties in each direction and a
    sum-to-zero constraint over training subjects.
    """
    feature: str
    covariates: tuple[str, ...] = ()
    family: Optional[str] = None
    n_basis_q: int = DEFAULT_SURFACE_BASIS_SIZE
    n_basis_p: int = DEFAULT_SURFACE_BASIS_SIZE
    degree: int = DEFAULT_DEGREE
    resolution: int = DEFAULT_RESOLUTION
    lambda_grid: Optional[tuple[float, ...]] = None
    lambdas: Optional[tuple[float, float]] = None
    n_surface_points: int = 50
    name: str = "fgam"

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))

    def fit(self, dataset: RepeatedMeasuresDataset) -> "FittedFgam":
        family = resolve_family(self.family, dataset)
        grid = QuantileGrid.midpoint(self.resolution)
        Q = _quantile_matrix(dataset, self.feature, grid)

        lo, hi = float(Q.min()), float(Q.max())
        if not hi > lo:
            raise ValidationError(f"feature '{self.feature}' has zero range across subjects")
        margin = Q_DOMAIN_MARGIN * (hi - lo)
        basis_q = build_basis((lo - margin, hi + margin), self.degree, self.n_basis_q)
        basis_p = build_basis((0.0, 1.0), self.degree, self.n_basis_p)

        W = tensor_design(Q, basis_q, basis_p, grid)
        constraint = CenteredSmooth.from_design(W)
        row_pen, col_pen = kronecker_components(
            difference_penalty(self.n_basis_q), difference_penalty(self.n_basis_p)
        )
        block = PenalizedBlock(
            name="surface",
            design=constraint.transform(W),
            penalties=(constraint.penalty(row_pen), constraint.penalty(col_pen)),
            penalty_names=("lambda_q", "lambda_p"),
        )
        spec = self._spec(family, dataset, [block])
        y = dataset.outcomes()
        if self.lambdas is not None:
            fit = fit_pirls(spec, y, self.lambdas)
        else:
            lambda_grid = FGAM_LAMBDA_GRID if self.lambda_grid is None else self.lambda_grid
            fit = select_lambda_gcv(spec, y, lambda_grid, search="product")

        theta = constraint.Z @ fit.block_coefficients("surface")
        q_grid = np.linspace(basis_q.lower, basis_q.upper, self.n_surface_points)
        p_grid = np.linspace(0.0, 1.0, self.n_surface_points)
        values = basis_q.evaluate(q_grid) @ theta.reshape(self.n_basis_q, self.n_basis_p) @ basis_p.evaluate(p_grid).T
        surface = SurfaceCoefficient(
            q_grid=q_grid, p_grid=p_grid, values=values,
            basis_q=basis_q, basis_p=basis_p, coefficients=theta,
        )
        return FittedFgam(
            name=self.name, fit=fit, recipe=self, family=family,
            grid=grid, constraint=constraint, surface=surface,
        )


@dataclass
class FittedFgam(FittedModel):
    grid: QuantileGrid = None
    constraint: CenteredSmooth = None
    surface: SurfaceCoefficient = None

    def functional_term(self, dataset: RepeatedMeasuresDataset) -> np.ndarray:
        """int F(Q_i(p), p) dp for each subject."""
        return self._surface_design(dataset) @ self.fit.block_coefficients("surface")

    def _surface_design(self, dataset):
        Q = _quantile_matrix(dataset, self.recipe.feature, self.grid)
        W = tensor_design(Q, self.surface.basis_q, self.surface.basis_p, self.grid)
        return self.constraint.transform(W)

    def design(self, dataset):
        Z = dataset.covariate_matrix(list(self.recipe.covariates))
        return np.hstack([np.ones((len(dataset), 1)), Z, self._surface_design(dataset)])

    def to_dict(self):
        out = super().to_dict()
        out["deviance_explained"] = self.deviance_explained
        out["slices"] = {
            str(p): values.tolist() for p, values in self.surface.slice_at().items()
        }
        out["q_grid"] = self.surface.q_grid.tolist()
        return out


def fit_fgam_qf(
    dataset: RepeatedMeasuresDataset,
    feature: str,
    covariates: Sequence[str] = (),
    family: Optional[str] = None,
    **options,
) -> tuple[PenalizedFit, SurfaceCoefficient]:
    """Fit FGAM-QF; returns the penalized fit and the centered surface."""
    fitted = FgamModel(feature, tuple(covariates), family, **options).fit(dataset)
    return fitted.fit, fitted.surface


# --- GLM and GAM on L-moments ---------------------------------------------------


def _lmoment_columns(dataset, feature, grid, orders, method) -> np.ndarray:
    L = lmoment_matrix(dataset, feature, grid, max(orders), method)
    return L[:, [r - 1 for r in orders]]


def _resolve_orders(K: int, orders: Optional[Sequence[int]]) -> tuple[int, ...]:
    chosen = tuple(range(1, K + 1)) if orders is None else tuple(sorted(set(orders)))
    if not chosen:
        raise ValidationError("at least one L-moment order is required")
    if chosen[0] < 1 or chosen[-1] > MAX_ORDER:
        raise ValidationError(f"L-moment orders must be within 1..{MAX_ORDER}, got {chosen}")
    return chosen


@dataclass(frozen=True)
class SoqfrLModel(_Recipe):
    """Unpenalized GLM on subject L-moments L_r for r in ``orders`` (default 1..K)."""
    feature: str
    covariates: tuple[str, ...] = ()
    family: Optional[str] = None
    K: int = 4
    orders: Optional[tuple[int, ...]] = None
    method: str = "projection"
    resolution: int = DEFAULT_RESOLUTION
    name: str = "soqfr-l"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown L-moment method '{self.method}'")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "orders", _resolve_orders(self.K, self.orders))

    def lmoments(self, dataset: RepeatedMeasuresDataset, grid: QuantileGrid) -> np.ndarray:
        return _lmoment_columns(dataset, self.feature, grid, self.orders, self.method)

    def fit(self, dataset: RepeatedMeasuresDataset) -> "FittedSoqfrL":
        family = resolve_family(self.family, dataset)
        grid = QuantileGrid.midpoint(self.resolution)
        names = [f"L{r}" for r in self.orders]
        spec = self._spec(family, dataset, [], self.lmoments(dataset, grid), names)
        fit = fit_pirls(spec, dataset.outcomes())

        # beta(p) = sum_r beta_r P_{r-1}(p)
        table = legendre_table(grid, max(self.orders))[[r - 1 for r in self.orders]].T
        idx = [fit.column_names.index(n) for n in names]
        estimate, lower, upper = pointwise_band(
            fit.coefficients[idx], fit.covariance[np.ix_(idx, idx)], table
        )
        return FittedSoqfrL(
            name=self.name, fit=fit, recipe=self, family=family, grid=grid,
            coefficient=FunctionalCoefficient(grid.levels, estimate, lower, upper, axis="p"),
        )


@dataclass
class FittedSoqfrL(FittedModel):
    grid: QuantileGrid = None
    coefficient: FunctionalCoefficient = None

    def design(self, dataset):
        Z = dataset.covariate_matrix(list(self.recipe.covariates))
        return np.hstack([np.ones((len(dataset), 1)), Z, self.recipe.lmoments(dataset, self.grid)])

    def wald_table(self) -> list[dict]:
        """Wald tests for the L-moment coefficients."""
        return self.fit.wald_table([f"L{r}" for r in self.recipe.orders])

    def to_dict(self):
        out = super().to_dict()
        out["wald"] = self.wald_table()
        out["beta"] = self.coefficient.to_dict()
        out["deviance_explained"] = self.deviance_explained
        return out


def fit_soqfr_l(
    dataset: RepeatedMeasuresDataset,
    feature: str,
    covariates: Sequence[str] = (),
    family: Optional[str] = None,
    K: int = 4,
    **options,
) -> tuple[PenalizedFit, FunctionalCoefficient]:
    """GLM on L-moments; returns the unpenalized fit and the induced beta(p)."""
    fitted = SoqfrLModel(feature, tuple(covariates), family, K, **options).fit(dataset)
    return fitted.fit, fitted.coefficient


@dataclass(frozen=True, eq=False)
class SmoothTerm:
    """Frozen basis and constraint of one additive smooth h_k."""
    name: str
    basis: SplineBasis
    constraint: CenteredSmooth

    def design(self, x: np.ndarray) -> np.ndarray:
        return self.constraint.transform(self.basis.evaluate(x))


@dataclass(frozen=True)
class GamLModel(_Recipe):
    """GAM with one centered cubic smooth per L-moment: g(mu) = a + Z'g + sum_k h_k(L_k)."""
    feature: str
    covariates: tuple[str, ...] = ()
    family: Optional[str] = None
    K: int = 4
    orders: Optional[tuple[int, ...]] = None
    method: str = "projection"
    n_basis: int = GAM_BASIS_SIZE
    resolution: int = DEFAULT_RESOLUTION
    lambda_grid: Optional[tuple[float, ...]] = None
    name: str = "gam-l"

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "orders", _resolve_orders(self.K, self.orders))

    def lmoments(self, dataset: RepeatedMeasuresDataset, grid: QuantileGrid) -> np.ndarray:
        return _lmoment_columns(dataset, self.feature, grid, self.orders, self.method)

    def fit(self, dataset: RepeatedMeasuresDataset) -> "FittedGamL":
        family = resolve_family(self.family, dataset)
        grid = QuantileGrid.midpoint(self.resolution)
        L = self.lmoments(dataset, grid)

        terms, blocks = [], []
        for j, r in enumerate(self.orders):
            x = L[:, j]
            lo, hi = float(x.min()), float(x.max())
            if hi - lo <= 1e-12 * max(1.0, abs(hi), abs(lo)):
                raise ValidationError(f"degenerate smooth covariate L{r}: no spread across subjects")
            basis = build_basis((lo, hi), DEFAULT_DEGREE, self.n_basis)
            B = basis.evaluate(x)
            term = SmoothTerm(f"h(L{r})", basis, CenteredSmooth.from_design(B))
            terms.append(term)
            blocks.append(PenalizedBlock(
                name=term.name,
                design=term.constraint.transform(B),
                penalties=(term.constraint.penalty(second_derivative_penalty(basis).matrix),),
            ))

        spec = self._spec(family, dataset, blocks)
        fit = select_lambda_gcv(spec, dataset.outcomes(), self.lambda_grid)
        return FittedGamL(name=self.name, fit=fit, recipe=self, family=family, grid=grid, terms=terms)


@dataclass
class FittedGamL(FittedModel):
    grid: QuantileGrid = None
    terms: list = field(default_factory=list)

    def design(self, dataset):
        L = self.recipe.lmoments(dataset, self.grid)
        Z = dataset.covariate_matrix(list(self.recipe.covariates))
        smooths = [t.design(L[:, j]) for j, t in enumerate(self.terms)]
        return np.hstack([np.ones((len(dataset), 1)), Z] + smooths)

    def smooth(self, name: str, n_points: int = 50) -> FunctionalCoefficient:
        """h_k over its training range with a 95% band."""
        term = next((t for t in self.terms if t.name == name), None)
        if term is None:
            raise ValidationError(f"no smooth '{name}'")
        x = np.linspace(term.basis.lower, term.basis.upper, n_points)
        est, lo, hi = pointwise_band(
            self.fit.block_coefficients(name), self.fit.block_covariance(name), term.design(x)
        )
        return FunctionalCoefficient(x, est, lo, hi, axis="x")

    def to_dict(self):
        out = super().to_dict()
        out["deviance_explained"] = self.deviance_explained
        out["smooths"] = {t.name: self.smooth(t.name).to_dict() for t in self.terms}
        return out


def fit_gam_lmoments(
    dataset: RepeatedMeasuresDataset,
    feature: str,
    covariates: Sequence[str] = (),
    family: Optional[str] = None,
    K: int = 4,
    **options,
) -> PenalizedFit:
    """GAM on L-moments with GCV-selected smoothing per term."""
    return GamLModel(feature, tuple(covariates), family, K, **options).fit(dataset).fit


# --- Histogram and mean baselines ------------------------------------------------


@dataclass(frozen=True)
class HistogramModel(_Recipe):
    """g(mu_i) = alpha + Z_i' gamma + sum_j H_i(x_j) f(x_j) with f a penalized cubic spline."""
    feature: str
    covariates: tuple[str, ...] = ()
    family: Optional[str] = None
    bins: BinSpec = field(default_factory=BinSpec)
    n_basis: int = DEFAULT_BASIS_SIZE
    lambda_grid: Optional[tuple[float, ...]] = None
    name: str = "hist"

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))

    def fit(self, dataset: RepeatedMeasuresDataset) -> "FittedHistogram":
        family = resolve_family(self.family, dataset)
        samples = dataset.feature_samples(self.feature)
        histogram = HistogramPredictor.from_samples(samples, self.bins.edges(samples))
        x = histogram.midpoints
        basis = build_basis((float(x[0]), float(x[-1])), DEFAULT_DEGREE, min(self.n_basis, x.size))
        phi = basis.evaluate(x)
        raw = histogram.frequencies @ phi
        constraint = CenteredSmooth.from_design(raw)
        block = PenalizedBlock(
            name="f_x",
            design=constraint.transform(raw),
            penalties=(constraint.penalty(second_derivative_penalty(basis).matrix),),
        )
        spec = self._spec(family, dataset, [block])
        fit = select_lambda_gcv(spec, dataset.outcomes(), self.lambda_grid)

        est, lo, hi = pointwise_band(
            fit.block_coefficients("f_x"), fit.block_covariance("f_x"), phi @ constraint.Z
        )
        return FittedHistogram(
            name=self.name, fit=fit, recipe=self, family=family,
            edges=histogram.edges, phi=phi, constraint=constraint,
            effect=FunctionalCoefficient(x, est, lo, hi, axis="x"),
        )


@dataclass
class FittedHistogram(FittedModel):
    edges: np.ndarray = None
    phi: np.ndarray = None
    constraint: CenteredSmooth = None
    effect: FunctionalCoefficient = None

    def design(self, dataset):
        samples = dataset.feature_samples(self.recipe.feature)
        H = HistogramPredictor.from_samples(samples, self.edges).frequencies
        Z = dataset.covariate_matrix(list(self.recipe.covariates))
        return np.hstack([np.ones((len(dataset), 1)), Z, self.constraint.transform(H @ self.phi)])

    def to_dict(self):
        out = super().to_dict()
        out["deviance_explained"] = self.deviance_explained
        out["edges"] = self.edges.tolist()
        out["f_x"] = self.effect.to_dict()
        return out


def fit_histogram_glm(
    dataset: RepeatedMeasuresDataset,
    feature: str,
    covariates: Sequence[str] = (),
    family: Optional[str] = None,
    bins: Optional[BinSpec] = None,
    **options,
) -> tuple[PenalizedFit, FunctionalCoefficient]:
    """Histogram-predictor GLM; returns the fit and f_x at bin midpoints."""
    fitted = HistogramModel(
        feature, tuple(covariates), family, bins or BinSpec(), **options
    ).fit(dataset)
    return fitted.fit, fitted.effect


@dataclass(frozen=True)
class MeanGlmModel(_Recipe):
    """
    GLM on subject means.

    ``source="sample"`` uses raw sample means, ``source="grid"`` the
    midpoint-rule mean of the estimated quantile function.
    """
    feature: str
    covariates: tuple[str, ...] = ()
    family: Optional[str] = None
    source: str = "sample"
    resolution: int = DEFAULT_RESOLUTION
    name: str = "mean"

    def __post_init__(self):
        if self.source not in ("sample", "grid"):
            raise ValidationError(f"unknown mean source '{self.source}'")
        object.__setattr__(self, "covariates", tuple(self.covariates))

    def means(self, dataset: RepeatedMeasuresDataset) -> np.ndarray:
        if self.source == "sample":
            return np.array([x.mean() for x in dataset.feature_samples(self.feature)])
        grid = QuantileGrid.midpoint(self.resolution)
        return _quantile_matrix(dataset, self.feature, grid) @ grid.cell_weights

    def fit(self, dataset: RepeatedMeasuresDataset) -> "FittedMeanGlm":
        family = resolve_family(self.family, dataset)
        spec = self._spec(family, dataset, [], self.means(dataset)[:, None], ["mean"])
        return FittedMeanGlm(
            name=self.name, fit=fit_pirls(spec, dataset.outcomes()), recipe=self, family=family
        )


@dataclass
class FittedMeanGlm(FittedModel):
    def design(self, dataset):
        Z = dataset.covariate_matrix(list(self.recipe.covariates))
        return np.hstack([np.ones((len(dataset), 1)), Z, self.recipe.means(dataset)[:, None]])

    def to_dict(self):
        out = super().to_dict()
        out["wald"] = self.fit.wald_table(["mean"])
        out["deviance_explained"] = self.deviance_explained
        return out


MODEL_NAMES = ("soqfr", "fgam", "soqfr-l", "gam-l", "hist", "mean")


def make_model(name: str, feature: str, covariates: Sequence[str] = (), family: Optional[str] = None, **options):
    """Recipe for a model name used on the command line."""
    classes = {
        "soqfr": SoqfrModel,
        "fgam": FgamModel,
        "soqfr-l": SoqfrLModel,
        "gam-l": GamLModel,
        "hist": HistogramModel,
        "mean": MeanGlmModel,
    }
    if name not in classes:
        raise ValidationError(f"unknown model '{name}'; use one of {', '.join(MODEL_NAMES)}")
    return classes[name](feature, tuple(covariates), family, **options)
