"""
Penalized generalized linear models.

Fits minimize  -2 log L + sum_j lambda_j beta^T S_j beta  by penalized
iteratively re-weighted least squares (one step for the Gaussian identity
model, Newton iterations with step halving for the binomial logit model).
Smoothing parameters are chosen by generalized cross-validation.
"""

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, stats
from scipy.special import expit, logit, xlogy

from .errors import (
    ConvergenceError,
    DegenerateColumnWarning,
    NumericalError,
    SeparationError,
    SmoothingWarning,
    ValidationError,
)

FAMILIES = ("gaussian", "binomial")

MAX_ITER = 50
SCORE_TOL = 1e-8
MAX_STEP_HALVINGS = 30

# Relative diagonal jitter added when the penalized normal equations are
# numerically rank deficient.
JITTER = 1e-10

# 41 log-spaced values over [1e-6, 1e6].
DEFAULT_LAMBDA_GRID = np.logspace(-6, 6, 41)

# |eta| beyond this with a near-zero deviance means fitted probabilities
# have run to 0 or 1.
_SEPARATION_ETA = 20.0


class Family:
    """Response distribution and link."""
    name = ""
    link = ""

    def validate(self, y: np.ndarray) -> None:
        if not np.all(np.isfinite(y)):
            raise ValidationError("outcomes must be finite")

    def inverse_link(self, eta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def weights(self, mu: np.ndarray) -> np.ndarray:
        """IRLS working weights (dmu/deta)^2 / V(mu)."""
        raise NotImplementedError

    def deviance(self, y: np.ndarray, mu: np.ndarray) -> float:
        raise NotImplementedError

    def initial_eta(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GaussianFamily(Family):
    name = "gaussian"
    link = "identity"

    def inverse_link(self, eta):
        return eta

    def weights(self, mu):
        return np.ones_like(mu)

    def deviance(self, y, mu):
        r = y - mu
        return float(r @ r)

    def initial_eta(self, y):
        return y.astype(float)


class BinomialFamily(Family):
    name = "binomial"
    link = "logit"

    def validate(self, y):
        super().validate(y)
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("binomial outcomes must be 0 or 1")

    def inverse_link(self, eta):
        return expit(eta)

    def weights(self, mu):
        return np.maximum(mu * (1.0 - mu), 1e-12)

    def deviance(self, y, mu):
        mu = np.clip(mu, 1e-300, 1.0 - 1e-16)
        return float(2.0 * np.sum(xlogy(y, y / mu) + xlogy(1.0 - y, (1.0 - y) / (1.0 - mu))))

    def initial_eta(self, y):
        return logit((y + 0.5) / 2.0)


def get_family(name: str) -> Family:
    if name == "gaussian":
        return GaussianFamily()
    if name == "binomial":
        return BinomialFamily()
    raise ValidationError(f"unknown family '{name}'; use one of {', '.join(FAMILIES)}")


def _check_psd(matrix: np.ndarray, label: str) -> None:
    eig = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    scale = max(1.0, float(np.max(np.abs(eig))))
    if eig[0] < -1e-8 * scale:
        raise ValidationError(f"penalty '{label}' is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class PenalizedBlock:
    """Design columns sharing one or more penalty components."""
    name: str
    design: np.ndarray
    penalties: tuple[np.ndarray, ...] = ()
    penalty_names: tuple[str, ...] = ()

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        if design.ndim != 2:
            raise ValidationError(f"block '{self.name}' design must be 2-D")
        penalties = tuple(np.asarray(p, dtype=float) for p in self.penalties)
        for i, p in enumerate(penalties):
            if p.shape != (design.shape[1], design.shape[1]):
                raise ValidationError(
                    f"penalty {i} of block '{self.name}' has shape {p.shape}, "
                    f"expected {(design.shape[1], design.shape[1])}"
                )
            _check_psd(p, f"{self.name}[{i}]")
        names = tuple(self.penalty_names) or tuple(
            f"{self.name}" if len(penalties) == 1 else f"{self.name}.{i}"
            for i in range(len(penalties))
        )
        if len(names) != len(penalties):
            raise ValidationError(f"block '{self.name}' penalty names do not match penalties")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "penalties", penalties)
        object.__setattr__(self, "penalty_names", names)

    @property
    def size(self) -> int:
        return int(self.design.shape[1])


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    Model family plus design: an unpenalized block (intercept first, then
    scalar covariates) followed by penalized blocks.
    """
    family: str
    unpenalized: np.ndarray
    unpenalized_names: tuple[str, ...]
    blocks: tuple[PenalizedBlock, ...] = ()

    def __post_init__(self):
        get_family(self.family)
        U = np.asarray(self.unpenalized, dtype=float)
        if U.ndim != 2 or U.shape[1] < 1:
            raise ValidationError("unpenalized design needs at least the intercept column")
        if len(self.unpenalized_names) != U.shape[1]:
            raise ValidationError("unpenalized column names do not match the design")
        if not np.allclose(U[:, 0], 1.0):
            raise ValidationError("the unpenalized block needs the intercept column first")
        constant = np.all(np.isclose(U, U[:1]), axis=0)
        constant[0] = False
        if np.any(constant):
            dropped = [self.unpenalized_names[j] for j in np.flatnonzero(constant)]
            warnings.warn(
                f"constant covariates left out of the fit: {', '.join(dropped)}",
                DegenerateColumnWarning,
                stacklevel=3,
            )
        for block in self.blocks:
            if block.design.shape[0] != U.shape[0]:
                raise ValidationError(
                    f"block '{block.name}' has {block.design.shape[0]} rows, expected {U.shape[0]}"
                )
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise ValidationError("penalized block names must be unique")
        object.__setattr__(self, "unpenalized", U)
        object.__setattr__(self, "unpenalized_names", tuple(self.unpenalized_names))
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @classmethod
    def build(
        cls,
        family: str,
        n: int,
        covariates: Optional[np.ndarray] = None,
        covariate_names: Sequence[str] = (),
        blocks: Sequence[PenalizedBlock] = (),
    ) -> "ModelSpec":
        """Spec with an intercept column prepended to ``covariates``."""
        columns = [np.ones((n, 1))]
        if covariates is not None and np.size(covariates):
            columns.append(np.asarray(covariates, dtype=float).reshape(n, -1))
        return cls(
            family=family,
            unpenalized=np.hstack(columns),
            unpenalized_names=("intercept",) + tuple(covariate_names),
            blocks=tuple(blocks),
        )

    @property
    def n(self) -> int:
        return int(self.unpenalized.shape[0])

    @property
    def design(self) -> np.ndarray:
        return np.hstack([self.unpenalized] + [b.design for b in self.blocks])

    @property
    def n_columns(self) -> int:
        return self.unpenalized.shape[1] + sum(b.size for b in self.blocks)

    @property
    def active_columns(self) -> np.ndarray:
        """Mask of design columns entering the fit; constant covariates are out."""
        U = self.unpenalized
        keep = np.ones(self.n_columns, dtype=bool)
        keep[1:U.shape[1]] = ~np.all(np.isclose(U[:, 1:], U[:1, 1:]), axis=0)
        return keep

    @property
    def column_names(self) -> list[str]:
        names = list(self.unpenalized_names)
        for b in self.blocks:
            names.extend(f"{b.name}[{j}]" for j in range(b.size))
        return names

    @property
    def block_slices(self) -> dict[str, slice]:
        slices = {}
        start = self.unpenalized.shape[1]
        for b in self.blocks:
            slices[b.name] = slice(start, start + b.size)
            start += b.size
        return slices

    @property
    def smoothing_names(self) -> list[str]:
        return [name for b in self.blocks for name in b.penalty_names]

    @property
    def n_smoothing(self) -> int:
        return sum(len(b.penalties) for b in self.blocks)

    def penalty_matrix(self, lambdas: Sequence[float]) -> np.ndarray:
        """Full block-diagonal sum_j lambda_j S_j."""
        S = np.zeros((self.n_columns, self.n_columns))
        it = iter(lambdas)
        for b, sl in zip(self.blocks, self.block_slices.values()):
            for P in b.penalties:
                S[sl, sl] += next(it) * P
        return S


@dataclass
class PenalizedFit:
    """Result of a penalized GLM fit."""
    family: str
    coefficients: np.ndarray
    column_names: list[str]
    block_slices: dict[str, slice]
    lambdas: dict[str, float]
    edf: float
    block_edf: dict[str, float]
    covariance: np.ndarray
    deviance: float
    null_deviance: float
    linear_predictor: np.ndarray
    n: int
    scale: float = 1.0
    iterations: int = 1
    step_norm: float = 0.0
    score_norm: float = 0.0
    converged: bool = True
    gcv: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    @property
    def fitted(self) -> np.ndarray:
        return get_family(self.family).inverse_link(self.linear_predictor)

    def block_coefficients(self, name: str) -> np.ndarray:
        return self.coefficients[self._slice(name)]

    def block_covariance(self, name: str) -> np.ndarray:
        sl = self._slice(name)
        return self.covariance[sl, sl]

    def _slice(self, name: str) -> slice:
        try:
            return self.block_slices[name]
        except KeyError:
            raise ValidationError(
                f"no block '{name}'; available: {', '.join(self.block_slices) or 'none'}"
            ) from None

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])

    def predict_linear(self, design: np.ndarray) -> np.ndarray:
        design = np.asarray(design, dtype=float)
        if design.shape[1] != self.coefficients.size:
            raise ValidationError(
                f"design has {design.shape[1]} columns, fit has {self.coefficients.size}"
            )
        return design @ self.coefficients

    def predict(self, design: np.ndarray) -> np.ndarray:
        """Response-scale means for a new design matrix."""
        return get_family(self.family).inverse_link(self.predict_linear(design))

    def wald_table(self, columns: Optional[Sequence[str]] = None) -> list[dict]:
        """
        Wald statistics per coefficient.

        Normal reference for binomial fits, t with n - edf degrees of
        freedom for Gaussian fits.
        """
        names = list(columns) if columns is not None else self.column_names
        se_all = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        dof = max(self.n - self.edf, 1.0)
        rows = []
        for name in names:
            j = self.column_names.index(name)
            est, se = float(self.coefficients[j]), float(se_all[j])
            stat = est / se if se > 0 else np.inf * np.sign(est) if est else 0.0
            if self.family == "gaussian":
                p_value = float(2.0 * stats.t.sf(abs(stat), dof))
            else:
                p_value = float(2.0 * stats.norm.sf(abs(stat)))
            rows.append({
                "term": name,
                "estimate": est,
                "std_error": se,
                "statistic": float(stat),
                "p_value": p_value,
            })
        return rows

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "family": self.family,
            "coefficients": dict(zip(self.column_names, map(float, self.coefficients))),
            "lambdas": {k: float(v) for k, v in self.lambdas.items()},
            "edf": float(self.edf),
            "block_edf": {k: float(v) for k, v in self.block_edf.items()},
            "scale": float(self.scale),
            "deviance": float(self.deviance),
            "null_deviance": float(self.null_deviance),
            "deviance_explained": (
                float(1.0 - self.deviance / self.null_deviance)
                if self.null_deviance > 0 else None
            ),
            "gcv": None if self.gcv is None else float(self.gcv),
            "n": self.n,
            "iterations": self.iterations,
            "converged": self.converged,
            "step_norm": float(self.step_norm),
            "score_norm": float(self.score_norm),
            "metadata": self.metadata,
        }


def _factor(A: np.ndarray):
    """Pivoted Cholesky of a symmetric PSD matrix, jittered if rank deficient."""
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    c, piv, rank, info = linalg.lapack.dpstrf(A)
    if info < 0:
        raise NumericalError("pivoted Cholesky failed on the penalized normal equations")
    if rank < n:
        jitter = JITTER * max(1.0, float(np.max(np.diag(A))))
        c, piv, rank, info = linalg.lapack.dpstrf(A + jitter * np.eye(n))
        if rank < n or info < 0:
            raise NumericalError("penalized normal equations are singular")
    return np.triu(c), piv - 1


def _solve(factor, b: np.ndarray) -> np.ndarray:
    U, piv = factor
    x_perm = linalg.cho_solve((U, False), b[piv])
    x = np.empty_like(x_perm)
    x[piv] = x_perm
    return x


def _expand(matrix: np.ndarray, keep: np.ndarray) -> np.ndarray:
    out = np.zeros((keep.size, keep.size))
    out[np.ix_(keep, keep)] = matrix
    return out


def _check_lambdas(spec: ModelSpec, lambdas: Optional[Sequence[float]]) -> np.ndarray:
    if lambdas is None:
        lam = np.ones(spec.n_smoothing)
    else:
        lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if lam.size != spec.n_smoothing:
        raise ValidationError(
            f"model has {spec.n_smoothing} smoothing parameters, got {lam.size}"
        )
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValidationError("smoothing parameters must be finite and nonnegative")
    return lam


def _null_deviance(family: Family, y: np.ndarray) -> float:
    return family.deviance(y, np.full_like(y, y.mean()))


def fit_pirls(
    spec: ModelSpec,
    y,
    lambdas: Optional[Sequence[float]] = None,
    max_iter: int = MAX_ITER,
    tol: float = SCORE_TOL,
) -> PenalizedFit:
    """
    Fit a penalized GLM at fixed smoothing parameters.

    Args:
        spec: Family and design blocks
        y: Outcomes, one per design row
        lambdas: One smoothing parameter per penalty component (default 1)
        max_iter: Newton iteration cap for non-Gaussian families
        tol: Convergence threshold on the sup-norm of the penalized score

    Returns:
        PenalizedFit with covariance (X'WX + S)^-1 scaled by the dispersion
    """
    family = get_family(spec.family)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != spec.n:
        raise ValidationError(f"got {y.size} outcomes for {spec.n} design rows")
    family.validate(y)
    lam = _check_lambdas(spec, lambdas)

    keep = spec.active_columns
    X = spec.design[:, keep]
    S = spec.penalty_matrix(lam)[np.ix_(keep, keep)]
    null_dev = _null_deviance(family, y)

    if family.name == "gaussian":
        factor = _factor(X.T @ X + S)
        beta = _solve(factor, X.T @ y)
        eta = X @ beta
        w = np.ones_like(y)
        iterations, step = 1, float(np.linalg.norm(beta))
    else:
        beta, eta, w, iterations, step, factor = _newton_logit(
            family, X, S, y, null_dev, max_iter, tol
        )

    mu = family.inverse_link(eta)
    dev = family.deviance(y, mu)
    score = X.T @ (y - mu) - S @ beta
    XtWX = X.T @ (w[:, None] * X)
    A_inv = _solve(factor, np.eye(X.shape[1]))
    influence = _expand(A_inv @ XtWX, keep)
    edf = float(np.trace(influence))
    block_edf = {
        name: float(np.trace(influence[sl, sl])) for name, sl in spec.block_slices.items()
    }

    if family.name == "gaussian":
        scale = dev / max(spec.n - edf, 1e-8)
    else:
        scale = 1.0

    # dropped columns carry a zero coefficient with zero variance
    coefficients = np.zeros(keep.size)
    coefficients[keep] = beta

    return PenalizedFit(
        family=family.name,
        coefficients=coefficients,
        column_names=spec.column_names,
        block_slices=spec.block_slices,
        lambdas=dict(zip(spec.smoothing_names, map(float, lam))),
        edf=edf,
        block_edf=block_edf,
        covariance=_expand(A_inv * scale, keep),
        deviance=dev,
        null_deviance=null_dev,
        linear_predictor=eta,
        n=spec.n,
        scale=scale,
        iterations=iterations,
        step_norm=step,
        score_norm=float(np.max(np.abs(score))) if score.size else 0.0,
        converged=True,
    )


def _newton_logit(family, X, S, y, null_dev, max_iter, tol):
    eta = family.initial_eta(y)
    mu = family.inverse_link(eta)
    beta = None
    objective = np.inf
    step = np.inf

    for iteration in range(1, max_iter + 1):
        w = family.weights(mu)
        z = eta + (y - mu) / w
        factor = _factor(X.T @ (w[:, None] * X) + S)
        proposal = _solve(factor, X.T @ (w * z))

        if beta is None:
            new_beta = proposal
            new_eta = X @ new_beta
            new_obj = family.deviance(y, family.inverse_link(new_eta)) + new_beta @ S @ new_beta
        else:
            new_beta = proposal
            for _ in range(MAX_STEP_HALVINGS):
                new_eta = X @ new_beta
                new_obj = family.deviance(y, family.inverse_link(new_eta)) + new_beta @ S @ new_beta
                if new_obj <= objective * (1 + 1e-12) + 1e-12:
                    break
                new_beta = 0.5 * (beta + new_beta)

        step = float(np.linalg.norm(new_beta - beta)) if beta is not None else float(np.linalg.norm(new_beta))
        beta, eta, objective = new_beta, new_eta, new_obj
        mu = family.inverse_link(eta)

        if not np.all(np.isfinite(beta)):
            raise SeparationError("separation suspected: coefficients diverged", iterate=beta)
        dev = family.deviance(y, mu)
        if (
            iteration >= 8
            and dev < 1e-6 * max(null_dev, 1.0)
            and np.max(np.abs(eta)) > _SEPARATION_ETA
        ):
            raise SeparationError("separation suspected", iterate=beta)

        score = X.T @ (y - mu) - S @ beta
        score_norm = np.max(np.abs(score))
        tiny_step = step < 1e-12 * (1.0 + float(np.linalg.norm(beta)))
        if score_norm < tol or (tiny_step and score_norm < 1e-6):
            w = family.weights(mu)
            factor = _factor(X.T @ (w[:, None] * X) + S)
            return beta, eta, w, iteration, step, factor

    if np.max(np.abs(eta)) > _SEPARATION_ETA:
        raise SeparationError("separation suspected", iterate=beta)
    raise ConvergenceError(
        f"P-IRLS did not converge in {max_iter} iterations "
        f"(score norm {np.max(np.abs(score)):.3g})",
        iterate=beta,
    )


def gcv_score(fit: PenalizedFit) -> float:
    """n * deviance / (n - edf)^2."""
    denom = fit.n - fit.edf
    if denom <= 0:
        return np.inf
    return fit.n * fit.deviance / denom ** 2


def _candidate_points(grid: np.ndarray, n_components: int, search: str):
    if search == "product":
        # largest lambdas first so ties resolve toward smoother fits
        points = sorted(
            itertools.product(grid, repeat=n_components),
            key=lambda p: -sum(np.log(p)),
        )
        return [np.array(p) for p in points]
    raise AssertionError(search)


def select_lambda_gcv(
    spec: ModelSpec,
    y,
    lambda_grid: Optional[Sequence[float]] = None,
    search: str = "auto",
    n_sweeps: int = 2,
) -> PenalizedFit:
    """
    Fit over a smoothing-parameter grid and keep the GCV minimizer.

    One penalty component searches the grid directly; two components search
    the product grid; more components use cyclic coordinate search over the
    same grid. Ties go to the larger smoothing parameters. Grid points whose
    fit fails are skipped with a warning.

    Args:
        spec: Family and design blocks
        y: Outcomes
        lambda_grid: Positive candidate values (default DEFAULT_LAMBDA_GRID)
        search: "auto", "product" or "coordinate"
        n_sweeps: Passes of coordinate search

    Returns:
        PenalizedFit at the selected smoothing parameters, with ``gcv`` set
    """
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    grid = np.sort(np.atleast_1d(grid))[::-1]
    if grid.size == 0:
        raise ValidationError("lambda grid is empty")
    if np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise ValidationError("lambda grid values must be positive and finite")

    m = spec.n_smoothing
    if m == 0:
        fit = fit_pirls(spec, y)
        fit.gcv = gcv_score(fit)
        return fit

    if search == "auto":
        search = "product" if m <= 2 else "coordinate"
    if search not in ("product", "coordinate"):
        raise ValidationError(f"unknown smoothing search '{search}'")

    failures: list[str] = []
    cache: dict[tuple, Optional[PenalizedFit]] = {}

    def evaluate(point: np.ndarray) -> Optional[PenalizedFit]:
        key = tuple(point)
        if key not in cache:
            try:
                fit = fit_pirls(spec, y, point)
                fit.gcv = gcv_score(fit)
                cache[key] = fit
            except NumericalError as e:
                failures.append(f"{key}: {e}")
                cache[key] = None
        return cache[key]

    best: Optional[PenalizedFit] = None

    def consider(fit: Optional[PenalizedFit]) -> None:
        nonlocal best
        if fit is not None and (best is None or fit.gcv < best.gcv):
            best = fit

    if search == "product":
        for point in _candidate_points(grid, m, "product"):
            consider(evaluate(point))
    else:
        current = np.full(m, grid[grid.size // 2])
        for _ in range(n_sweeps):
            for j in range(m):
                local: Optional[PenalizedFit] = None
                local_value = current[j]
                for value in grid:
                    point = current.copy()
                    point[j] = value
                    fit = evaluate(point)
                    consider(fit)
                    if fit is not None and (local is None or fit.gcv < local.gcv):
                        local, local_value = fit, value
                current[j] = local_value

    if failures:
        warnings.warn(
            f"skipped {len(failures)} smoothing-parameter points whose fit failed; "
            f"first: {failures[0]}",
            SmoothingWarning,
            stacklevel=2,
        )
    if best is None:
        raise NumericalError("every smoothing-parameter grid point failed to fit")

    if grid.size > 1:
        edges = {float(grid[0]), float(grid[-1])}
        at_edge = [k for k, v in best.lambdas.items() if v in edges]
        if at_edge:
            warnings.warn(
                f"GCV selected a grid endpoint for {', '.join(at_edge)}",
                SmoothingWarning,
                stacklevel=2,
            )
    best.metadata["search"] = search
    best.metadata["grid_points_evaluated"] = len(cache)
    return best


def pointwise_band(
    coefficients: np.ndarray,
    covariance: np.ndarray,
    basis_eval: np.ndarray,
    z: float = 1.96,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Estimate B c and pointwise band B c +/- z sqrt(diag(B V B^T))."""
    B = np.atleast_2d(np.asarray(basis_eval, dtype=float))
    c = np.asarray(coefficients, dtype=float).ravel()
    V = np.atleast_2d(np.asarray(covariance, dtype=float))
    if B.shape[1] != c.size or V.shape != (c.size, c.size):
        raise ValidationError(
            f"basis evaluation has {B.shape[1]} columns for {c.size} coefficients"
        )
    estimate = B @ c
    se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", B, V, B), 0.0, None))
    return estimate, estimate - z * se, estimate + z * se


def pointwise_ci(
    fit: PenalizedFit,
    basis_eval: np.ndarray,
    block: Optional[str] = None,
    z: float = 1.96,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    95% pointwise band for a functional coefficient.

    Args:
        fit: Fitted model
        basis_eval: Rows theta(p_j)^T of the block's basis
        block: Penalized block name (default: the only block)
        z: Normal quantile of the band

    Returns:
        (estimate, lower, upper) arrays over the rows of ``basis_eval``
    """
    if block is None:
        if len(fit.block_slices) != 1:
            raise ValidationError("fit has several blocks; name the one to band")
        block = next(iter(fit.block_slices))
    return pointwise_band(
        fit.block_coefficients(block), fit.block_covariance(block), basis_eval, z
    )


def deviance_explained(fit: PenalizedFit) -> float:
    """1 - deviance / null deviance."""
    if fit.null_deviance <= 0:
        raise ValidationError("null deviance is zero (constant outcome)")
    return 1.0 - fit.deviance / fit.null_deviance
