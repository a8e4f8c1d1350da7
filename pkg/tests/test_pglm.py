"""Tests for penalized GLM fitting and GCV smoothing selection."""

import warnings

import numpy as np
import pytest

from qdist.shared.errors import (
    DegenerateColumnWarning,
    SeparationError,
    SmoothingWarning,
    ValidationError,
)
from qdist.shared.pglm import (
    ModelSpec,
    PenalizedBlock,
    deviance_explained,
    fit_pirls,
    gcv_score,
    pointwise_band,
    pointwise_ci,
    select_lambda_gcv,
)
from qdist.shared.splines import build_basis, second_derivative_penalty


def _smooth_problem(family="gaussian", n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    basis = build_basis((0.0, 1.0), 3, 10)
    f = np.sin(2 * np.pi * x)
    if family == "gaussian":
        y = f + 0.3 * rng.normal(size=n)
    else:
        y = (rng.uniform(size=n) < 1 / (1 + np.exp(-2 * f))).astype(float)
    # first column dropped: the basis sums to one, like the intercept
    P = second_derivative_penalty(basis).matrix[1:, 1:]
    block = PenalizedBlock("f", basis.evaluate(x)[:, 1:], (P,))
    return ModelSpec.build(family, n, blocks=[block]), y


class TestModelSpec:
    def test_build_names(self):
        rng = np.random.default_rng(0)
        block = PenalizedBlock("f", rng.normal(size=(5, 3)), (np.eye(3),))
        spec = ModelSpec.build("gaussian", 5, rng.normal(size=(5, 1)), ["age"], [block])
        assert spec.column_names == ["intercept", "age", "f[0]", "f[1]", "f[2]"]
        assert spec.block_slices == {"f": slice(2, 5)}
        assert spec.smoothing_names == ["f"]

    def test_multi_penalty_names(self):
        block = PenalizedBlock("s", np.ones((4, 2)), (np.eye(2), np.eye(2)))
        assert block.penalty_names == ("s.0", "s.1")

    def test_requires_leading_intercept(self):
        with pytest.raises(ValidationError, match="intercept"):
            ModelSpec("gaussian", np.arange(10.0).reshape(5, 2), ("intercept", "age"))

    def test_constant_covariate_is_flagged_and_left_out(self):
        with pytest.warns(DegenerateColumnWarning, match="also_constant"):
            spec = ModelSpec("gaussian", np.ones((5, 2)), ("intercept", "also_constant"))
        assert spec.active_columns.tolist() == [True, False]

    def test_rejects_indefinite_penalty(self):
        with pytest.raises(ValidationError, match="positive semidefinite"):
            PenalizedBlock("f", np.ones((4, 2)), (np.diag([1.0, -1.0]),))

    def test_rejects_unknown_family(self):
        with pytest.raises(ValidationError, match="unknown family"):
            ModelSpec.build("poisson", 3)


class TestFitPirls:
    def test_unpenalized_gaussian_equals_ols(self):
        rng = np.random.default_rng(1)
        n = 150
        Z = rng.normal(size=(n, 2))
        B = rng.normal(size=(n, 3))
        y = 1.0 + Z @ [0.5, -1.0] + B @ [0.2, 0.0, 0.7] + rng.normal(size=n)
        spec = ModelSpec.build("gaussian", n, Z, ["a", "b"], [PenalizedBlock("f", B, (np.eye(3),))])
        fit = fit_pirls(spec, y, [0.0])
        ols, *_ = np.linalg.lstsq(spec.design, y, rcond=None)
        assert np.allclose(fit.coefficients, ols, atol=1e-10)
        assert fit.edf == pytest.approx(6.0)

    @pytest.mark.parametrize("family", ["gaussian", "binomial"])
    def test_penalized_score_vanishes(self, family):
        spec, y = _smooth_problem(family)
        fit = fit_pirls(spec, y, [1e-2])
        assert fit.converged
        assert fit.score_norm < 1e-6

    def test_edf_decreases_along_lambda_ladder(self):
        spec, y = _smooth_problem()
        edfs = [fit_pirls(spec, y, [lam]).edf for lam in np.logspace(-6, 6, 13)]
        assert np.all(np.diff(edfs) <= 1e-9)
        # intercept plus the penalty null space (linear functions) remain
        assert edfs[-1] == pytest.approx(2.0, abs=0.05)

    def test_block_edf(self):
        spec, y = _smooth_problem()
        fit = fit_pirls(spec, y, [1.0])
        assert fit.block_edf["f"] < fit.edf

    def test_outcome_length(self):
        spec, y = _smooth_problem()
        with pytest.raises(ValidationError):
            fit_pirls(spec, y[:-1])

    def test_binomial_rejects_non_binary(self):
        spec, _ = _smooth_problem("binomial", n=20)
        with pytest.raises(ValidationError, match="0 or 1"):
            fit_pirls(spec, np.full(20, 0.5))

    def test_separation(self):
        x = np.linspace(-2, 2, 20)
        y = (x > 0).astype(float)
        spec = ModelSpec.build("binomial", 20, x[:, None], ["x"])
        with pytest.raises(SeparationError):
            fit_pirls(spec, y)

    def test_wald_and_predict(self):
        spec, y = _smooth_problem("binomial", n=300)
        fit = fit_pirls(spec, y, [1.0])
        table = fit.wald_table(["intercept"])
        assert set(table[0]) == {"term", "estimate", "std_error", "statistic", "p_value"}
        assert 0.0 <= table[0]["p_value"] <= 1.0
        probs = fit.predict(spec.design)
        assert np.allclose(probs, fit.fitted)
        assert np.all((probs > 0) & (probs < 1))
        with pytest.raises(ValidationError):
            fit.predict(spec.design[:, :3])

    def test_serialization(self):
        spec, y = _smooth_problem()
        out = fit_pirls(spec, y, [1.0]).to_dict()
        assert out["family"] == "gaussian"
        assert 0 < out["deviance_explained"] < 1
        assert set(out["coefficients"]) == set(spec.column_names)

    def test_heavy_penalty_reaches_null_space_fit(self):
        """Very large lambda leaves only the intercept and linear trend in x."""
        spec, y = _smooth_problem()
        x = np.random.default_rng(0).uniform(size=200)
        fit = fit_pirls(spec, y, [1e8])
        linear, *_ = np.linalg.lstsq(np.column_stack([np.ones_like(x), x]), y, rcond=None)
        assert np.allclose(fit.linear_predictor, linear[0] + linear[1] * x, atol=1e-3)
        assert fit.edf == pytest.approx(2.0, abs=1e-2)

    def test_shifted_covariate_only_moves_intercept(self):
        spec, y = _smooth_problem()
        rng = np.random.default_rng(5)
        z = rng.normal(size=spec.n)
        blocks = list(spec.blocks)
        base = fit_pirls(ModelSpec.build("gaussian", spec.n, z[:, None], ["z"], blocks), y, [1.0])
        shifted = fit_pirls(ModelSpec.build("gaussian", spec.n, z[:, None] + 7.5, ["z"], blocks), y, [1.0])
        assert np.allclose(shifted.linear_predictor, base.linear_predictor, atol=1e-8)
        assert shifted.coefficient("z") == pytest.approx(base.coefficient("z"), abs=1e-8)
        assert np.allclose(shifted.block_coefficients("f"), base.block_coefficients("f"), atol=1e-8)
        assert shifted.coefficient("intercept") == pytest.approx(
            base.coefficient("intercept") - 7.5 * base.coefficient("z"), abs=1e-7
        )

    def test_intercept_only_logit_is_log_odds_of_mean(self):
        y = np.array([1.0] * 13 + [0.0] * 37)
        fit = fit_pirls(ModelSpec.build("binomial", y.size), y)
        mean = y.mean()
        assert fit.coefficient("intercept") == pytest.approx(np.log(mean / (1 - mean)), abs=1e-8)
        assert np.allclose(fit.fitted, mean)

    def test_constant_covariate_fits_as_if_absent(self):
        spec, y = _smooth_problem()
        blocks = list(spec.blocks)
        with pytest.warns(DegenerateColumnWarning, match="site"):
            flagged = ModelSpec.build("gaussian", spec.n, np.full((spec.n, 1), 3.0), ["site"], blocks)
        fit = fit_pirls(flagged, y, [1.0])
        plain = fit_pirls(spec, y, [1.0])
        assert fit.coefficient("site") == 0.0
        assert fit.covariance[1, 1] == 0.0
        assert np.allclose(fit.linear_predictor, plain.linear_predictor, atol=1e-10)
        assert fit.edf == pytest.approx(plain.edf)
        assert fit.wald_table(["site"])[0]["p_value"] == pytest.approx(1.0)
        # new data with a varying value of the dropped covariate predicts the same
        new_design = flagged.design.copy()
        new_design[:, 1] = np.linspace(-5, 5, spec.n)
        assert np.allclose(fit.predict_linear(new_design), plain.linear_predictor, atol=1e-10)


class TestGcv:
    def test_selects_grid_minimizer(self):
        spec, y = _smooth_problem()
        grid = np.logspace(-4, 4, 9)
        best = select_lambda_gcv(spec, y, grid)
        scores = [gcv_score(fit_pirls(spec, y, [lam])) for lam in grid]
        assert best.gcv == pytest.approx(min(scores))
        assert best.metadata["search"] == "product"
        assert best.metadata["grid_points_evaluated"] == 9

    def test_endpoint_warning(self):
        spec, y = _smooth_problem()
        with pytest.warns(SmoothingWarning, match="endpoint"):
            select_lambda_gcv(spec, y, [1e4, 1e5, 1e6])

    def test_coordinate_search_for_many_components(self):
        rng = np.random.default_rng(2)
        n = 120
        basis = build_basis((0.0, 1.0), 3, 6)
        P = second_derivative_penalty(basis).matrix
        xs = rng.uniform(size=(3, n))
        blocks = [PenalizedBlock(f"h{j}", basis.evaluate(xs[j])[:, 1:], (P[1:, 1:],)) for j in range(3)]
        y = np.sin(3 * xs[0]) + xs[1] ** 2 + rng.normal(scale=0.2, size=n)
        spec = ModelSpec.build("gaussian", n, blocks=blocks)
        fit = select_lambda_gcv(spec, y, np.logspace(-3, 3, 7))
        assert fit.metadata["search"] == "coordinate"
        assert set(fit.lambdas) == {"h0", "h1", "h2"}
        assert fit.metadata["grid_points_evaluated"] < 7 ** 3

    def test_pure_noise_selects_heavy_smoothing(self):
        spec, _ = _smooth_problem(n=300)
        grid = np.logspace(-4, 6, 11)
        lambdas, edfs = [], []
        for seed in range(5):
            noise = np.random.default_rng(100 + seed).normal(size=spec.n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SmoothingWarning)
                fit = select_lambda_gcv(spec, noise, grid)
            lambdas.append(fit.lambdas["f"])
            edfs.append(fit.edf)
        assert np.median(lambdas) >= grid[-3]
        assert np.median(edfs) < 3.0

    def test_invalid_grid(self):
        spec, y = _smooth_problem()
        with pytest.raises(ValidationError):
            select_lambda_gcv(spec, y, [0.0, 1.0])


class TestBands:
    def test_band_contains_estimate(self):
        spec, y = _smooth_problem()
        fit = fit_pirls(spec, y, [1e-2])
        basis = build_basis((0.0, 1.0), 3, 10)
        est, lo, hi = pointwise_ci(fit, basis.evaluate(np.linspace(0, 1, 20))[:, 1:])
        assert np.all(lo <= est) and np.all(est <= hi)
        assert deviance_explained(fit) > 0.5

    def test_band_shape_mismatch(self):
        with pytest.raises(ValidationError):
            pointwise_band(np.ones(3), np.eye(3), np.ones((4, 2)))
