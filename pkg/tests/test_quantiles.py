"""Tests for quantile grids, estimation and quantile-space geometry."""

import numpy as np
import pytest

from qdist.shared.errors import ValidationError
from qdist.shared.quantiles import (
    QuantileFunction,
    QuantileGrid,
    estimate_quantile_function,
    estimate_quantile_functions,
    group_barycenters,
    group_mean_quantile,
    integrate_on_grid,
    quantile_matrix,
    robust_standardize,
    wasserstein2_distance,
)

from .conftest import make_dataset


class TestQuantileGrid:
    def test_midpoint_levels(self):
        grid = QuantileGrid.midpoint(4)
        assert np.allclose(grid.levels, [0.125, 0.375, 0.625, 0.875])
        assert grid.resolution == 4

    def test_cell_weights_sum_to_one(self):
        grid = QuantileGrid.midpoint(100)
        assert grid.cell_weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(grid.cell_weights, 0.01)

    @pytest.mark.parametrize("levels", [[0.0, 0.5], [0.5, 1.0], [0.3, 0.2], []])
    def test_invalid_levels(self, levels):
        with pytest.raises(ValidationError):
            QuantileGrid(np.array(levels))

    def test_equality_by_levels(self):
        assert QuantileGrid.midpoint(10) == QuantileGrid.midpoint(10)
        assert QuantileGrid.midpoint(10) != QuantileGrid.midpoint(11)


class TestEstimateQuantileFunction:
    def test_interpolates_order_statistics(self):
        qf = estimate_quantile_function([3.0, 1.0, 2.0], QuantileGrid.midpoint(4))
        assert np.allclose(qf.values, [1.0, 1.5, 2.5, 3.0])

    def test_single_observation_is_constant(self):
        qf = estimate_quantile_function([4.2], QuantileGrid.midpoint(10))
        assert np.all(qf.values == 4.2)

    def test_order_invariant(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=50)
        grid = QuantileGrid.midpoint()
        a = estimate_quantile_function(x, grid)
        b = estimate_quantile_function(rng.permutation(x), grid)
        assert np.array_equal(a.values, b.values)

    @pytest.mark.parametrize("scale,shift", [(2.5, -1.0), (0.01, 40.0), (1.0, 0.0)])
    def test_affine_equivariance(self, scale, shift):
        rng = np.random.default_rng(3)
        x = rng.gamma(2.0, size=37)
        grid = QuantileGrid.midpoint()
        base = estimate_quantile_function(x, grid)
        moved = estimate_quantile_function(scale * x + shift, grid)
        assert np.allclose(moved.values, scale * base.values + shift, rtol=1e-12, atol=1e-12)

    def test_nondecreasing_with_ties(self):
        qf = estimate_quantile_function([1, 1, 1, 2, 2, 5], QuantileGrid.midpoint())
        assert np.all(np.diff(qf.values) >= 0)
        assert qf.values[0] == 1 and qf.values[-1] == 5

    def test_empty_sample_raises(self):
        with pytest.raises(ValidationError, match="no observations"):
            estimate_quantile_function([], QuantileGrid.midpoint())

    def test_non_finite_raises(self):
        with pytest.raises(ValidationError, match="non-finite"):
            estimate_quantile_function([1.0, np.nan, 2.0], QuantileGrid.midpoint())

    def test_decreasing_values_rejected(self):
        grid = QuantileGrid.midpoint(3)
        with pytest.raises(ValidationError, match="nondecreasing"):
            QuantileFunction(grid, np.array([3.0, 2.0, 1.0]))


class TestGeometry:
    def test_integrate_constant(self):
        grid = QuantileGrid.midpoint(50)
        assert integrate_on_grid(np.full(50, 2.5), grid) == pytest.approx(2.5)

    def test_integrate_wrong_length(self):
        with pytest.raises(ValidationError):
            integrate_on_grid(np.ones(3), QuantileGrid.midpoint(4))

    def test_wasserstein_of_shift(self):
        grid = QuantileGrid.midpoint()
        a = estimate_quantile_function(np.arange(10.0), grid)
        b = QuantileFunction(grid, a.values + 3.0)
        assert wasserstein2_distance(a, b) == pytest.approx(3.0)
        assert wasserstein2_distance(a, a) == 0.0

    def test_wasserstein_of_identity_to_zero(self):
        # midpoint rule: int p^2 dp = 1/3 - 1/(12 M^2)
        errors = []
        for M in (10, 100, 1000):
            grid = QuantileGrid.midpoint(M)
            d = wasserstein2_distance(QuantileFunction(grid, grid.levels), QuantileFunction(grid, np.zeros(M)))
            assert d**2 == pytest.approx(1 / 3 - 1 / (12 * M**2), rel=1e-12)
            errors.append(abs(d - 1 / np.sqrt(3)))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 1e-6

    def test_group_mean_is_pointwise_average(self):
        grid = QuantileGrid.midpoint(5)
        a = QuantileFunction(grid, np.arange(5.0))
        b = QuantileFunction(grid, np.arange(5.0) + 2.0)
        assert np.allclose(group_mean_quantile([a, b]).values, np.arange(5.0) + 1.0)

    def test_mismatched_grids_raise(self):
        a = QuantileFunction(QuantileGrid.midpoint(3), np.arange(3.0))
        b = QuantileFunction(QuantileGrid.midpoint(4), np.arange(4.0))
        with pytest.raises(ValidationError, match="different grids"):
            group_mean_quantile([a, b])
        with pytest.raises(ValidationError):
            wasserstein2_distance(a, b)

    def test_group_mean_empty_raises(self):
        with pytest.raises(ValidationError):
            group_mean_quantile([])

    def test_robust_standardize(self):
        grid = QuantileGrid.midpoint()
        qf = QuantileFunction(grid, 10.0 + 4.0 * grid.levels)
        z = robust_standardize(qf)
        assert z(0.5) == pytest.approx(0.0, abs=1e-12)
        assert z(0.75) - z(0.25) == pytest.approx(1.0)

    def test_robust_standardize_zero_iqr(self):
        grid = QuantileGrid.midpoint()
        with pytest.raises(ValidationError, match="interquartile"):
            robust_standardize(QuantileFunction(grid, np.ones(100)))


class TestDatasetCurves:
    def test_estimate_all_subjects(self):
        dataset = make_dataset(n=5)
        curves = estimate_quantile_functions(dataset, "x", QuantileGrid.midpoint())
        assert list(curves) == dataset.subject_ids
        assert quantile_matrix(list(curves.values())).shape == (5, 100)

    def test_binary_barycenters(self):
        dataset = make_dataset(n=30, binary=True)
        centers = group_barycenters(dataset, "x", QuantileGrid.midpoint())
        assert set(centers) == {"0", "1"}

    def test_continuous_barycenters_split_at_median(self):
        dataset = make_dataset(n=30)
        centers = group_barycenters(dataset, "x", QuantileGrid.midpoint())
        assert set(centers) == {"low", "high"}
