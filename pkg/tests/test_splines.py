"""Tests for B-spline bases, penalties and tensor designs."""

import numpy as np
import pytest

from qdist.shared.errors import ClampingWarning, ValidationError
from qdist.shared.quantiles import QuantileGrid
from qdist.shared.splines import (
    build_basis,
    difference_penalty,
    kronecker_components,
    kronecker_penalty,
    second_derivative_penalty,
    tensor_design,
    tensor_design_row,
)


def _fit_coefficients(basis, func, n_points=400):
    x = np.linspace(basis.lower, basis.upper, n_points)
    coef, *_ = np.linalg.lstsq(basis.evaluate(x), func(x), rcond=None)
    return coef


def _roughness(penalty, coef):
    return float(coef @ penalty.matrix @ coef)


class TestBasis:
    def test_partition_of_unity(self):
        basis = build_basis((0.0, 1.0), 3, 10)
        x = np.linspace(0, 1, 101)
        assert np.allclose(basis.evaluate(x).sum(axis=1), 1.0)

    def test_shape_and_knots(self):
        basis = build_basis((-2.0, 4.0), 3, 8)
        assert basis.evaluate(np.array([0.0, 1.0])).shape == (2, 8)
        assert basis.knots.size == 8 + 3 + 1
        assert basis.domain == (-2.0, 4.0)

    def test_evaluation_clips_to_domain(self):
        basis = build_basis((0.0, 1.0), 3, 6)
        assert np.allclose(basis.evaluate([-5.0]), basis.evaluate([0.0]))
        assert np.allclose(basis.evaluate([7.0]), basis.evaluate([1.0]))

    def test_reproduces_cubic(self):
        basis = build_basis((0.0, 2.0), 3, 7)
        coef = _fit_coefficients(basis, lambda x: x**3 - x)
        x = np.linspace(0, 2, 33)
        assert np.allclose(basis.evaluate(x) @ coef, x**3 - x, atol=1e-10)

    @pytest.mark.parametrize("domain,degree,size", [((1.0, 1.0), 3, 10), ((0.0, 1.0), -1, 10), ((0.0, 1.0), 3, 3)])
    def test_invalid_arguments(self, domain, degree, size):
        with pytest.raises(ValidationError):
            build_basis(domain, degree, size)


class TestPenalties:
    def test_second_derivative_null_space_is_linear(self):
        basis = build_basis((0.0, 1.0), 3, 10)
        penalty = second_derivative_penalty(basis)
        linear = _fit_coefficients(basis, lambda x: 2.0 * x + 1.0)
        assert _roughness(penalty, linear) == pytest.approx(0.0, abs=1e-10)
        eig = np.linalg.eigvalsh(penalty.matrix)
        assert eig.min() > -1e-8
        assert np.sum(eig > 1e-8 * eig.max()) == 8

    def test_second_derivative_of_quadratic(self):
        # f = x^2 on [0, 1]: int (f'')^2 = 4
        basis = build_basis((0.0, 1.0), 3, 6)
        coef = _fit_coefficients(basis, lambda x: x**2)
        assert _roughness(second_derivative_penalty(basis), coef) == pytest.approx(4.0, rel=1e-8)

    def test_needs_degree_two(self):
        with pytest.raises(ValidationError):
            second_derivative_penalty(build_basis((0.0, 1.0), 1, 5))

    def test_difference_penalty_rank(self):
        penalty = difference_penalty(7)
        assert np.linalg.matrix_rank(penalty.matrix) == 5
        assert _roughness(penalty, np.arange(7.0)) == pytest.approx(0.0)

    def test_kronecker(self):
        Pq, Pp = difference_penalty(4), difference_penalty(5)
        row, col = kronecker_components(Pq, Pp)
        assert row.shape == col.shape == (20, 20)
        combined = kronecker_penalty(Pq, Pp, 2.0, 3.0)
        assert np.allclose(combined.matrix, 2.0 * row + 3.0 * col)
        with pytest.raises(ValidationError):
            kronecker_penalty(Pq, Pp, -1.0, 1.0)


class TestTensorDesign:
    def test_row_sums_to_one(self):
        grid = QuantileGrid.midpoint()
        basis_q = build_basis((0.0, 1.0), 3, 5)
        basis_p = build_basis((0.0, 1.0), 3, 6)
        row = tensor_design_row(grid.levels, basis_q, basis_p, grid)
        assert row.shape == (30,)
        assert row.sum() == pytest.approx(1.0)

    def test_index_layout(self):
        grid = QuantileGrid.midpoint()
        basis_q = build_basis((0.0, 1.0), 3, 4)
        basis_p = build_basis((0.0, 1.0), 3, 5)
        q = 0.2 + 0.5 * grid.levels
        row = tensor_design_row(q, basis_q, basis_p, grid)
        Bq, Bp = basis_q.evaluate(q), basis_p.evaluate(grid.levels)
        k, l = 2, 3
        assert row[k * 5 + l] == pytest.approx(np.sum(grid.cell_weights * Bq[:, k] * Bp[:, l]))

    def test_clamping_warns(self):
        grid = QuantileGrid.midpoint(10)
        basis = build_basis((0.0, 1.0), 3, 5)
        with pytest.warns(ClampingWarning):
            tensor_design(np.array([np.linspace(-1, 2, 10)]), basis, basis, grid)

    def test_length_mismatch(self):
        grid = QuantileGrid.midpoint(10)
        basis = build_basis((0.0, 1.0), 3, 5)
        with pytest.raises(ValidationError):
            tensor_design_row(np.zeros(9), basis, basis, grid)
