"""Tests for L-moments, Legendre polynomials and PVE."""

import numpy as np
import pytest

from qdist.shared.errors import ValidationError
from qdist.shared.lmoments import (
    LegendreBasis,
    LMomentVector,
    central_moments,
    compute_lmoments,
    legendre_shifted,
    legendre_table,
    lmoment_matrix,
    lmoment_ratios,
    lmoment_table,
    lmoments_from_quantile,
    lmoments_sample,
    pve,
    reconstruct_quantile,
    regular_moments_from_quantile,
    select_order_by_pve,
)
from qdist.shared.quantiles import QuantileFunction, QuantileGrid, integrate_on_grid

from .conftest import make_dataset

FINE = QuantileGrid.midpoint(10_000)


class TestLegendre:
    def test_low_degrees(self):
        p = np.array([0.0, 0.25, 1.0])
        assert np.allclose(legendre_shifted(0, p), 1.0)
        assert np.allclose(legendre_shifted(1, p), 2 * p - 1)
        assert np.allclose(legendre_shifted(2, p), 6 * p**2 - 6 * p + 1)

    def test_integer_coefficients_match_recurrence(self):
        basis = LegendreBasis.build(8)
        p = np.linspace(0, 1, 7)
        for r in range(9):
            assert np.allclose(basis.evaluate(r, p), legendre_shifted(r, p), atol=1e-9)

    def test_basis_rows_are_the_integer_table(self):
        basis = LegendreBasis.build(3)
        assert basis.row(2) == (1, -6, 6)
        assert basis.row(3) == (-1, 12, -30, 20)
        with pytest.raises(ValidationError):
            basis.row(4)
        with pytest.raises(ValidationError):
            basis.evaluate(1, [1.5])

    def test_orthogonality(self):
        table = legendre_table(FINE, 9)
        gram = table @ (FINE.cell_weights * table).T
        expected = np.diag(1.0 / (2 * np.arange(9) + 1))
        assert np.max(np.abs(gram - expected)) < 1e-6

    def test_degree_limit(self):
        with pytest.raises(ValidationError, match="exceeds"):
            legendre_shifted(13, 0.5)

    def test_outside_unit_interval(self):
        with pytest.raises(ValidationError):
            legendre_shifted(2, 1.5)


class TestPopulationLMoments:
    def test_uniform(self):
        qf = QuantileFunction(FINE, FINE.levels)
        lm = lmoments_from_quantile(qf, 4)
        assert np.allclose(lm.values, [0.5, 1 / 6, 0.0, 0.0], atol=1e-3)

    def test_exponential(self):
        qf = QuantileFunction(FINE, -np.log1p(-FINE.levels))
        lm = lmoments_from_quantile(qf, 4)
        assert lm[1] == pytest.approx(1.0, abs=5e-3)
        assert np.allclose(lm.values[1:], [0.5, 1 / 6, 1 / 12], atol=1e-3)

    def test_uniform_ab_closed_form(self):
        a, b = -1.0, 3.0
        qf = QuantileFunction(FINE, a + (b - a) * FINE.levels)
        lm = lmoments_from_quantile(qf, 2)
        assert lm[1] == pytest.approx((a + b) / 2, abs=1e-9)
        assert lm[2] == pytest.approx((b - a) / 6, abs=1e-6)

    def test_one_based_indexing(self):
        lm = LMomentVector(np.array([1.0, 0.5]))
        assert lm[1] == 1.0 and lm[2] == 0.5
        with pytest.raises(IndexError):
            lm[0]

    def test_negative_l_scale_rejected(self):
        with pytest.raises(ValidationError, match="L-scale"):
            LMomentVector(np.array([0.0, -1.0]))


class TestSampleLMoments:
    def test_small_exact_sample(self):
        lm = lmoments_sample([4.0, 1.0, 3.0, 2.0], 2)
        assert lm[1] == pytest.approx(2.5)
        # half the mean absolute pairwise difference
        assert lm[2] == pytest.approx(10 / 6 / 2)

    def test_large_uniform_sample(self):
        x = np.random.default_rng(1).uniform(size=100_000)
        lm = lmoments_sample(x, 4)
        # three standard errors at n = 1e5
        assert np.allclose(lm.values, [0.5, 1 / 6, 0.0, 0.0], atol=3e-3)

    @pytest.mark.parametrize("method", ["sample", "projection"])
    def test_location_scale(self, method):
        x = np.random.default_rng(4).gamma(3.0, size=400)
        a, b = 2.5, -7.0
        base = compute_lmoments(x, FINE, 4, method)
        moved = compute_lmoments(a * x + b, FINE, 4, method)
        # midpoint rule leaves about 1e-8 of each even-degree P_r, so a shift leaks that much
        assert moved[1] == pytest.approx(a * base[1] + b, abs=1e-9)
        assert np.allclose(moved.values[1:], a * base.values[1:], atol=1e-6)
        # L-CV involves L1; skewness and kurtosis ratios are shift and scale free
        assert np.allclose(lmoment_ratios(moved)[1:], lmoment_ratios(base)[1:], atol=1e-6)

    def test_outlier_moves_l_scale_less_than_sd(self):
        x = np.random.default_rng(5).normal(size=200)
        contaminated = np.append(x, 50.0)
        l_change = lmoments_sample(contaminated, 2)[2] / lmoments_sample(x, 2)[2] - 1.0
        sd_change = contaminated.std(ddof=1) / x.std(ddof=1) - 1.0
        assert 0 < l_change < sd_change / 3

    def test_insufficient_sample(self):
        with pytest.raises(ValidationError, match="insufficient sample"):
            lmoments_sample([1.0, 2.0], 3)

    def test_compute_lmoments_methods(self):
        x = np.random.default_rng(2).normal(size=500)
        grid = QuantileGrid.midpoint()
        proj = compute_lmoments(x, grid, 2, "projection")
        samp = compute_lmoments(x, grid, 2, "sample")
        assert samp[1] == pytest.approx(x.mean())
        assert proj[2] == pytest.approx(samp[2], rel=0.05)
        with pytest.raises(ValidationError, match="unknown L-moment method"):
            compute_lmoments(x, grid, 2, "moments")


class TestReconstructionAndPve:
    def test_first_pve_is_zero(self):
        rng = np.random.default_rng(3)
        grid = QuantileGrid.midpoint()
        for _ in range(100):
            qf = QuantileFunction(grid, np.sort(rng.gamma(2.0, size=100)) - 2.0)
            profile = pve(qf, 6)
            assert profile[1] == 0.0
            assert np.all(np.diff(profile.tau_sq) >= -1e-6)

    def test_uniform_reconstructed_at_order_two(self):
        grid = QuantileGrid.midpoint()
        a, b = 2.0, 5.0
        qf = QuantileFunction(grid, a + (b - a) * grid.levels)
        recon = reconstruct_quantile(lmoments_from_quantile(qf, 2), grid)
        assert np.allclose(recon, qf.values, atol=1e-4 * (b - a))

    @pytest.mark.parametrize("K", range(1, 9))
    def test_projection_recovers_lmoments_of_reconstruction(self, K):
        qf = QuantileFunction(FINE, -np.log1p(-FINE.levels) + 0.3 * FINE.levels**2)
        lm = lmoments_from_quantile(qf, K)
        recon = reconstruct_quantile(lm, FINE)
        again = integrate_on_grid(legendre_table(FINE, K) * recon, FINE)
        assert np.allclose(again, lm.values, rtol=1e-5, atol=2e-6)

    def test_constant_curve_profile(self):
        grid = QuantileGrid.midpoint()
        profile = pve(QuantileFunction(grid, np.full(100, 3.0)), 4)
        assert np.array_equal(profile.tau_sq, [0.0, 1.0, 1.0, 1.0])

    def test_select_order_for_uniform_curves(self):
        grid = QuantileGrid.midpoint()
        curves = [QuantileFunction(grid, c + s * grid.levels) for c, s in [(0, 1), (1, 2), (-1, 0.5)]]
        assert select_order_by_pve(curves, threshold=0.9) == 2

    def test_select_order_validates_threshold(self):
        grid = QuantileGrid.midpoint()
        with pytest.raises(ValidationError):
            select_order_by_pve([QuantileFunction(grid, grid.levels)], threshold=1.5)


class TestMomentsAndRatios:
    def test_uniform_raw_and_central_moments(self):
        qf = QuantileFunction(FINE, FINE.levels)
        raw = regular_moments_from_quantile(qf, 4)
        assert np.allclose(raw, [1 / 2, 1 / 3, 1 / 4, 1 / 5], atol=1e-6)
        central = central_moments(raw)
        assert central[0] == pytest.approx(1 / 12, abs=1e-6)
        assert central[1] == pytest.approx(0.0, abs=1e-6)

    def test_ratios(self):
        ratios = lmoment_ratios(LMomentVector(np.array([2.0, 1.0, 0.2, 0.1])))
        assert np.allclose(ratios, [0.5, 0.2, 0.1])

    def test_zero_scale_ratios_are_nan(self):
        ratios = lmoment_ratios(LMomentVector(np.array([2.0, 0.0, 0.0])))
        assert ratios[0] == 0.0
        assert np.isnan(ratios[1])


class TestTables:
    def test_matrix_and_table(self):
        dataset = make_dataset(n=6)
        grid = QuantileGrid.midpoint()
        L = lmoment_matrix(dataset, "x", grid, 3)
        assert L.shape == (6, 3)
        rows = lmoment_table(dataset, ["x"], grid, 3)
        assert len(rows) == 6
        assert set(rows[0]) == {"subject_id", "feature_id", "L1", "L2", "L3"}
        assert rows[0]["L2"] == pytest.approx(L[0, 1])

    def test_missing_feature(self):
        dataset = make_dataset(n=3)
        with pytest.raises(ValidationError, match="fewer than"):
            lmoment_matrix(dataset, "y", QuantileGrid.midpoint(), 2)
