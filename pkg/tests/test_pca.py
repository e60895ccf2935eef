"""Tests for spatial basis extraction and evaluation."""

import numpy as np
import pytest

from fieldcast.errors import DomainError
from fieldcast.pca import build_basis, eval_basis, export_basis_grid, fix_signs
from fieldcast.splines import design_matrix, eval_2d
from fieldcast.surface import CoefficientMatrix, MeanField
from oracles import covariance_eig_loadings

from datetime import date, timedelta


def _coeffs(values, center_offset=0.0):
    m = values.shape[0]
    dates = [date(2015, 1, 1) + timedelta(days=i) for i in range(m)]
    return CoefficientMatrix(dates=dates, values=values,
                             residual_norms=np.zeros(m),
                             ranks=np.full(m, values.shape[1]),
                             center_offset=center_offset)


def _zero_mean(p):
    return MeanField(grand_mean=0.0, mean_coeffs=np.zeros(p))


class TestBuildBasis:
    def test_rank_one_matrix(self, small_basis, rng):
        p = small_basis.n_basis
        direction = rng.standard_normal(p)
        direction /= np.linalg.norm(direction)
        weights = rng.standard_normal(40)
        weights -= weights.mean()
        coeffs = _coeffs(np.outer(weights, direction))
        basis = build_basis(coeffs, _zero_mean(p), 1, small_basis)
        got = basis.loadings[:, 0]
        sign = np.sign(got[np.argmax(np.abs(got))])
        want = direction * np.sign(direction[np.argmax(np.abs(direction))])
        np.testing.assert_allclose(got * sign * sign, want, atol=1e-10)
        assert basis.explained_variance[0] == pytest.approx(1.0, abs=1e-12)

    def test_orthonormal_loadings(self, paper_basis, rng):
        values = rng.standard_normal((50, paper_basis.n_basis))
        basis = build_basis(_coeffs(values), _zero_mean(paper_basis.n_basis), 20,
                            paper_basis)
        gram = basis.loadings.T @ basis.loadings
        np.testing.assert_allclose(gram, np.eye(20), atol=1e-10)

    def test_matches_covariance_eigendecomposition_oracle(self, paper_basis, rng):
        values = rng.standard_normal((50, paper_basis.n_basis))
        mean = MeanField(0.0, values.mean(axis=0))
        basis = build_basis(_coeffs(values), mean, 10, paper_basis)
        oracle_vecs, oracle_sv = covariance_eig_loadings(values, 10)
        for k in range(10):
            a = basis.loadings[:, k]
            b = oracle_vecs[:, k]
            sign = np.sign(a @ b)
            np.testing.assert_allclose(a, sign * b, atol=1e-8)
        np.testing.assert_allclose(basis.singular_values[:10], oracle_sv[:10],
                                   rtol=1e-10)

    def test_explained_variance_nonincreasing_and_bounded(self, small_basis, rng):
        p = small_basis.n_basis
        values = rng.standard_normal((30, p)) * np.linspace(3, 0.1, p)
        basis = build_basis(_coeffs(values), _zero_mean(p), 5, small_basis)
        ev = basis.explained_variance
        assert np.all(np.diff(ev) <= 1e-15)
        assert ev[:5].sum() <= 1.0 + 1e-12

    def test_k_out_of_range(self, small_basis, rng):
        values = rng.standard_normal((8, small_basis.n_basis))
        with pytest.raises(ValueError):
            build_basis(_coeffs(values), _zero_mean(small_basis.n_basis), 0, small_basis)
        with pytest.raises(ValueError):
            build_basis(_coeffs(values), _zero_mean(small_basis.n_basis), 9, small_basis)

    def test_centering_uses_given_mean_not_recomputed(self, small_basis, rng):
        p = small_basis.n_basis
        values = rng.standard_normal((20, p)) + 5.0
        mean = MeanField(0.0, np.zeros(p))  # deliberately not the column means
        basis = build_basis(_coeffs(values), mean, 2, small_basis)
        _, s_uncentered, _ = np.linalg.svd(values, full_matrices=False)
        np.testing.assert_allclose(basis.singular_values, s_uncentered, rtol=1e-10)

    def test_sign_convention(self, small_basis, rng):
        values = rng.standard_normal((25, small_basis.n_basis))
        basis = build_basis(_coeffs(values), _zero_mean(small_basis.n_basis), 6,
                            small_basis)
        for k in range(6):
            col = basis.loadings[:, k]
            assert col[np.argmax(np.abs(col))] > 0

    def test_truncate(self, small_basis, rng):
        values = rng.standard_normal((30, small_basis.n_basis))
        basis = build_basis(_coeffs(values), _zero_mean(small_basis.n_basis), 6,
                            small_basis)
        sub = basis.truncate(2)
        np.testing.assert_array_equal(sub.loadings, basis.loadings[:, :2])
        with pytest.raises(ValueError):
            basis.truncate(7)


class TestEvalBasis:
    def test_corner_indicator_loading(self, paper_basis):
        p = paper_basis.n_basis
        loadings = np.zeros((p, 1))
        loadings[0, 0] = 1.0
        from fieldcast.pca import SpatialBasis

        basis = SpatialBasis(spline=paper_basis, mean=_zero_mean(p),
                             loadings=loadings, singular_values=np.ones(1),
                             explained_variance=np.ones(1))
        val = eval_basis(basis, -124.0, 24.0)
        assert val[0, 0] == pytest.approx(1.0)

    def test_matches_direct_sum_oracle(self, small_basis, rng):
        p = small_basis.n_basis
        values = rng.standard_normal((30, p))
        basis = build_basis(_coeffs(values), _zero_mean(p), 4, small_basis)
        for _ in range(10):
            lon = float(rng.uniform(-124, -66))
            lat = float(rng.uniform(24, 49))
            got = eval_basis(basis, lon, lat)[0]
            sv = eval_2d(small_basis, lon, lat)
            oracle = np.array([np.sum(sv.values * basis.loadings[sv.indices, k])
                               for k in range(4)])
            np.testing.assert_allclose(got, oracle, atol=1e-12)

    def test_out_of_domain(self, small_basis, rng):
        values = rng.standard_normal((30, small_basis.n_basis))
        basis = build_basis(_coeffs(values), _zero_mean(small_basis.n_basis), 2,
                            small_basis)
        with pytest.raises(DomainError):
            eval_basis(basis, -125.0, 30.0)


class TestExportGrid:
    def _basis(self, small_basis, rng, k=3):
        values = rng.standard_normal((30, small_basis.n_basis))
        return build_basis(_coeffs(values), _zero_mean(small_basis.n_basis), k,
                           small_basis)

    def test_two_by_two_grid_hits_corners(self, small_basis, rng):
        basis = self._basis(small_basis, rng)
        lon_axis, lat_axis, grid = export_basis_grid(basis, 1, 2, 2)
        assert grid.shape == (2, 2)
        np.testing.assert_array_equal(lon_axis, [-124.0, -66.0])
        np.testing.assert_array_equal(lat_axis, [24.0, 49.0])
        corners = eval_basis(basis, [-124, -124, -66, -66], [24, 49, 24, 49])[:, 0]
        np.testing.assert_allclose(grid.ravel(), corners[[0, 1, 2, 3]], atol=1e-12)

    def test_grid_matches_pointwise_eval(self, small_basis, rng):
        basis = self._basis(small_basis, rng)
        lon_axis, lat_axis, grid = export_basis_grid(basis, 2, 7, 5)
        for i in [0, 3, 6]:
            for j in [0, 2, 4]:
                point = eval_basis(basis, lon_axis[i], lat_axis[j])[0, 1]
                assert grid[i, j] == pytest.approx(point, abs=1e-12)

    def test_zero_loading_gives_zero_grid(self, small_basis):
        p = small_basis.n_basis
        from fieldcast.pca import SpatialBasis

        basis = SpatialBasis(spline=small_basis, mean=_zero_mean(p),
                             loadings=np.zeros((p, 1)), singular_values=np.zeros(1),
                             explained_variance=np.zeros(1))
        _, _, grid = export_basis_grid(basis, 1, 4, 4)
        np.testing.assert_array_equal(grid, 0.0)

    def test_k_out_of_range(self, small_basis, rng):
        basis = self._basis(small_basis, rng, k=2)
        with pytest.raises(ValueError):
            export_basis_grid(basis, 3)
        with pytest.raises(ValueError):
            export_basis_grid(basis, 0)


def test_fix_signs_idempotent(rng):
    mat = rng.standard_normal((40, 5))
    fixed = fix_signs(mat)
    np.testing.assert_array_equal(fix_signs(fixed), fixed)
    for k in range(5):
        assert fixed[np.argmax(np.abs(fixed[:, k])), k] > 0
