"""Tests for spatial correlation, correlograms, and the K-selection curve."""

from datetime import date

import numpy as np
import pytest

from fieldcast.argarch import GarchParams
from fieldcast.config import PipelineConfig
from fieldcast.diagnostics import (
    correlogram,
    east_to_west_order,
    frobenius_curve,
    haversine_km,
    spatial_correlation,
)
from fieldcast.errors import InsufficientDataError
from fieldcast.panel import Location, ObservationPanel, date_range
from fieldcast.pipeline import fit_model
from fieldcast.simulate import SimulationConfig, random_locations, simulate_panel
from oracles import haversine_reference, pairwise_complete_corr


def _locations(n, rng):
    return [Location(f"C{i:03d}", "", float(rng.uniform(-120, -70)),
                     float(rng.uniform(25, 48))) for i in range(n)]


class TestSpatialCorrelation:
    def test_identical_series_correlate_one(self, rng):
        locs = _locations(3, rng)
        series = rng.standard_normal(100)
        values = np.column_stack([series, series, rng.standard_normal(100)])
        corr = spatial_correlation(values, locs, kind="before", min_days=10)
        i = corr.order.tolist().index(0)
        j = corr.order.tolist().index(1)
        assert corr.matrix[i, j] == pytest.approx(1.0, abs=1e-12)

    def test_independent_series_near_zero(self, rng):
        locs = _locations(12, rng)
        values = rng.standard_normal((1000, 12))
        corr = spatial_correlation(values, locs, kind="before", min_days=10)
        off = corr.matrix[~np.eye(12, dtype=bool)]
        assert np.abs(off).max() < 0.13  # ~4 sigma at T=1000
        np.testing.assert_array_equal(np.diag(corr.matrix), 1.0)

    def test_matches_pairwise_oracle_with_missing(self, rng):
        locs = _locations(8, rng)
        values = rng.standard_normal((300, 8))
        values[rng.random((300, 8)) < 0.2] = np.nan
        corr = spatial_correlation(values, locs, kind="before", min_days=5)
        oracle, counts = pairwise_complete_corr(values[:, corr.order])
        np.testing.assert_allclose(corr.matrix, oracle, atol=1e-10)
        np.testing.assert_array_equal(corr.n_days, counts)

    def test_complete_mode_uses_global_complete_days(self, rng):
        locs = _locations(5, rng)
        values = rng.standard_normal((200, 5))
        values[::7, 0] = np.nan
        corr = spatial_correlation(values, locs, kind="before", mode="complete",
                                   min_days=5)
        keep = np.isfinite(values).all(axis=1)
        expected = np.corrcoef(values[keep][:, corr.order], rowvar=False)
        np.testing.assert_allclose(corr.matrix, expected, atol=1e-10)

    def test_pairs_below_floor_flagged(self, rng):
        locs = _locations(3, rng)
        values = rng.standard_normal((60, 3))
        values[20:, 2] = np.nan  # city 2 has only 20 usable days
        corr = spatial_correlation(values, locs, kind="before", min_days=30)
        pos = corr.order.tolist().index(2)
        row = corr.matrix[pos]
        assert np.all(~np.isfinite(row))
        others = [i for i in range(3) if i != pos]
        assert np.isfinite(corr.matrix[others[0], others[1]])

    def test_no_usable_pairs_raises(self, rng):
        locs = _locations(4, rng)
        values = np.full((10, 4), np.nan)
        with pytest.raises(InsufficientDataError):
            spatial_correlation(values, locs, kind="before", min_days=30)

    def test_east_to_west_order(self):
        locs = [Location("W", "", -120.0, 40.0), Location("E", "", -70.0, 40.0),
                Location("M", "", -95.0, 40.0)]
        order = east_to_west_order(locs)
        assert [locs[i].city_id for i in order] == ["E", "M", "W"]

    def test_degenerate_zero_variance_gives_zero_offdiag(self, rng):
        locs = _locations(3, rng)
        values = np.column_stack([np.zeros(100), rng.standard_normal(100),
                                  np.full(100, 1e-13)])
        corr = spatial_correlation(values, locs, kind="after", min_days=10)
        np.testing.assert_array_equal(np.diag(corr.matrix), 1.0)
        off = corr.matrix[~np.eye(3, dtype=bool)]
        np.testing.assert_array_equal(off, 0.0)


class TestCorrelogram:
    def test_haversine_known_values(self):
        # One degree of longitude at the equator.
        assert haversine_km(0.0, 0.0, 1.0, 0.0) == pytest.approx(111.19, abs=0.1)
        # Collocated points.
        assert haversine_km(-100.0, 40.0, -100.0, 40.0) == 0.0
        # Matches an independent law-of-cosines implementation.
        assert haversine_km(-120.0, 35.0, -75.0, 42.0) == pytest.approx(
            haversine_reference(-120.0, 35.0, -75.0, 42.0), rel=1e-9)

    def test_pairs_and_distances(self, rng):
        locs = [Location("A", "", -100.0, 35.0), Location("B", "", -99.0, 35.0),
                Location("C", "", -80.0, 42.0)]
        values = rng.standard_normal((120, 3))
        corr = spatial_correlation(values, locs, kind="before", min_days=10)
        pairs = correlogram(corr)
        assert pairs.shape == (3, 2)
        assert pairs[:, 0].min() > 0

    def test_planted_factor_decays_with_distance(self, small_basis, rng):
        locs = random_locations(60, small_basis, rng)
        garch = [GarchParams(0.7, 3000.0, 0.05, 0.8, 8.0)]
        config = SimulationConfig(basis=small_basis, garch_params=garch,
                                  locations=locs, n_days=500, sigma=1.0,
                                  missing_rate=0.0, seed=51)
        panel, _ = simulate_panel(config)
        before = spatial_correlation(panel.errors, panel.locations, kind="before")
        pairs = correlogram(before)
        near = pairs[pairs[:, 0] < 800][:, 1]
        far = pairs[pairs[:, 0] > 2500][:, 1]
        assert np.abs(near).mean() > np.abs(far).mean()


class TestFrobeniusCurve:
    def _planted(self, small_basis, rng, k_true=3, sigma=1.0, n_days=500):
        locs = random_locations(90, small_basis, rng)
        omegas = [4000.0, 1800.0, 800.0][:k_true]
        garch = [GarchParams(0.7, o, 0.05, 0.8, 8.0) for o in omegas]
        config = SimulationConfig(basis=small_basis, garch_params=garch,
                                  locations=locs, n_days=n_days, sigma=sigma,
                                  missing_rate=0.02, seed=61)
        return simulate_panel(config)

    def test_k_zero_equals_before_sum(self, small_basis, rng):
        panel, _ = self._planted(small_basis, rng)
        model = fit_model(panel, PipelineConfig(k=4, min_obs_per_day=5,
                                                n_interior_lon=3, n_interior_lat=2))
        before = spatial_correlation(panel.errors, panel.locations, kind="before")
        curve = dict(frobenius_curve(panel, model.spatial, [0]))
        assert curve[0] == pytest.approx(before.sum_squared(), rel=1e-9)

    def test_monotone_decrease_with_plateau_at_true_k(self, small_basis, rng):
        panel, _ = self._planted(small_basis, rng, k_true=3)
        model = fit_model(panel, PipelineConfig(k=5, min_obs_per_day=5,
                                                n_interior_lon=3, n_interior_lat=2))
        curve = frobenius_curve(panel, model.spatial, [0, 1, 2, 3, 4, 5])
        values = [v for _, v in curve]
        drops = -np.diff(values)
        assert np.all(drops > -1e-6)
        # Big drop onto the plateau at the true K, small drops after.
        assert drops[2] > 5 * abs(drops[3])
        n = panel.n_locations
        assert values[3] < values[0] / 3
        assert values[3] >= n  # the diagonal contributes n

    def test_out_of_range_k(self, small_basis, rng):
        panel, _ = self._planted(small_basis, rng)
        model = fit_model(panel, PipelineConfig(k=3, min_obs_per_day=5,
                                                n_interior_lon=3, n_interior_lat=2))
        with pytest.raises(ValueError):
            frobenius_curve(panel, model.spatial, [0, 4])
        with pytest.raises(ValueError):
            frobenius_curve(panel, model.spatial, [-1, 2])

    def test_before_block_structure_and_after_whitening(self, small_basis, rng):
        panel, truth = self._planted(small_basis, rng, k_true=2)
        model = fit_model(panel, PipelineConfig(k=2, min_obs_per_day=5,
                                                n_interior_lon=3, n_interior_lat=2))
        from fieldcast.projection import project_all

        before = spatial_correlation(panel.errors, panel.locations, kind="before")
        _, residuals = project_all(model.spatial, panel)
        after = spatial_correlation(residuals.values, panel.locations, kind="after")
        off = ~np.eye(panel.n_locations, dtype=bool)
        assert np.nanmean(np.abs(before.matrix[off])) > 3 * np.nanmean(
            np.abs(after.matrix[off]))
