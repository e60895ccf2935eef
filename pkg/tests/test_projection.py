"""Tests for daily projection onto the spatial basis."""

from datetime import date

import numpy as np
import pytest

from fieldcast.errors import InsufficientDataError, RankDeficientDesignError
from fieldcast.panel import Location, ObservationPanel, date_range
from fieldcast.pca import SpatialBasis, build_basis, eval_basis
from fieldcast.projection import project_all, project_day
from fieldcast.surface import CoefficientMatrix, MeanField
from oracles import normal_equations_solve


def _spatial(basis, rng, k=3):
    p = basis.n_basis
    rows = rng.standard_normal((40, p)) * np.linspace(2.0, 0.5, 40)[:, None]
    coeffs = CoefficientMatrix(dates=date_range(date(2015, 1, 1), 40),
                               values=rows, residual_norms=np.zeros(40),
                               ranks=np.full(40, p), center_offset=0.0)
    mean = MeanField(grand_mean=1.0, mean_coeffs=rng.standard_normal(p) * 0.1)
    return build_basis(coeffs, mean, k, basis)


def _panel_from_fields(basis, lons, lats, fields, horizon=6):
    locs = [Location(f"C{i:03d}", "", float(lons[i]), float(lats[i]))
            for i in range(len(lons))]
    return ObservationPanel(dates=date_range(date(2016, 1, 1), fields.shape[0]),
                            locations=locs, errors=fields, horizon=horizon)


class TestProjectDay:
    def test_mean_only_field_gives_zero_beta(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 30)
        lats = rng.uniform(24, 49, 30)
        values = spatial.mean.evaluate(small_basis, lons, lats)
        beta, rank, rnorm = project_day(spatial, lons, lats, values)
        np.testing.assert_allclose(beta, 0.0, atol=1e-10)
        assert rank == 3
        assert rnorm < 1e-10

    def test_plant_and_recover_single_component(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 50)
        lats = rng.uniform(24, 49, 50)
        mean_at = spatial.mean.evaluate(small_basis, lons, lats)
        phi = eval_basis(spatial, lons, lats)
        values = mean_at + 3.0 * phi[:, 0]
        beta, _, _ = project_day(spatial, lons, lats, values)
        np.testing.assert_allclose(beta, [3.0, 0.0, 0.0], atol=1e-6)

    def test_matches_normal_equations_oracle(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 40)
        lats = rng.uniform(24, 49, 40)
        values = rng.standard_normal(40) * 2.0
        beta, _, _ = project_day(spatial, lons, lats, values)
        phi = eval_basis(spatial, lons, lats)
        y = values - spatial.mean.evaluate(small_basis, lons, lats)
        oracle = normal_equations_solve(phi, y)
        np.testing.assert_allclose(beta, oracle, atol=1e-8)

    def test_orthogonality_at_optimum(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 35)
        lats = rng.uniform(24, 49, 35)
        values = rng.standard_normal(35)
        beta, _, _ = project_day(spatial, lons, lats, values)
        phi = eval_basis(spatial, lons, lats)
        resid = (values - spatial.mean.evaluate(small_basis, lons, lats)) - phi @ beta
        assert np.abs(phi.T @ resid).max() < 1e-8

    def test_never_worse_than_zero_beta(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 30)
        lats = rng.uniform(24, 49, 30)
        for _ in range(5):
            values = rng.standard_normal(30) * 5.0
            beta, _, rnorm = project_day(spatial, lons, lats, values)
            zero_norm = np.linalg.norm(
                values - spatial.mean.evaluate(small_basis, lons, lats))
            assert rnorm <= zero_norm + 1e-12

    def test_minimal_norm_fallback_when_fewer_obs_than_k(self, small_basis, rng):
        spatial = _spatial(small_basis, rng, k=5)
        lons = rng.uniform(-124, -66, 8)
        lats = rng.uniform(24, 49, 8)
        values = np.full(8, np.nan)
        values[:3] = [1.0, -2.0, 0.5]
        beta, rank, _ = project_day(spatial, lons, lats, values)
        assert rank <= 3
        phi = eval_basis(spatial, lons, lats)[:3]
        y = values[:3] - spatial.mean.evaluate(small_basis, lons[:3], lats[:3])
        # Minimal-norm solution: beta in the row space of the design.
        expected, *_ = np.linalg.lstsq(phi, y, rcond=None)
        np.testing.assert_allclose(beta, expected, atol=1e-8)

    def test_rank_deficient_design_raises(self, small_basis, rng):
        spatial = _spatial(small_basis, rng, k=3)
        # Ten copies of the same two points cannot identify three components.
        lons = np.r_[np.full(5, -100.0), np.full(5, -90.0)]
        lats = np.r_[np.full(5, 35.0), np.full(5, 40.0)]
        values = rng.standard_normal(10)
        with pytest.raises(RankDeficientDesignError):
            project_day(spatial, lons, lats, values)

    def test_insufficient_observations(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        values = np.full(5, np.nan)
        with pytest.raises(InsufficientDataError):
            project_day(spatial, rng.uniform(-120, -70, 5), rng.uniform(25, 48, 5),
                        values, min_obs=1)


class TestProjectAll:
    def test_residual_identity_and_sigma2(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 40)
        lats = rng.uniform(24, 49, 40)
        fields = rng.standard_normal((25, 40)) * 2.0
        fields[rng.random((25, 40)) < 0.1] = np.nan
        panel = _panel_from_fields(small_basis, lons, lats, fields)
        beta, residuals = project_all(spatial, panel)
        phi = eval_basis(spatial, lons, lats)
        mean_at = spatial.mean.evaluate(small_basis, lons, lats)
        for t in range(25):
            present = np.isfinite(fields[t])
            identity = fields[t][present] - mean_at[present] - phi[present] @ beta.values[t]
            np.testing.assert_allclose(residuals.values[t][present], identity, atol=1e-10)
            assert np.all(~np.isfinite(residuals.values[t][~present]))
        flat = residuals.values[np.isfinite(residuals.values)]
        assert residuals.sigma2 == pytest.approx(np.var(flat, ddof=1), rel=1e-12)

    def test_zero_noise_planted_panel(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 30)
        lats = rng.uniform(24, 49, 30)
        phi = eval_basis(spatial, lons, lats)
        mean_at = spatial.mean.evaluate(small_basis, lons, lats)
        betas = rng.standard_normal((15, 3)) * [4.0, 2.0, 1.0]
        fields = mean_at + betas @ phi.T
        panel = _panel_from_fields(small_basis, lons, lats, fields)
        series, residuals = project_all(spatial, panel)
        np.testing.assert_allclose(series.values, betas, atol=1e-8)
        flat = residuals.values[np.isfinite(residuals.values)]
        assert np.abs(flat).max() < 1e-8

    def test_all_missing_day_skipped(self, small_basis, rng):
        spatial = _spatial(small_basis, rng)
        lons = rng.uniform(-124, -66, 20)
        lats = rng.uniform(24, 49, 20)
        fields = rng.standard_normal((6, 20))
        fields[2] = np.nan
        panel = _panel_from_fields(small_basis, lons, lats, fields)
        series, residuals = project_all(spatial, panel)
        assert len(series.dates) == 5
        assert panel.dates[2] not in series.dates
        assert len(series.skipped) == 1
        assert np.all(~np.isfinite(residuals.values[2]))

    def test_simulator_round_trip_correlation(self, small_basis, rng):
        from fieldcast.argarch import GarchParams
        from fieldcast.simulate import SimulationConfig, random_locations, simulate_panel

        locs = random_locations(90, small_basis, rng)
        garch = [GarchParams(0.7, o, 0.05, 0.8, 8.0) for o in (4000.0, 1500.0, 500.0)]
        config = SimulationConfig(basis=small_basis, garch_params=garch,
                                  locations=locs, n_days=400, sigma=0.3,
                                  missing_rate=0.03, seed=3)
        panel, truth = simulate_panel(config)
        from fieldcast.config import PipelineConfig
        from fieldcast.pipeline import fit_model

        model = fit_model(panel, PipelineConfig(k=3, min_obs_per_day=5,
                                                n_interior_lon=3, n_interior_lat=2))
        est = model.beta.values
        for k in range(3):
            best = max(abs(np.corrcoef(est[:, k], truth.beta[:, j])[0, 1])
                       for j in range(3))
            assert best > 0.99
