"""End-to-end model fitting: panel in, fitted model out."""

import logging
from dataclasses import dataclass

import numpy as np

from fieldcast import argarch
from fieldcast.config import PipelineConfig
from fieldcast.errors import ConfigError, DomainError
from fieldcast.panel import ObservationPanel
from fieldcast.pca import SpatialBasis, build_basis
from fieldcast.predict import PredictionState, state_from_fits
from fieldcast.projection import BetaSeries, project_all
from fieldcast.splines import make_tensor_basis
from fieldcast.surface import estimate_mean, fit_all_days

logger = logging.getLogger(__name__)


@dataclass
class FittedModel:
    """A fully fitted pipeline ready for prediction and persistence."""

    config: PipelineConfig
    spatial: SpatialBasis
    beta: BetaSeries
    garch_fits: list
    sigma2: float
    state: PredictionState
    data_fingerprint: str
    skipped_days: list


def fit_model(panel: ObservationPanel, config: PipelineConfig) -> FittedModel:
    """Run the full pipeline on a panel.

    Stages: per-day spline surface fits of the centered errors, mean field
    estimation, SVD of the coefficient matrix for the spatial basis, per-day
    projection for the coefficient series and residuals, then one AR+GARCH
    fit per basis coefficient. The returned model carries the filtered state
    after the last fitted day.
    """
    config.validate()
    basis = make_tensor_basis(config.lon_min, config.lon_max,
                              config.lat_min, config.lat_max,
                              config.n_interior_lon, config.n_interior_lat)
    inside = basis.contains(panel.lons, panel.lats)
    if not np.all(inside):
        bad = [panel.locations[i].city_id for i in np.flatnonzero(~inside)]
        raise DomainError(f"locations outside the basis domain: {bad[:8]}")

    coeffs = fit_all_days(basis, panel, rtol=config.svd_rtol,
                          min_obs=config.min_obs_per_day, center=True)
    mean = estimate_mean(panel, coeffs)
    max_k = min(coeffs.n_days, basis.n_basis)
    if config.k > max_k:
        raise ConfigError(f"k={config.k} exceeds the {max_k} components "
                          f"available from {coeffs.n_days} fitted days")
    spatial = build_basis(coeffs, mean, config.k, basis)
    beta, residuals = project_all(spatial, panel, min_obs=config.min_obs_per_day)

    fits = []
    for k in range(config.k):
        fits.append(argarch.fit(beta.values[:, k]))
    n_flagged = sum(1 for f in fits if not f.converged or f.boundary_flags)
    if n_flagged:
        logger.info("%d of %d coefficient fits carry convergence or boundary flags",
                    n_flagged, config.k)

    state = state_from_fits(beta.dates[-1], beta.values[-1], fits)
    return FittedModel(
        config=config,
        spatial=spatial,
        beta=beta,
        garch_fits=fits,
        sigma2=residuals.sigma2,
        state=state,
        data_fingerprint=panel.fingerprint(),
        skipped_days=list(coeffs.skipped) + list(beta.skipped),
    )
