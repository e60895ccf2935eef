"""Spatial correlation diagnostics and the basis-count selection curve.

Correlations are computed per city pair over the days where both cities are
observed (pairwise mode, the default) or only over days where every city is
observed (complete mode). Pairs with too few usable days are flagged as
missing and excluded, symmetrically, from summary statistics. Cities are
ordered east to west for presentation.
"""

import logging
from dataclasses import dataclass

import numpy as np

from fieldcast.errors import InsufficientDataError
from fieldcast.panel import ObservationPanel
from fieldcast.pca import SpatialBasis
from fieldcast.projection import project_all

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

DEFAULT_MIN_PAIR_DAYS = 30

# Pairs whose residual variance falls below this floor carry no correlation
# evidence; their off-diagonal entries are reported as zero.
DEGENERATE_VARIANCE_FLOOR = 1e-18


@dataclass
class SpatialCorrelation:
    """Symmetric city-by-city correlation matrix in east-to-west order.

    ``matrix[i, j]`` is NaN when the pair had fewer than the minimum number
    of usable days. ``order`` maps matrix positions back to panel location
    indices; ``locations`` is already reordered.
    """

    matrix: np.ndarray
    locations: list
    order: np.ndarray
    kind: str
    n_days: np.ndarray

    @property
    def n_cities(self) -> int:
        return self.matrix.shape[0]

    def sum_squared(self) -> float:
        """Sum of squared entries over valid cells, diagonal included."""
        valid = np.isfinite(self.matrix)
        return float((self.matrix[valid] ** 2).sum())

    def max_off_diagonal(self) -> float:
        off = self.matrix.copy()
        np.fill_diagonal(off, 0.0)
        return float(np.nanmax(np.abs(off)))


def east_to_west_order(locations) -> np.ndarray:
    """Indices sorting locations from east (largest lon) to west."""
    lons = np.array([loc.lon for loc in locations])
    return np.argsort(-lons, kind="stable")


def spatial_correlation(values: np.ndarray, locations, *, kind: str,
                        mode: str = "pairwise",
                        min_days: int = DEFAULT_MIN_PAIR_DAYS) -> SpatialCorrelation:
    """Pairwise Pearson correlations of per-city series with missing entries.

    Parameters
    ----------
    values : ndarray, shape (n_days, n_cities)
        Error or residual panel; NaN marks missing.
    kind : str
        Label carried on the result, "before" or "after".
    mode : str
        "pairwise" uses each pair's own complete days; "complete" restricts
        every pair to the days where all cities are observed.

    Raises
    ------
    InsufficientDataError
        If no pair reaches ``min_days`` usable days.
    """
    if mode not in ("pairwise", "complete"):
        raise ValueError(f"unknown completeness mode {mode!r}")
    order = east_to_west_order(locations)
    vals = np.asarray(values, dtype=np.float64)[:, order]
    present = np.isfinite(vals)
    if mode == "complete":
        keep = present.all(axis=1)
        vals = vals[keep]
        present = present[keep]
    n = vals.shape[1]

    x = np.where(present, vals, 0.0)
    p = present.astype(np.float64)
    counts = p.T @ p
    sums = x.T @ p
    sum_sq = (x * x).T @ p
    cross = x.T @ x

    with np.errstate(invalid="ignore", divide="ignore"):
        mean_i = sums / counts
        # Pairwise-complete moments: E[xy] - E[x]E[y] over common days.
        cov = cross / counts - mean_i * mean_i.T
        var_i = sum_sq / counts - mean_i ** 2
        var_j = var_i.T
        degenerate = (var_i <= DEGENERATE_VARIANCE_FLOOR) | (var_j <= DEGENERATE_VARIANCE_FLOOR)
        corr = cov / np.sqrt(var_i * var_j)
    corr[degenerate] = 0.0
    corr = np.clip(corr, -1.0, 1.0)
    corr = (corr + corr.T) / 2.0
    corr[counts < min_days] = np.nan
    np.fill_diagonal(corr, 1.0)
    diag_short = np.diag(counts) < min_days
    corr[diag_short, :] = np.nan
    corr[:, diag_short] = np.nan

    if not np.isfinite(corr).any():
        raise InsufficientDataError(
            f"no city pair has {min_days} usable days in mode {mode!r}")
    return SpatialCorrelation(matrix=corr, locations=[locations[i] for i in order],
                              order=order, kind=kind, n_days=counts.astype(np.int64))


def haversine_km(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Great-circle distance in kilometres."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(a, dtype=np.float64))
                              for a in (lon1, lat1, lon2, lat2))
    dlon = lon2 - lon1
    dlat = lat2 - lat1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def correlogram(corr: SpatialCorrelation) -> np.ndarray:
    """Distance and correlation for every valid city pair.

    Returns an array of shape (n_pairs, 2): great-circle distance in km and
    the pair's correlation, one row per unordered pair with a valid entry.
    """
    locs = corr.locations
    n = corr.n_cities
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            c = corr.matrix[i, j]
            if not np.isfinite(c):
                continue
            d = haversine_km(locs[i].lon, locs[i].lat, locs[j].lon, locs[j].lat)
            rows.append((float(d), float(c)))
    return np.asarray(rows)


def frobenius_curve(panel: ObservationPanel, basis: SpatialBasis, k_values, *,
                    mode: str = "pairwise",
                    min_days: int = DEFAULT_MIN_PAIR_DAYS,
                    min_obs: int = 1) -> list[tuple[int, float]]:
    """Sum of squared residual correlations as a function of basis count.

    For each requested K the panel is re-projected on the leading K basis
    surfaces of ``basis`` and the residual correlation matrix is summed over
    its squared valid entries (diagonal included). K = 0 skips the basis
    entirely, so the value equals the sum for the raw errors.

    ``basis`` must carry at least ``max(k_values)`` components.
    """
    k_values = sorted(set(int(k) for k in k_values))
    if k_values and k_values[-1] > basis.k:
        raise ValueError(f"curve needs K up to {k_values[-1]} but the basis has {basis.k}")
    if k_values and k_values[0] < 0:
        raise ValueError("K values must be nonnegative")
    out = []
    for k in k_values:
        if k == 0:
            mean_at = basis.mean.evaluate(basis.spline, panel.lons, panel.lats)
            residual_values = panel.errors - mean_at
        else:
            _, residuals = project_all(basis.truncate(k), panel, min_obs=min_obs)
            residual_values = residuals.values
        corr = spatial_correlation(residual_values, panel.locations,
                                   kind="after", mode=mode, min_days=min_days)
        out.append((k, corr.sum_squared()))
    return out
