"""Daily projection onto the spatial basis and the residual field.

For each day, the mean-corrected observed errors are regressed on the K
basis surfaces evaluated at the observed locations. The coefficients form
the beta time series that the AR+GARCH stage models; what is left over at
each station is the residual field.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from fieldcast.errors import InsufficientDataError, RankDeficientDesignError
from fieldcast.panel import ObservationPanel
from fieldcast.pca import SpatialBasis, eval_basis

logger = logging.getLogger(__name__)


@dataclass
class BetaSeries:
    """Per-day basis coefficients; one row per projected day."""

    dates: list
    values: np.ndarray
    residual_norms: np.ndarray
    ranks: np.ndarray
    skipped: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass
class ResidualPanel:
    """Station-level residuals after mean and basis removal.

    Entries mirror the input panel's missingness. ``sigma2`` is the sample
    variance of all present residual entries.
    """

    dates: list
    locations: list
    values: np.ndarray
    sigma2: float


def project_day(basis: SpatialBasis, lons, lats, values, *,
                min_obs: int = 1,
                design: np.ndarray | None = None,
                mean_at: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
    """Project one day's observations onto the K basis surfaces.

    Solves the least-squares problem for the mean-corrected observations by
    QR when there are at least K observations; days with fewer fall back to
    the minimal-norm SVD solution. ``design`` and ``mean_at`` allow passing
    precomputed per-location basis evaluations and mean values.

    Returns
    -------
    beta : ndarray, shape (K,)
    rank : int
        Numerical rank of the day's design.
    residual_norm : float

    Raises
    ------
    InsufficientDataError
        If fewer than ``min_obs`` observations are present.
    RankDeficientDesignError
        If at least K observations are present but the design rank is
        below K (degenerate geometry).
    """
    values = np.asarray(values, dtype=np.float64)
    observed = np.isfinite(values)
    n_obs = int(observed.sum())
    k = basis.k
    if n_obs < max(min_obs, 1):
        raise InsufficientDataError(f"{n_obs} observations, need at least {min_obs}")
    if design is None:
        design = eval_basis(basis, np.asarray(lons), np.asarray(lats))
    if mean_at is None:
        mean_at = basis.mean.evaluate(basis.spline, np.asarray(lons), np.asarray(lats))
    g = design[observed]
    y = values[observed] - mean_at[observed]
    if n_obs >= k:
        beta, _, rank, _ = linalg.lstsq(g, y, lapack_driver="gelsy")
        if rank < k:
            raise RankDeficientDesignError(
                f"design rank {rank} < K={k} with {n_obs} observations")
    else:
        beta, _, rank, _ = linalg.lstsq(g, y, lapack_driver="gelsd")
    residual = y - g @ beta
    return beta, int(rank), float(np.linalg.norm(residual))


def project_all(basis: SpatialBasis, panel: ObservationPanel, *,
                min_obs: int = 1) -> tuple[BetaSeries, ResidualPanel]:
    """Project every day of the panel; return the beta series and residuals.

    Days that fail (too few observations, degenerate design) are skipped and
    listed on the series. Residuals are stored at observed entries only;
    sigma2 is their sample variance.
    """
    lons, lats = panel.lons, panel.lats
    design = eval_basis(basis, lons, lats)
    mean_at = basis.mean.evaluate(basis.spline, lons, lats)

    dates, rows, norms, ranks, skipped = [], [], [], [], []
    residuals = np.full_like(panel.errors, np.nan)
    for i, date in enumerate(panel.dates):
        try:
            beta, rank, rnorm = project_day(
                basis, lons, lats, panel.errors[i], min_obs=min_obs,
                design=design, mean_at=mean_at)
        except (InsufficientDataError, RankDeficientDesignError) as exc:
            skipped.append((date, str(exc)))
            continue
        observed = np.isfinite(panel.errors[i])
        residuals[i, observed] = (panel.errors[i, observed] - mean_at[observed]
                                  - design[observed] @ beta)
        dates.append(date)
        rows.append(beta)
        norms.append(rnorm)
        ranks.append(rank)
    if not rows:
        raise InsufficientDataError("no day could be projected")
    if skipped:
        logger.info("skipped %d of %d days during projection", len(skipped), len(panel.dates))
    present = np.isfinite(residuals)
    sigma2 = float(np.var(residuals[present], ddof=1)) if present.sum() > 1 else 0.0
    beta_series = BetaSeries(dates=dates, values=np.vstack(rows),
                             residual_norms=np.asarray(norms),
                             ranks=np.asarray(ranks, dtype=np.int64),
                             skipped=skipped)
    return beta_series, ResidualPanel(dates=panel.dates, locations=panel.locations,
                                      values=residuals, sigma2=sigma2)
