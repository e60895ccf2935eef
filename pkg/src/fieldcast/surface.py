"""Per-day spline surface fits via truncated SVD, and the mean field.

Each day's observed errors are fit with the full tensor-product basis by
least squares. The system is underdetermined whenever there are fewer
observations than basis functions, so the minimal-norm solution is taken
after discarding singular values below ``rtol`` times the largest. The
default threshold also suppresses near-null directions that appear on days
with awkward missing patterns; those directions otherwise amplify
observation noise into the coefficient matrix and corrupt the downstream
principal components. Columns
of the design with no support overlap with any observation are excluded
from the solve entirely, which pins their coefficients to exactly zero.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from fieldcast.errors import DegenerateDesignError, InsufficientDataError
from fieldcast.panel import ObservationPanel
from fieldcast.splines import TensorProductBasis, design_matrix

logger = logging.getLogger(__name__)

DEFAULT_SVD_RTOL = 1e-3
DEFAULT_MIN_OBS = 10


@dataclass
class MeanField:
    """Time-invariant mean error surface: a grand mean plus a spline surface."""

    grand_mean: float
    mean_coeffs: np.ndarray

    def evaluate(self, basis: TensorProductBasis, lons, lats) -> np.ndarray:
        """Mean error at each point: grand_mean + sum_j cbar_j S_j."""
        design = design_matrix(basis, lons, lats)
        return self.grand_mean + design @ self.mean_coeffs


@dataclass
class CoefficientMatrix:
    """Fitted spline coefficients, one row per successfully fitted day.

    ``center_offset`` is subtracted from every observation before fitting,
    so a row reproduces ``errors - center_offset`` at that day's points.
    """

    dates: list
    values: np.ndarray
    residual_norms: np.ndarray
    ranks: np.ndarray
    center_offset: float = 0.0
    skipped: list = field(default_factory=list)

    @property
    def n_days(self) -> int:
        return self.values.shape[0]


def solve_truncated(design_dense: np.ndarray, y: np.ndarray, rtol: float) -> tuple[np.ndarray, int, np.ndarray]:
    """Minimal-norm least squares with singular values below rtol*s_max dropped.

    Returns (solution, rank kept, singular values).
    """
    u, s, vt = np.linalg.svd(design_dense, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(design_dense.shape[1]), 0, s
    keep = s > rtol * s[0]
    rank = int(keep.sum())
    coef = vt[keep].T @ ((u[:, keep].T @ y) / s[keep])
    return coef, rank, s


def fit_day(basis: TensorProductBasis, lons, lats, values, *,
            rtol: float = DEFAULT_SVD_RTOL,
            min_obs: int = DEFAULT_MIN_OBS) -> tuple[np.ndarray, int, float]:
    """Fit one day's spline coefficients to its observed errors.

    Parameters
    ----------
    lons, lats : array_like
        Coordinates of all panel locations.
    values : array_like
        Errors at those locations; NaN marks a missing observation.

    Returns
    -------
    coeffs : ndarray
        Full-length coefficient vector; exactly zero for basis functions
        whose support contains no observation.
    rank : int
        Number of singular values kept in the solve.
    residual_norm : float
        Euclidean norm of the fit residual at the observed points.

    Raises
    ------
    InsufficientDataError
        If fewer than ``min_obs`` observations are present.
    DegenerateDesignError
        If all observations share a single location.
    """
    lons = np.asarray(lons, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    observed = np.isfinite(values)
    n_obs = int(observed.sum())
    if n_obs < min_obs:
        raise InsufficientDataError(f"{n_obs} observations, need at least {min_obs}")
    pts = set(zip(lons[observed].tolist(), lats[observed].tolist()))
    if n_obs > 1 and len(pts) < 2:
        raise DegenerateDesignError("all observations are collocated")

    design = design_matrix(basis, lons[observed], lats[observed])
    y = values[observed]
    col_nnz = design.getnnz(axis=0)
    active = np.flatnonzero(col_nnz)
    reduced = design[:, active].toarray()
    coef_active, rank, _ = solve_truncated(reduced, y, rtol)
    coeffs = np.zeros(basis.n_basis)
    coeffs[active] = coef_active
    residual = y - reduced @ coef_active
    return coeffs, rank, float(np.linalg.norm(residual))


def fit_all_days(basis: TensorProductBasis, panel: ObservationPanel, *,
                 rtol: float = DEFAULT_SVD_RTOL,
                 min_obs: int = DEFAULT_MIN_OBS,
                 center: bool = True) -> CoefficientMatrix:
    """Fit spline coefficients for every day in the panel.

    With ``center=True`` (the pipeline default) the grand mean of all
    observed errors is subtracted before fitting, so the coefficient rows
    describe departures from the overall level; the offset is recorded in
    ``center_offset``. Days failing the observation floor are skipped and
    listed with reasons.

    Raises
    ------
    InsufficientDataError
        If no day passes the floor.
    """
    lons = panel.lons
    lats = panel.lats
    if not np.isfinite(panel.errors).any():
        raise InsufficientDataError("panel has no observed entries")
    offset = float(np.nanmean(panel.errors)) if center else 0.0

    dates, rows, norms, ranks, skipped = [], [], [], [], []
    for i, date in enumerate(panel.dates):
        try:
            coeffs, rank, rnorm = fit_day(
                basis, lons, lats, panel.errors[i] - offset, rtol=rtol, min_obs=min_obs)
        except (InsufficientDataError, DegenerateDesignError) as exc:
            skipped.append((date, str(exc)))
            continue
        dates.append(date)
        rows.append(coeffs)
        norms.append(rnorm)
        ranks.append(rank)
    if not rows:
        raise InsufficientDataError("no day passed the minimum-observation floor")
    if skipped:
        logger.info("skipped %d of %d days during surface fitting", len(skipped), len(panel.dates))
    return CoefficientMatrix(
        dates=dates,
        values=np.vstack(rows),
        residual_norms=np.asarray(norms),
        ranks=np.asarray(ranks, dtype=np.int64),
        center_offset=offset,
        skipped=skipped,
    )


def estimate_mean(panel: ObservationPanel, coeffs: CoefficientMatrix) -> MeanField:
    """Estimate the mean field from the panel and its coefficient matrix.

    The grand mean is the average of every observed error in the panel; the
    surface part is the unweighted column mean of the coefficient rows.
    """
    if coeffs.n_days == 0:
        raise InsufficientDataError("empty coefficient matrix")
    grand_mean = float(np.nanmean(panel.errors))
    if not np.isclose(coeffs.center_offset, grand_mean, rtol=1e-9, atol=1e-12):
        logger.warning(
            "coefficient rows were centered by %.6g but the panel grand mean is %.6g; "
            "the mean field assumes rows centered by the grand mean",
            coeffs.center_offset, grand_mean)
    return MeanField(grand_mean=grand_mean, mean_coeffs=coeffs.values.mean(axis=0))
