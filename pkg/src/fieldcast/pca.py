"""Spatial basis extraction from the coefficient matrix by SVD.

The mean-centered coefficient rows are decomposed as U S V^T; the leading K
columns of V are the principal component loadings. Each loading vector,
pushed through the spline basis, is one spatial basis surface.
"""

from dataclasses import dataclass

import numpy as np

from fieldcast.errors import DomainError
from fieldcast.splines import TensorProductBasis, design_matrix
from fieldcast.surface import CoefficientMatrix, MeanField


@dataclass
class SpatialBasis:
    """K leading spatial basis surfaces and the decomposition behind them.

    Attributes
    ----------
    spline : TensorProductBasis
        The underlying tensor-product spline basis.
    mean : MeanField
        The mean field whose column means centered the decomposition.
    loadings : ndarray, shape (n_spline, K)
        Orthonormal loading columns, ordered by descending singular value,
        each scaled so its largest-magnitude entry is positive.
    singular_values : ndarray
        Full descending singular value list of the centered matrix.
    explained_variance : ndarray
        Fraction of total variance per component (full list, not just K).
    """

    spline: TensorProductBasis
    mean: MeanField
    loadings: np.ndarray
    singular_values: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    def truncate(self, k: int) -> "SpatialBasis":
        """The same decomposition restricted to its first ``k`` components."""
        if not 1 <= k <= self.k:
            raise ValueError(f"k={k} out of range 1..{self.k}")
        return SpatialBasis(self.spline, self.mean, self.loadings[:, :k],
                            self.singular_values, self.explained_variance)


def fix_signs(loadings: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = loadings.copy()
    for k in range(out.shape[1]):
        j = np.argmax(np.abs(out[:, k]))
        if out[j, k] < 0:
            out[:, k] = -out[:, k]
    return out


def build_basis(coeffs: CoefficientMatrix, mean: MeanField, k: int,
                spline: TensorProductBasis) -> SpatialBasis:
    """Extract the top-``k`` spatial basis from the coefficient matrix.

    Centering subtracts the same column means stored in ``mean`` rather than
    recomputing them, keeping the mean surface and the decomposition
    consistent.

    Raises
    ------
    ValueError
        If ``k`` is outside 1..min(n_days, n_spline).
    """
    m, p = coeffs.values.shape
    if not 1 <= k <= min(m, p):
        raise ValueError(f"k={k} out of range 1..{min(m, p)}")
    centered = coeffs.values - mean.mean_coeffs
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    total = float((s ** 2).sum())
    explained = (s ** 2) / total if total > 0 else np.zeros_like(s)
    loadings = fix_signs(vt[:k].T)
    return SpatialBasis(spline=spline, mean=mean, loadings=loadings,
                        singular_values=s, explained_variance=explained)


def eval_basis(basis: SpatialBasis, lons, lats) -> np.ndarray:
    """Evaluate all K basis surfaces at points; shape (n_points, K).

    Raises ``DomainError`` for points outside the spline domain.
    """
    lons = np.atleast_1d(np.asarray(lons, dtype=np.float64))
    lats = np.atleast_1d(np.asarray(lats, dtype=np.float64))
    inside = basis.spline.contains(lons, lats)
    if not np.all(inside):
        raise DomainError(f"points outside the basis domain: "
                          f"{list(zip(lons[~inside][:5], lats[~inside][:5]))}")
    design = design_matrix(basis.spline, lons, lats)
    return design @ basis.loadings


def export_basis_grid(basis: SpatialBasis, k: int, n_lon: int = 100, n_lat: int = 100):
    """Evaluate basis surface ``k`` (1-based) on a regular lon/lat grid.

    Returns ``(lon_axis, lat_axis, values)`` with ``values[i, j]`` the
    surface at ``(lon_axis[i], lat_axis[j])``; rows scan longitude west to
    east, columns latitude south to north.

    Raises
    ------
    ValueError
        If ``k`` is outside 1..K.
    """
    if not 1 <= k <= basis.k:
        raise ValueError(f"basis index {k} out of range 1..{basis.k}")
    lon_lo, lon_hi, lat_lo, lat_hi = basis.spline.domain
    lon_axis = np.linspace(lon_lo, lon_hi, n_lon)
    lat_axis = np.linspace(lat_lo, lat_hi, n_lat)
    glon, glat = np.meshgrid(lon_axis, lat_axis, indexing="ij")
    vals = eval_basis(basis, glon.ravel(), glat.ravel())[:, k - 1]
    return lon_axis, lat_axis, vals.reshape(n_lon, n_lat)
