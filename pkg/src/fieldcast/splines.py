"""Clamped cubic B-spline bases on an interval and their 2-D tensor products.

A knot vector here is always clamped: the endpoint knots are repeated
degree+1 times, so with ``n_interior`` equally spaced interior knots there
are ``n_interior + degree + 1`` basis functions per axis. The 2-D basis is
the tensor product of a longitude basis and a latitude basis, flattened
lon-major: flat index ``j = i_lon * n_lat + i_lat``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

from fieldcast import _backend
from fieldcast.errors import DomainError

# Basis values smaller than this are treated as structural zeros.
VALUE_FLOOR = 1e-14

DEGREE = 3


class SparseVector(NamedTuple):
    """Nonzero entries of a basis evaluation: ``values[i]`` at ``indices[i]``."""

    indices: np.ndarray
    values: np.ndarray
    size: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.indices] = self.values
        return out


@dataclass(frozen=True)
class KnotVector:
    """A clamped, nondecreasing knot vector of fixed degree.

    Attributes
    ----------
    knots : ndarray
        Full knot vector including the repeated endpoint knots.
    degree : int
        Polynomial degree, 3 for all pipeline uses.
    """

    knots: np.ndarray
    degree: int = DEGREE

    def __post_init__(self):
        kn = np.asarray(self.knots, dtype=np.float64)
        object.__setattr__(self, "knots", kn)
        p = self.degree
        if p < 1:
            raise ValueError("degree must be at least 1")
        if kn.ndim != 1 or kn.size < 2 * (p + 1):
            raise ValueError("knot vector needs at least 2*(degree+1) entries")
        if np.any(np.diff(kn) < 0):
            raise ValueError("knots must be nondecreasing")
        if not (np.all(kn[: p + 1] == kn[0]) and np.all(kn[-(p + 1):] == kn[-1])):
            raise ValueError("knot vector must be clamped (endpoints repeated degree+1 times)")
        if kn[0] == kn[-1]:
            raise DomainError("knot range is empty")

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def lo(self) -> float:
        return float(self.knots[0])

    @property
    def hi(self) -> float:
        return float(self.knots[-1])

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x >= self.lo) & (x <= self.hi)


def make_clamped_knots(lo: float, hi: float, n_interior: int, degree: int = DEGREE) -> KnotVector:
    """Build a clamped knot vector with equally spaced interior knots.

    Parameters
    ----------
    lo, hi : float
        Domain endpoints, ``hi > lo``.
    n_interior : int
        Number of interior knots strictly between the endpoints; spacing is
        ``(hi - lo) / (n_interior + 1)``.

    Raises
    ------
    DomainError
        If ``hi <= lo``.
    ValueError
        If ``n_interior`` is negative.
    """
    if hi <= lo:
        raise DomainError(f"invalid range: need hi > lo, got [{lo}, {hi}]")
    if n_interior < 0:
        raise ValueError(f"n_interior must be nonnegative, got {n_interior}")
    interior = np.linspace(lo, hi, n_interior + 2)[1:-1]
    knots = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
    return KnotVector(knots, degree)


def eval_1d(kv: KnotVector, x: float) -> np.ndarray:
    """Evaluate all 1-D basis functions at ``x``.

    Returns the dense vector of length ``kv.n_basis``; at most degree+1
    entries are nonzero, all nonnegative, summing to 1.

    Raises
    ------
    DomainError
        If ``x`` lies outside the clamped range.
    """
    if not np.all(kv.contains(x)):
        raise DomainError(f"point {x} outside knot range [{kv.lo}, {kv.hi}]")
    starts, vals = _backend.kernels.bspline_design(kv.knots, kv.degree, np.atleast_1d(float(x)))
    out = np.zeros(kv.n_basis)
    out[starts[0]: starts[0] + kv.degree + 1] = vals[0]
    out[np.abs(out) < VALUE_FLOOR] = 0.0
    return out


def eval_1d_many(kv: KnotVector, x) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the supported basis functions at many points.

    Returns ``(starts, values)`` as produced by the kernel; see
    ``bspline_design``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(kv.contains(x)):
        bad = x[~kv.contains(x)]
        raise DomainError(f"points outside knot range [{kv.lo}, {kv.hi}]: {bad[:5]}")
    return _backend.kernels.bspline_design(kv.knots, kv.degree, x)


@dataclass(frozen=True)
class TensorProductBasis:
    """Tensor product of a longitude and a latitude clamped B-spline basis."""

    lon: KnotVector
    lat: KnotVector
    n_basis: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_basis", self.lon.n_basis * self.lat.n_basis)

    @property
    def domain(self) -> tuple[float, float, float, float]:
        """Rectangle (lon_min, lon_max, lat_min, lat_max)."""
        return (self.lon.lo, self.lon.hi, self.lat.lo, self.lat.hi)

    def flat_index(self, i_lon: int, i_lat: int) -> int:
        """Lon-major flat index of the (i_lon, i_lat) tensor function."""
        n_lat = self.lat.n_basis
        if not (0 <= i_lon < self.lon.n_basis and 0 <= i_lat < n_lat):
            raise IndexError(f"tensor index ({i_lon}, {i_lat}) out of range")
        return i_lon * n_lat + i_lat

    def unflatten(self, j: int) -> tuple[int, int]:
        """Inverse of ``flat_index``."""
        if not 0 <= j < self.n_basis:
            raise IndexError(f"flat index {j} out of range")
        return divmod(j, self.lat.n_basis)

    def contains(self, lons, lats) -> np.ndarray:
        return self.lon.contains(lons) & self.lat.contains(lats)


def make_tensor_basis(lon_min: float, lon_max: float, lat_min: float, lat_max: float,
                      n_interior_lon: int, n_interior_lat: int) -> TensorProductBasis:
    """Convenience constructor from a domain rectangle and interior knot counts."""
    return TensorProductBasis(
        lon=make_clamped_knots(lon_min, lon_max, n_interior_lon),
        lat=make_clamped_knots(lat_min, lat_max, n_interior_lat),
    )


def eval_2d(basis: TensorProductBasis, lon: float, lat: float) -> SparseVector:
    """Evaluate the tensor-product basis at one point.

    The result has at most (degree+1)**2 nonzeros and its values sum to 1.
    Entries below ``VALUE_FLOOR`` are dropped as structural zeros.

    Raises
    ------
    DomainError
        If the point lies outside the domain rectangle.
    """
    s_lon, v_lon = eval_1d_many(basis.lon, [float(lon)])
    s_lat, v_lat = eval_1d_many(basis.lat, [float(lat)])
    block = np.outer(v_lon[0], v_lat[0])
    n_lat = basis.lat.n_basis
    cols = ((s_lon[0] + np.arange(basis.lon.degree + 1))[:, None] * n_lat
            + (s_lat[0] + np.arange(basis.lat.degree + 1))[None, :]).ravel()
    vals = block.ravel()
    keep = np.abs(vals) >= VALUE_FLOOR
    return SparseVector(cols[keep], vals[keep], basis.n_basis)


def design_matrix(basis: TensorProductBasis, lons, lats) -> sparse.csr_matrix:
    """Assemble the sparse design matrix of tensor basis values at points.

    Row i holds S_j(lon_i, lat_i) for all j; at most (degree+1)**2 nonzeros
    per row. Raises ``DomainError`` for points outside the rectangle.
    """
    lons = np.asarray(lons, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    if lons.shape != lats.shape:
        raise ValueError("lons and lats must have the same shape")
    s_lon, v_lon = eval_1d_many(basis.lon, lons)
    s_lat, v_lat = eval_1d_many(basis.lat, lats)
    p1 = basis.lon.degree + 1
    p2 = basis.lat.degree + 1
    n = lons.size
    n_lat = basis.lat.n_basis
    cols = ((s_lon[:, None] + np.arange(p1))[:, :, None] * n_lat
            + (s_lat[:, None] + np.arange(p2))[:, None, :]).reshape(n, p1 * p2)
    vals = (v_lon[:, :, None] * v_lat[:, None, :]).reshape(n, p1 * p2)
    vals[np.abs(vals) < VALUE_FLOOR] = 0.0
    rows = np.repeat(np.arange(n), p1 * p2)
    mat = sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, basis.n_basis))
    mat.eliminate_zeros()
    return mat
