"""Synthetic observation panels from the full generative model.

A panel is a mean level plus planted spatial basis surfaces scaled by
AR(1)+GARCH(1,1)-t coefficient paths, plus white noise, sampled at the
configured cities and masked at random. Two independent random streams are
derived from the seed: one for the coefficient dynamics, one for noise and
masking, so changing the noise level or missingness never perturbs the
coefficient paths.
"""

from dataclasses import dataclass, field
from datetime import date as Date

import numpy as np

from fieldcast import argarch
from fieldcast.panel import Location, ObservationPanel, date_range
from fieldcast.splines import TensorProductBasis, design_matrix


@dataclass
class SimulationConfig:
    """Everything needed to generate one synthetic panel."""

    basis: TensorProductBasis
    garch_params: list
    locations: list
    n_days: int
    sigma: float = 1.0
    missing_rate: float = 0.0
    seed: int = 0
    mean_level: float = 0.0
    loadings: np.ndarray | None = None  # None: random orthonormal
    horizon: int = 6
    start_date: Date = field(default_factory=lambda: Date(2014, 7, 1))
    base_actual: float = 70.0
    burn: int = 200

    @property
    def k_true(self) -> int:
        return len(self.garch_params)

    def validate(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not 0 <= self.missing_rate < 1:
            raise ValueError("missing_rate must be in [0, 1)")
        if self.n_days < 1:
            raise ValueError("n_days must be positive")
        if not self.garch_params:
            raise ValueError("at least one coefficient process is required")
        for p in self.garch_params:
            p.validate()
        if self.loadings is not None:
            l = np.asarray(self.loadings)
            if l.shape != (self.basis.n_basis, self.k_true):
                raise ValueError(f"loadings must be {self.basis.n_basis} x {self.k_true}")
            gram = l.T @ l
            if not np.allclose(gram, np.eye(self.k_true), atol=1e-8):
                raise ValueError("planted loadings must be orthonormal")


@dataclass
class SimulationTruth:
    """Ground truth behind a simulated panel."""

    beta: np.ndarray
    loadings: np.ndarray
    mean_level: float
    phi_at_cities: np.ndarray


def random_orthonormal_loadings(n_basis: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal columns from the QR of a Gaussian matrix, signs fixed."""
    q, r = np.linalg.qr(rng.standard_normal((n_basis, k)))
    q = q * np.sign(np.diag(r))
    for col in range(k):
        j = np.argmax(np.abs(q[:, col]))
        if q[j, col] < 0:
            q[:, col] = -q[:, col]
    return q


def simulate_panel(config: SimulationConfig) -> tuple[ObservationPanel, SimulationTruth]:
    """Generate a panel and its ground truth; reproducible for a fixed seed."""
    config.validate()
    ss = np.random.SeedSequence(config.seed)
    beta_stream, noise_stream = (np.random.default_rng(s) for s in ss.spawn(2))

    loadings = config.loadings
    if loadings is None:
        loadings = random_orthonormal_loadings(config.basis.n_basis, config.k_true, beta_stream)
    loadings = np.asarray(loadings, dtype=np.float64)

    beta = np.column_stack([
        argarch.simulate(p, config.n_days, seed=beta_stream, burn=config.burn)
        for p in config.garch_params
    ])

    lons = np.array([loc.lon for loc in config.locations])
    lats = np.array([loc.lat for loc in config.locations])
    phi = np.asarray(design_matrix(config.basis, lons, lats) @ loadings)

    fields = config.mean_level + beta @ phi.T
    noise = noise_stream.standard_normal(fields.shape) * config.sigma
    errors = fields + noise
    if config.missing_rate > 0:
        mask = noise_stream.random(fields.shape) < config.missing_rate
        errors = np.where(mask, np.nan, errors)

    actuals = np.where(np.isfinite(errors), config.base_actual, np.nan)
    forecasts = actuals + errors
    panel = ObservationPanel(
        dates=date_range(config.start_date, config.n_days),
        locations=list(config.locations),
        errors=errors,
        horizon=config.horizon,
        forecasts=forecasts,
        actuals=actuals,
    )
    truth = SimulationTruth(beta=beta, loadings=loadings,
                            mean_level=config.mean_level, phi_at_cities=phi)
    return panel, truth


def random_locations(n: int, basis: TensorProductBasis, rng: np.random.Generator,
                     margin: float = 0.02) -> list:
    """Random city locations inside the basis domain, away from the edges."""
    lon_lo, lon_hi, lat_lo, lat_hi = basis.domain
    dlon = (lon_hi - lon_lo) * margin
    dlat = (lat_hi - lat_lo) * margin
    lons = rng.uniform(lon_lo + dlon, lon_hi - dlon, n)
    lats = rng.uniform(lat_lo + dlat, lat_hi - dlat, n)
    return [Location(city_id=f"C{i:03d}", name=f"city-{i:03d}", lon=float(lons[i]),
                     lat=float(lats[i])) for i in range(n)]


def simulation_config_from_dict(data: dict) -> SimulationConfig:
    """Build a SimulationConfig from a plain JSON-style dict.

    Expected keys: n_days, garch (one dict or a list of dicts with psi,
    omega, alpha, gamma, nu), and either n_cities or a locations list; plus
    optional sigma, missing_rate, seed, mean_level, horizon, k_true (to
    replicate a single garch dict), domain {lon_min, lon_max, lat_min,
    lat_max}, n_interior_lon, n_interior_lat, start_date.
    """
    from fieldcast.argarch import GarchParams

    known = {"n_days", "garch", "n_cities", "locations", "sigma", "missing_rate",
             "seed", "mean_level", "horizon", "k_true", "domain",
             "n_interior_lon", "n_interior_lat", "start_date"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown simulation config keys: {sorted(unknown)}")
    domain = data.get("domain", {})
    basis = TensorProductBasis(
        lon=_make_knots(domain.get("lon_min", -124.0), domain.get("lon_max", -66.0),
                        int(data.get("n_interior_lon", 13))),
        lat=_make_knots(domain.get("lat_min", 24.0), domain.get("lat_max", 49.0),
                        int(data.get("n_interior_lat", 13))),
    )
    garch_raw = data["garch"]
    if isinstance(garch_raw, dict):
        garch_raw = [garch_raw] * int(data.get("k_true", 1))
    garch = [GarchParams(**g) for g in garch_raw]
    seed = int(data.get("seed", 0))
    if "locations" in data:
        locations = [Location(city_id=str(l["city_id"]), name=str(l.get("city_name", "")),
                              lon=float(l["longitude"]), lat=float(l["latitude"]))
                     for l in data["locations"]]
    else:
        loc_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10C5]))
        locations = random_locations(int(data["n_cities"]), basis, loc_rng)
    kwargs = {}
    if "start_date" in data:
        kwargs["start_date"] = Date.fromisoformat(data["start_date"])
    return SimulationConfig(
        basis=basis,
        garch_params=garch,
        locations=locations,
        n_days=int(data["n_days"]),
        sigma=float(data.get("sigma", 1.0)),
        missing_rate=float(data.get("missing_rate", 0.0)),
        seed=seed,
        mean_level=float(data.get("mean_level", 0.0)),
        horizon=int(data.get("horizon", 6)),
        **kwargs,
    )


def _make_knots(lo, hi, n_interior):
    from fieldcast.splines import make_clamped_knots

    return make_clamped_knots(float(lo), float(hi), n_interior)
