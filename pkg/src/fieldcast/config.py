"""Pipeline configuration: defaults, validation, JSON loading."""

import json
from dataclasses import asdict, dataclass, fields

from fieldcast.errors import ConfigError


@dataclass
class PipelineConfig:
    """All tunables of the fitting and evaluation pipeline.

    Defaults reproduce the standard setup: the lower-48 rectangle with 13
    interior knots per axis, 20 spatial basis functions, and 6-day-ahead
    horizon.
    """

    horizon: int = 6
    lon_min: float = -124.0
    lon_max: float = -66.0
    lat_min: float = 24.0
    lat_max: float = 49.0
    n_interior_lon: int = 13
    n_interior_lat: int = 13
    svd_rtol: float = 1e-3
    min_obs_per_day: int = 10
    k: int = 20
    seed: int = 0
    mode: str = "filtered"
    correlation_mode: str = "pairwise"
    min_pair_days: int = 30
    min_train_days: int = 100
    refit_every: int = 30

    def validate(self) -> None:
        if not 0 <= self.horizon <= 6:
            raise ConfigError(f"horizon must be in 0..6, got {self.horizon}")
        if self.lon_max <= self.lon_min or self.lat_max <= self.lat_min:
            raise ConfigError("domain rectangle is empty")
        if self.n_interior_lon < 0 or self.n_interior_lat < 0:
            raise ConfigError("interior knot counts must be nonnegative")
        if not 0 < self.svd_rtol < 1:
            raise ConfigError(f"svd_rtol must be in (0, 1), got {self.svd_rtol}")
        if self.min_obs_per_day < 1:
            raise ConfigError("min_obs_per_day must be positive")
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.mode not in ("filtered", "walkforward"):
            raise ConfigError(f"mode must be 'filtered' or 'walkforward', got {self.mode!r}")
        if self.correlation_mode not in ("pairwise", "complete"):
            raise ConfigError("correlation_mode must be 'pairwise' or 'complete'")
        if self.min_pair_days < 3:
            raise ConfigError("min_pair_days must be at least 3")
        if self.min_train_days < 20 or self.refit_every < 1:
            raise ConfigError("invalid walk-forward settings")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)
