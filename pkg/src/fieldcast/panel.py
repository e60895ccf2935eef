"""Observation panels and the canonical delimited input format.

The canonical table has one row per (date, city, horizon):

    date,city_id,city_name,longitude,latitude,horizon_days,forecast_F,actual_F

Dates are ISO-8601, temperatures are in degrees Fahrenheit, and missing
forecasts or actuals are empty fields. The error is forecast minus actual.
"""

import csv
import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date as Date
from datetime import timedelta

import numpy as np

from fieldcast.errors import IngestError

logger = logging.getLogger(__name__)

COLUMNS = ["date", "city_id", "city_name", "longitude", "latitude",
           "horizon_days", "forecast_F", "actual_F"]


@dataclass(frozen=True)
class Location:
    """A forecast location."""

    city_id: str
    name: str
    lon: float
    lat: float


@dataclass
class ObservationPanel:
    """Per-day, per-location forecast errors for one fixed horizon.

    ``errors[t, i]`` is the error of the day ``dates[t]`` forecast at
    ``locations[i]``; NaN marks a missing entry. ``forecasts`` and
    ``actuals`` are retained when the panel came from raw data, so adjusted
    forecasts can be produced later.
    """

    dates: list
    locations: list
    errors: np.ndarray
    horizon: int
    forecasts: np.ndarray | None = None
    actuals: np.ndarray | None = None
    rejected_rows: list = field(default_factory=list)

    def __post_init__(self):
        m, n = self.errors.shape
        if len(self.dates) != m or len(self.locations) != n:
            raise ValueError("errors shape does not match dates x locations")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def lons(self) -> np.ndarray:
        return np.array([loc.lon for loc in self.locations])

    @property
    def lats(self) -> np.ndarray:
        return np.array([loc.lat for loc in self.locations])

    @property
    def n_obs_per_day(self) -> np.ndarray:
        return np.isfinite(self.errors).sum(axis=1)

    def fingerprint(self) -> str:
        """SHA-256 over the panel content; stable across runs."""
        h = hashlib.sha256()
        h.update(str(self.horizon).encode())
        for d in self.dates:
            h.update(d.isoformat().encode())
        for loc in self.locations:
            h.update(f"{loc.city_id},{loc.name},{loc.lon!r},{loc.lat!r}".encode())
        h.update(np.ascontiguousarray(self.errors).tobytes())
        return h.hexdigest()


def _parse_row(row: dict, lineno: int):
    try:
        d = Date.fromisoformat(row["date"].strip())
        horizon = int(row["horizon_days"])
        lon = float(row["longitude"])
        lat = float(row["latitude"])
        city_id = row["city_id"].strip()
        name = row.get("city_name", "").strip()
        fc_raw = row.get("forecast_F", "").strip()
        ac_raw = row.get("actual_F", "").strip()
        forecast = float(fc_raw) if fc_raw else np.nan
        actual = float(ac_raw) if ac_raw else np.nan
        if not city_id:
            raise ValueError("empty city_id")
    except (KeyError, ValueError, TypeError) as exc:
        raise IngestError(f"line {lineno}: malformed row ({exc})") from exc
    return d, horizon, city_id, name, lon, lat, forecast, actual


def ingest(path, horizon: int, *, strict: bool = False) -> ObservationPanel:
    """Read the canonical table and build the error panel for one horizon.

    Rows with unparseable values are rejected and reported (collected on
    ``panel.rejected_rows``, or raised immediately when ``strict=True``).
    Duplicate (date, city) rows for the horizon are resolved last-wins with
    a warning.

    Raises
    ------
    IngestError
        For an out-of-range horizon, an unreadable header, no usable rows
        for the horizon, or (in strict mode) the first malformed row.
    """
    if not 0 <= horizon <= 6:
        raise IngestError(f"unknown horizon {horizon}; expected 0..6")
    rejected = []
    cells: dict[tuple, tuple] = {}
    locations: dict[str, Location] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "date" not in reader.fieldnames:
            raise IngestError(f"{path}: missing or unreadable header row")
        for lineno, row in enumerate(reader, start=2):
            try:
                d, h, city_id, name, lon, lat, fc, ac = _parse_row(row, lineno)
            except IngestError as exc:
                if strict:
                    raise
                rejected.append((lineno, str(exc)))
                continue
            if h != horizon:
                continue
            loc = Location(city_id, name, lon, lat)
            prev = locations.get(city_id)
            if prev is not None and (prev.lon != lon or prev.lat != lat):
                logger.warning("city %s moved from (%s, %s) to (%s, %s); keeping the last",
                               city_id, prev.lon, prev.lat, lon, lat)
            locations[city_id] = loc
            key = (d, city_id)
            if key in cells:
                logger.warning("duplicate row for %s %s at line %d; last wins", d, city_id, lineno)
            cells[key] = (fc, ac)
    if not cells:
        raise IngestError(f"no usable rows for horizon {horizon} in {path}")

    dates = sorted({k[0] for k in cells})
    loc_list = [locations[c] for c in sorted(locations)]
    idx_date = {d: i for i, d in enumerate(dates)}
    idx_city = {loc.city_id: j for j, loc in enumerate(loc_list)}
    m, n = len(dates), len(loc_list)
    forecasts = np.full((m, n), np.nan)
    actuals = np.full((m, n), np.nan)
    for (d, city_id), (fc, ac) in cells.items():
        forecasts[idx_date[d], idx_city[city_id]] = fc
        actuals[idx_date[d], idx_city[city_id]] = ac
    errors = forecasts - actuals
    if rejected:
        logger.warning("rejected %d malformed rows while ingesting %s", len(rejected), path)
    return ObservationPanel(dates=dates, locations=loc_list, errors=errors,
                            horizon=horizon, forecasts=forecasts, actuals=actuals,
                            rejected_rows=rejected)


def write_panel(panel: ObservationPanel, path) -> None:
    """Write a panel in the canonical format (atomically)."""
    forecasts = panel.forecasts
    actuals = panel.actuals
    if forecasts is None or actuals is None:
        # Synthesize a flat actual so that forecast - actual reproduces the error.
        actuals = np.where(np.isfinite(panel.errors), 0.0, np.nan)
        forecasts = panel.errors + actuals
    _atomic_write_rows(path, panel, forecasts, actuals)


def _atomic_write_rows(path, panel, forecasts, actuals) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            for i, d in enumerate(panel.dates):
                for j, loc in enumerate(panel.locations):
                    fc = forecasts[i, j]
                    ac = actuals[i, j]
                    writer.writerow([
                        d.isoformat(), loc.city_id, loc.name,
                        repr(loc.lon), repr(loc.lat), panel.horizon,
                        repr(float(fc)) if np.isfinite(fc) else "",
                        repr(float(ac)) if np.isfinite(ac) else "",
                    ])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def date_range(start: Date, n_days: int) -> list:
    """Consecutive calendar dates starting at ``start``."""
    return [start + timedelta(days=i) for i in range(n_days)]
