"""One-step-ahead prediction, forecast adjustment, and rolling evaluation.

The per-coefficient predictive law one day ahead is a Student-t with
location psi*beta, squared scale omega + alpha*u^2 + gamma*eta^2, and the
fitted degrees of freedom. Predicted error fields combine the mean surface
with the predicted coefficients; the predictive variance at a location adds
the white-noise variance to the basis contribution.

Forecast adjustment subtracts the predicted error from the raw forecast.
The rolling evaluator walks a panel one day at a time, never letting a
prediction see the day it targets; calendar gaps decay the state by
iterating both recursions with the innovation set to zero.
"""

import logging
from dataclasses import dataclass, replace
from datetime import timedelta

import numpy as np
from scipy import stats

from fieldcast.errors import AlignmentError, DomainError
from fieldcast.panel import ObservationPanel
from fieldcast.pca import SpatialBasis, eval_basis
from fieldcast.projection import project_day

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionState:
    """Filtered state after the most recent observed day."""

    date: object
    beta: np.ndarray
    u: np.ndarray
    eta_sq: np.ndarray

    def __post_init__(self):
        if not (len(self.beta) == len(self.u) == len(self.eta_sq)):
            raise ValueError("state vectors must share one length")
        if np.any(np.asarray(self.eta_sq) <= 0):
            raise ValueError("eta_sq entries must be positive")


@dataclass(frozen=True)
class CoefficientPrediction:
    """Per-coefficient one-step-ahead predictive law (Student-t)."""

    location: np.ndarray
    scale_sq: np.ndarray
    nu: np.ndarray

    def interval(self, level: float = 0.90) -> tuple[np.ndarray, np.ndarray]:
        """Central predictive interval at the given coverage level."""
        q = stats.t.ppf(0.5 + level / 2.0, df=self.nu)
        half = q * np.sqrt(self.scale_sq)
        return self.location - half, self.location + half


@dataclass
class AdjustedForecastRecord:
    """One adjusted forecast with its audit trail."""

    date: object
    city_id: str
    raw_forecast: float
    predicted_error: float
    adjusted_forecast: float
    actual: float | None
    raw_error: float | None
    adjusted_error: float | None
    predictive_sd: float


def _params_arrays(garch_fits) -> tuple[np.ndarray, ...]:
    psi = np.array([f.params.psi for f in garch_fits])
    omega = np.array([f.params.omega for f in garch_fits])
    alpha = np.array([f.params.alpha for f in garch_fits])
    gamma = np.array([f.params.gamma for f in garch_fits])
    nu = np.array([f.params.nu for f in garch_fits])
    return psi, omega, alpha, gamma, nu


def predict_coefficients(state: PredictionState, garch_fits) -> CoefficientPrediction:
    """Predictive law for each coefficient one day after the state date."""
    psi, omega, alpha, gamma, nu = _params_arrays(garch_fits)
    if psi.size != state.beta.size:
        raise AlignmentError(f"state has {state.beta.size} coefficients, "
                             f"{psi.size} fitted models")
    scale_sq = omega + alpha * state.u ** 2 + gamma * state.eta_sq
    return CoefficientPrediction(location=psi * state.beta, scale_sq=scale_sq, nu=nu)


def advance_state(state: PredictionState, garch_fits, new_date,
                  new_beta: np.ndarray | None) -> PredictionState:
    """Move the filtered state forward one day.

    With an observed coefficient vector the innovation is the one-step
    surprise. With ``new_beta=None`` (no usable observations that day) both
    recursions are iterated with the innovation pinned to zero: the level
    decays by psi and the scale relaxes toward omega/(1-gamma).
    """
    pred = predict_coefficients(state, garch_fits)
    if new_beta is None:
        return PredictionState(date=new_date, beta=pred.location,
                               u=np.zeros_like(state.u), eta_sq=pred.scale_sq)
    new_beta = np.asarray(new_beta, dtype=np.float64)
    return PredictionState(date=new_date, beta=new_beta,
                           u=new_beta - pred.location, eta_sq=pred.scale_sq)


def predict_error_field(basis: SpatialBasis, garch_fits, sigma2: float,
                        state: PredictionState, lons, lats,
                        design: np.ndarray | None = None,
                        mean_at: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Predicted error and predictive variance at each location.

    The prediction is the mean surface plus the predicted coefficients
    through the basis; the variance at a location is
    sum_k nu_k/(nu_k-2) * scale_sq_k * phi_k^2 plus the white-noise sigma2.

    Raises ``DomainError`` for locations outside the basis domain.
    """
    pred = predict_coefficients(state, garch_fits)
    if design is None:
        design = eval_basis(basis, lons, lats)
    if mean_at is None:
        mean_at = basis.mean.evaluate(basis.spline, np.asarray(lons), np.asarray(lats))
    yhat = mean_at + design @ pred.location
    var_factor = pred.nu / (pred.nu - 2.0)
    variance = (design ** 2) @ (var_factor * pred.scale_sq) + sigma2
    return yhat, variance


def conditional_covariance(basis: SpatialBasis, garch_fits, sigma2: float,
                           state: PredictionState, lons, lats) -> np.ndarray:
    """Full one-step-ahead covariance matrix over a set of locations.

    Off-diagonal entries carry only the basis contribution; the white-noise
    variance enters the diagonal.
    """
    pred = predict_coefficients(state, garch_fits)
    design = eval_basis(basis, lons, lats)
    var_factor = pred.nu / (pred.nu - 2.0)
    cov = (design * (var_factor * pred.scale_sq)) @ design.T
    return cov + sigma2 * np.eye(design.shape[0])


def state_from_fits(date, beta_last: np.ndarray, garch_fits) -> PredictionState:
    """Assemble the state after the last fitted day from per-k filter output."""
    u = np.array([f.innovations[-1] for f in garch_fits])
    eta_sq = np.array([f.cond_scales_sq[-1] for f in garch_fits])
    return PredictionState(date=date, beta=np.asarray(beta_last, dtype=np.float64),
                           u=u, eta_sq=eta_sq)


def adjust_forecasts(predicted_errors: dict, predictive_sds: dict,
                     panel: ObservationPanel) -> list[AdjustedForecastRecord]:
    """Join per-day predicted errors with raw forecasts into adjusted records.

    ``predicted_errors`` maps a date to a vector over the panel's locations
    (and ``predictive_sds`` likewise). Only (day, city) cells with a raw
    forecast present produce records; the adjusted error is filled when the
    actual is also present.

    Raises ``AlignmentError`` when a prediction date is missing from the
    panel or a vector has the wrong length.
    """
    if panel.forecasts is None:
        raise AlignmentError("panel has no raw forecasts to adjust")
    date_index = {d: i for i, d in enumerate(panel.dates)}
    records = []
    for date in sorted(predicted_errors):
        if date not in date_index:
            raise AlignmentError(f"prediction date {date} not present in the panel")
        yhat = np.asarray(predicted_errors[date], dtype=np.float64)
        sds = np.asarray(predictive_sds[date], dtype=np.float64)
        if yhat.size != panel.n_locations or sds.size != panel.n_locations:
            raise AlignmentError(f"prediction vector for {date} has wrong length")
        i = date_index[date]
        for j, loc in enumerate(panel.locations):
            raw = panel.forecasts[i, j]
            if not np.isfinite(raw):
                continue
            actual = panel.actuals[i, j] if panel.actuals is not None else np.nan
            adjusted = raw - yhat[j]
            has_actual = np.isfinite(actual)
            records.append(AdjustedForecastRecord(
                date=date, city_id=loc.city_id,
                raw_forecast=float(raw),
                predicted_error=float(yhat[j]),
                adjusted_forecast=float(adjusted),
                actual=float(actual) if has_actual else None,
                raw_error=float(raw - actual) if has_actual else None,
                adjusted_error=float(adjusted - actual) if has_actual else None,
                predictive_sd=float(sds[j]),
            ))
    return records


def summarize_records(records) -> dict:
    """Mean and standard deviation of raw and adjusted errors."""
    raw = np.array([r.raw_error for r in records if r.raw_error is not None])
    adj = np.array([r.adjusted_error for r in records if r.adjusted_error is not None])
    def _stats(x):
        if x.size == 0:
            return {"n": 0, "mean": None, "sd": None}
        return {"n": int(x.size), "mean": float(x.mean()),
                "sd": float(x.std(ddof=1)) if x.size > 1 else None}
    out = {"raw_error": _stats(raw), "adjusted_error": _stats(adj)}
    if raw.size > 1 and adj.size > 1:
        out["sd_reduction_fraction"] = 1.0 - out["adjusted_error"]["sd"] / out["raw_error"]["sd"]
    return out


def evaluate_panel(model, panel: ObservationPanel, *, mode: str = "filtered",
                   min_obs: int = 1, min_train_days: int = 100,
                   refit_every: int = 30) -> tuple[list[AdjustedForecastRecord], dict]:
    """Rolling one-step-ahead evaluation of a fitted model over a panel.

    Each panel day beyond the first is predicted from the state built on
    strictly earlier days. ``filtered`` mode uses the model's parameters as
    fitted (once, on the model's own training series); ``walkforward``
    refits the per-coefficient AR+GARCH parameters on an expanding window of
    the evaluation panel's own coefficients, starting after
    ``min_train_days`` days and refreshing every ``refit_every`` days.

    Returns the adjusted records and their summary.
    """
    from fieldcast import argarch

    if mode not in ("filtered", "walkforward"):
        raise ValueError(f"unknown mode {mode!r}")
    basis = model.spatial
    lons, lats = panel.lons, panel.lats
    if not np.all(basis.spline.contains(lons, lats)):
        raise DomainError("panel contains locations outside the basis domain")
    design = eval_basis(basis, lons, lats)
    mean_at = basis.mean.evaluate(basis.spline, lons, lats)

    # Project every usable day once; prediction consumes them in date order.
    betas: dict = {}
    for i, date in enumerate(panel.dates):
        try:
            beta, _, _ = project_day(basis, lons, lats, panel.errors[i],
                                     min_obs=min_obs, design=design, mean_at=mean_at)
        except Exception as exc:  # skipped day: state will coast through it
            logger.debug("projection skipped for %s: %s", date, exc)
            continue
        betas[date] = beta

    fits = list(model.garch_fits)
    k = basis.k
    first = panel.dates[0]
    beta0 = betas.get(first)
    eta0 = np.array([f.params.stationary_scale_sq() for f in fits])
    state = PredictionState(date=first,
                            beta=beta0 if beta0 is not None else np.zeros(k),
                            u=np.zeros(k), eta_sq=eta0)

    predicted: dict = {}
    sds: dict = {}
    beta_history = [betas[first]] if beta0 is not None else []
    last_refit = 0
    for idx in range(1, len(panel.dates)):
        date = panel.dates[idx]
        if mode == "walkforward" and len(beta_history) >= min_train_days \
                and len(beta_history) - last_refit >= refit_every:
            hist = np.vstack(beta_history)
            refitted = []
            for col in range(k):
                try:
                    refitted.append(argarch.fit(hist[:, col]))
                except Exception as exc:
                    logger.warning("walk-forward refit failed for component %d: %s", col, exc)
                    refitted.append(fits[col])
            fits = refitted
            last_refit = len(beta_history)
        # Calendar gaps between consecutive panel days decay the state.
        gap = (date - state.date).days - 1 if hasattr(date, "toordinal") else 0
        for g in range(max(gap, 0)):
            state = advance_state(state, fits, state.date + timedelta(days=1), None)
        if mode == "filtered" or len(beta_history) >= min_train_days:
            yhat, var = predict_error_field(basis, fits, model.sigma2, state,
                                            lons, lats, design=design, mean_at=mean_at)
            predicted[date] = yhat
            sds[date] = np.sqrt(var)
        new_beta = betas.get(date)
        state = advance_state(state, fits, date, new_beta)
        if new_beta is not None:
            beta_history.append(new_beta)

    records = adjust_forecasts(predicted, sds, panel)
    summary = summarize_records(records)
    summary["mode"] = mode
    summary["k"] = k
    return records, summary
