"""AR(1)+GARCH(1,1) with Student-t innovations for one coefficient series.

Model for a series b_t:

    b_t = psi * b_{t-1} + u_t,      u_t | past ~ t_nu(0, eta_t^2)
    eta_t^2 = omega + alpha * u_{t-1}^2 + gamma * eta_{t-1}^2

eta_t is the scale of the Student-t, so the conditional variance of u_t is
nu/(nu-2) * eta_t^2. The filter initializes u_1 = b_1 (presample b_0 = 0)
and eta_1^2 at the scale implied by the sample variance of the filtered
innovations; for a degenerate (zero-variance) series it uses the u = 0
fixed point omega/(1-gamma).

Maximum likelihood runs in an unconstrained parameterization

    psi = tanh(a),  omega = exp(b),
    alpha = e^c / (1 + e^c + e^d),  gamma = e^d / (1 + e^c + e^d),
    nu = 2 + exp(e)

so the stationarity and positivity constraints hold by construction. A
Nelder-Mead search from a few deterministic starts is polished by BFGS.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.special import gammaln

from fieldcast import _backend
from fieldcast.errors import DegenerateSeriesError, InsufficientDataError
from fieldcast.errors import FitWarning

logger = logging.getLogger(__name__)

PARAM_NAMES = ("psi", "omega", "alpha", "gamma", "nu")

MIN_SERIES_LENGTH = 20
RECOMMENDED_SERIES_LENGTH = 100


@dataclass(frozen=True)
class GarchParams:
    """Parameters of one AR(1)+GARCH(1,1)-t model."""

    psi: float
    omega: float
    alpha: float
    gamma: float
    nu: float

    def validate(self) -> None:
        if not abs(self.psi) < 1:
            raise ValueError(f"|psi| must be < 1, got {self.psi}")
        if not self.omega > 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be nonnegative")
        if not self.alpha + self.gamma < 1:
            raise ValueError(f"alpha + gamma must be < 1, got {self.alpha + self.gamma}")
        if not self.nu > 2:
            raise ValueError(f"nu must be > 2, got {self.nu}")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except ValueError:
            return False
        return True

    def to_array(self) -> np.ndarray:
        return np.array([self.psi, self.omega, self.alpha, self.gamma, self.nu])

    @classmethod
    def from_array(cls, x) -> "GarchParams":
        return cls(*(float(v) for v in x))

    @property
    def variance_factor(self) -> float:
        """nu/(nu-2): conditional variance per unit squared scale."""
        return self.nu / (self.nu - 2.0)

    def stationary_scale_sq(self) -> float:
        """Unconditional mean of eta^2, or the u=0 fixed point if infinite."""
        denom = 1.0 - self.alpha * self.variance_factor - self.gamma
        if denom > 0:
            return self.omega / denom
        return self.omega / (1.0 - self.gamma)


@dataclass
class GarchFit:
    """A fitted model: estimates, uncertainty, filtered states, diagnostics."""

    params: GarchParams
    std_errors: dict
    t_ratios: dict
    p_values: dict
    innovations: np.ndarray
    cond_scales_sq: np.ndarray
    log_likelihood: float
    n_obs: int
    converged: bool
    boundary_flags: list = field(default_factory=list)
    gradient_norm: float = float("nan")
    optimizer_message: str = ""


def _innovations(params: GarchParams, series: np.ndarray) -> np.ndarray:
    u = np.empty_like(series)
    u[0] = series[0]
    u[1:] = series[1:] - params.psi * series[:-1]
    return u


def _initial_scale_sq(params: GarchParams, u: np.ndarray) -> float:
    v = float(np.var(u[1:])) if u.size > 1 else 0.0
    if v > 0.0:
        return v * (params.nu - 2.0) / params.nu
    return params.omega / (1.0 - params.gamma)


def filter_series(params: GarchParams, series) -> tuple[np.ndarray, np.ndarray]:
    """Run the innovation and conditional-scale recursions over a series.

    Returns ``(u, eta2)``, both aligned with the series. Deterministic given
    the initialization described in the module docstring.
    """
    params.validate()
    series = np.asarray(series, dtype=np.float64)
    u = _innovations(params, series)
    eta1_sq = _initial_scale_sq(params, u)
    drive = params.omega + params.alpha * u[:-1] ** 2
    eta2 = _backend.kernels.eta2_recursion(drive, params.gamma, eta1_sq)
    return u, eta2


def neg_log_likelihood(params: GarchParams, series) -> float:
    """Negative log likelihood of the series under the model.

    Sums the conditional log density of a location-scale Student-t over
    t >= 2; the first observation only seeds the recursions. Raises
    ``ValueError`` for invalid parameters and ``InsufficientDataError`` for
    series shorter than 20.
    """
    params.validate()
    series = np.asarray(series, dtype=np.float64)
    if series.size < MIN_SERIES_LENGTH:
        raise InsufficientDataError(
            f"series length {series.size} < {MIN_SERIES_LENGTH}")
    return _nll(params, series)


def _nll(params: GarchParams, series: np.ndarray) -> float:
    u, eta2 = filter_series(params, series)
    u2 = u[1:] ** 2
    e2 = eta2[1:]
    if np.any(e2 <= 0) or not np.all(np.isfinite(e2)):
        return np.inf
    nu = params.nu
    n = u2.size
    const = gammaln((nu + 1.0) / 2.0) - gammaln(nu / 2.0) - 0.5 * np.log(np.pi * nu)
    ll = n * const - 0.5 * np.sum(np.log(e2)) \
        - 0.5 * (nu + 1.0) * np.sum(np.log1p(u2 / (nu * e2)))
    if not np.isfinite(ll):
        return np.inf
    return -ll


def _to_unconstrained(params: GarchParams) -> np.ndarray:
    slack = 1.0 - params.alpha - params.gamma
    return np.array([
        np.arctanh(params.psi),
        np.log(params.omega),
        np.log(params.alpha / slack) if params.alpha > 0 else -30.0,
        np.log(params.gamma / slack) if params.gamma > 0 else -30.0,
        np.log(params.nu - 2.0),
    ])


def _from_unconstrained(theta: np.ndarray) -> GarchParams:
    a, b, c, d, e = theta
    ec = np.exp(min(c, 30.0))
    ed = np.exp(min(d, 30.0))
    denom = 1.0 + ec + ed
    return GarchParams(
        psi=float(np.tanh(a)),
        omega=float(np.exp(np.clip(b, -300.0, 300.0))),
        alpha=float(ec / denom),
        gamma=float(ed / denom),
        nu=float(2.0 + np.exp(np.clip(e, -30.0, 30.0))),
    )


def _start_points(series: np.ndarray) -> list[np.ndarray]:
    x = series - series.mean()
    denom = float(np.dot(x, x))
    psi0 = float(np.dot(x[1:], x[:-1]) / denom) if denom > 0 else 0.0
    psi0 = float(np.clip(psi0, -0.95, 0.95))
    u = series[1:] - psi0 * series[:-1]
    v = max(float(np.var(u)), 1e-8)
    nu0 = 8.0
    f0 = nu0 / (nu0 - 2.0)
    starts = []
    for alpha0, gamma0 in [(0.05, 0.90), (0.10, 0.80), (0.02, 0.50)]:
        omega0 = (v / f0) * max(1.0 - alpha0 * f0 - gamma0, 0.01)
        starts.append(_to_unconstrained(
            GarchParams(psi0, omega0, alpha0, gamma0, nu0)))
    return starts


def _fd_gradient(fun, x: np.ndarray, f0: float) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        h = 1e-6 * max(abs(x[i]), 1.0)
        xp = x.copy()
        xp[i] += h
        g[i] = (fun(xp) - f0) / h
    return g


def _fd_hessian(fun, x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    n = x.size
    h = np.diag(steps)
    hess = np.full((n, n), np.nan)
    f0 = fun(x)
    with np.errstate(invalid="ignore", over="ignore"):
        for i in range(n):
            fp = fun(x + h[i])
            fm = fun(x - h[i])
            hess[i, i] = (fp - 2.0 * f0 + fm) / steps[i] ** 2
        for i in range(n):
            for j in range(i + 1, n):
                fpp = fun(x + h[i] + h[j])
                fpm = fun(x + h[i] - h[j])
                fmp = fun(x - h[i] + h[j])
                fmm = fun(x - h[i] - h[j])
                hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j])
    return hess


def _std_errors(series: np.ndarray, params: GarchParams) -> np.ndarray:
    """Approximate standard errors from a finite-difference Hessian of the
    negative log likelihood in the original parameterization."""
    x = params.to_array()

    def nll_of(arr: np.ndarray) -> float:
        p = GarchParams.from_array(arr)
        if not p.is_valid():
            return np.inf
        return _nll(p, series)

    # Step sizes respect the distance to the nearest constraint boundary.
    typ = np.array([0.1, max(abs(x[1]), 1e-6), 0.05, 0.1, 1.0])
    steps = 6e-5 * np.maximum(np.abs(x), typ)
    slack = 1.0 - x[2] - x[3]
    bound_dist = np.array([1.0 - abs(x[0]), x[1], min(x[2], slack) if x[2] > 0 else slack,
                           min(x[3], slack), x[4] - 2.0])
    steps = np.minimum(steps, 0.45 * np.maximum(bound_dist, 1e-12))

    hess = _fd_hessian(nll_of, x, steps)
    se = np.full(x.size, np.nan)
    if np.all(np.isfinite(hess)):
        try:
            cov = np.linalg.inv(hess)
            diag = np.diag(cov)
            ok = diag > 0
            se[ok] = np.sqrt(diag[ok])
        except np.linalg.LinAlgError:
            pass
    return se


def fit(series, *, extra_starts: list[GarchParams] | None = None) -> GarchFit:
    """Fit the model to a series by constrained maximum likelihood.

    Deterministic for a fixed series: the optimizer runs Nelder-Mead from a
    fixed list of starting points and polishes the best with BFGS. Standard
    errors come from the inverse finite-difference Hessian at the optimum;
    t-ratios and two-sided p-values use the normal approximation.

    Raises
    ------
    InsufficientDataError
        For series shorter than 20 observations.
    DegenerateSeriesError
        For a constant series.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.size < MIN_SERIES_LENGTH:
        raise InsufficientDataError(
            f"series length {series.size} < {MIN_SERIES_LENGTH}")
    if np.var(series) == 0.0:
        raise DegenerateSeriesError("cannot fit a constant series")
    if series.size < RECOMMENDED_SERIES_LENGTH:
        warnings.warn(f"series length {series.size} below the recommended "
                      f"{RECOMMENDED_SERIES_LENGTH}; estimates may be unstable",
                      FitWarning, stacklevel=2)

    def objective(theta: np.ndarray) -> float:
        val = _nll(_from_unconstrained(theta), series)
        return val if np.isfinite(val) else 1e300

    starts = _start_points(series)
    if extra_starts:
        starts = starts + [_to_unconstrained(p) for p in extra_starts]

    best = None
    for theta0 in starts:
        res = optimize.minimize(objective, theta0, method="Nelder-Mead",
                                options={"maxfev": 4000, "xatol": 1e-6, "fatol": 1e-8})
        if best is None or res.fun < best.fun:
            best = res
    polish = optimize.minimize(objective, best.x, method="BFGS",
                               options={"maxiter": 500, "gtol": 1e-7})
    if polish.fun <= best.fun:
        best = polish

    params = _from_unconstrained(best.x)
    nll_val = float(best.fun)
    grad = _fd_gradient(objective, best.x, nll_val)
    grad_norm = float(np.max(np.abs(grad)) / max(1.0, abs(nll_val)))
    converged = grad_norm < 1e-4
    if not converged:
        warnings.warn(f"optimizer did not reach a stationary point "
                      f"(relative gradient norm {grad_norm:.2e})", FitWarning, stacklevel=2)

    flags = []
    if abs(params.psi) > 0.999:
        flags.append("psi near unit root")
    if params.alpha < 1e-6:
        flags.append("alpha at zero boundary")
    if params.gamma < 1e-6:
        flags.append("gamma at zero boundary")
    if params.alpha + params.gamma > 0.9995:
        flags.append("alpha + gamma near one")
    if params.nu < 2.01:
        flags.append("nu near two")

    se = _std_errors(series, params)
    est = params.to_array()
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ratios = est / se
    p_values = 2.0 * stats.norm.sf(np.abs(t_ratios))

    u, eta2 = filter_series(params, series)
    return GarchFit(
        params=params,
        std_errors=dict(zip(PARAM_NAMES, se.tolist())),
        t_ratios=dict(zip(PARAM_NAMES, t_ratios.tolist())),
        p_values=dict(zip(PARAM_NAMES, p_values.tolist())),
        innovations=u,
        cond_scales_sq=eta2,
        log_likelihood=-nll_val,
        n_obs=int(series.size),
        converged=converged,
        boundary_flags=flags,
        gradient_norm=grad_norm,
        optimizer_message=str(best.message),
    )


def simulate(params: GarchParams, n: int, *, seed=None, beta0: float = 0.0,
             eta1_sq: float | None = None, burn: int = 0,
             return_states: bool = False):
    """Simulate a path of length ``n``; reproducible for a fixed seed.

    Innovations are eta_t times a raw Student-t(nu) draw. The recursion
    starts at the unconditional scale unless ``eta1_sq`` is given. ``burn``
    extra steps are simulated and discarded from the front.
    """
    params.validate()
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if eta1_sq is None:
        eta1_sq = params.stationary_scale_sq()
    eps = rng.standard_t(params.nu, size=n + burn)
    beta, u, eta2 = _backend.kernels.argarch_simulate_core(
        eps, params.psi, params.omega, params.alpha, params.gamma,
        float(eta1_sq), float(beta0))
    if burn:
        beta, u, eta2 = beta[burn:], u[burn:], eta2[burn:]
    if return_states:
        return beta, u, eta2
    return beta


@dataclass
class AcfResult:
    """Sample autocorrelations with a flat 95 percent band."""

    lags: np.ndarray
    values: np.ndarray
    conf_band: float


def acf(series, max_lag: int) -> AcfResult:
    """Sample autocorrelation function for lags 1..max_lag.

    The band is the usual +-1.96/sqrt(T). Raises ``DegenerateSeriesError``
    for a constant series and ``ValueError`` if the series is not longer
    than ``max_lag``.
    """
    series = np.asarray(series, dtype=np.float64)
    t = series.size
    if t <= max_lag:
        raise ValueError(f"series length {t} must exceed max_lag {max_lag}")
    x = series - series.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise DegenerateSeriesError("autocorrelation of a constant series")
    vals = np.array([np.dot(x[lag:], x[:-lag]) / denom for lag in range(1, max_lag + 1)])
    return AcfResult(lags=np.arange(1, max_lag + 1), values=vals,
                     conf_band=1.96 / np.sqrt(t))
