"""Threshold-driven estimation of the two-factor spot model from spot and futures data.

For every threshold u* the futures quotes with time to maturity u >= u* are
treated as observations of the long-term factor:

    F(t, T1, T2) - mean Lambda over [T1, T2)  ~  C + u E_Q[Z(1)] + Z(t).

A pooled robust regression gives C and E_Q[Z(1)], the quote residuals give
Z(t), and Y = S - Lambda - Z is fitted as a stable CARMA(2,1) process.  The
threshold whose theoretical and empirical risk-premium curves agree best wins.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .carma import (
    CarmaParams,
    ar_from_arma_roots,
    burn_in_steps,
    check_stationarity,
    empirical_acf,
    estimate_arma_ar,
    estimate_ma_b,
    fit_embedded_ar,
    map_epsilon_to_L,
    recover_noise,
)
from .errors import CarmaSpotError, DataError, DomainError, EstimationError, InfeasibleError
from .filtering import FilterRun, l1_filter
from .market import MarketData
from .nig import NigParams, fit_nig_zero_mean, solve_theta_Z
from .pricing import (
    MeasureChange,
    empirical_premium_curve,
    empirical_premium_terms,
    risk_premium_error,
    stationary_gain,
    theoretical_risk_premium,
)
from .seasonality import SeasonalityParams, fit_seasonality, robust_linear_fit, seasonal_average
from .stable import StableParams, estimate_stable, solve_theta_L

log = logging.getLogger(__name__)

MA_B0_MAX = 1e3  # upper end of the b0 search grid in estimate_ma_b

__all__ = [
    "CalibrationConfig",
    "PreparedData",
    "ThresholdBundle",
    "CalibrationResult",
    "prepare",
    "regress_futures_longend",
    "filter_Z",
    "z_increments",
    "estimate_all",
    "calibrate_threshold",
]

MODE_DEFAULTS = {
    # average delivery length (days per month on the mode's index) and longest maturity
    "base": {"v": 1461 / 48, "M_f": 200},
    "peak": {"v": 1045 / 48, "M_f": 144},
}


@dataclass(frozen=True)
class CalibrationConfig:
    mode: str = "base"
    v: float | None = None
    M_f: int | None = None
    u_star_min: int | None = None
    u_star_max: int | None = None
    h: float = 1.0
    seed: int = 0
    rng_streams: int = 1
    stable_method: str = "quantile"  # used inside the threshold sweep
    final_stable_method: str = "ml"  # used to refit the winning threshold
    regression_method: str = "huber"
    seasonality_method: str = "huber"
    ma_lags: int = 20
    min_quotes: int = 30

    def __post_init__(self):
        if self.mode not in MODE_DEFAULTS:
            raise DomainError(f"mode must be 'base' or 'peak', got {self.mode!r}")
        d = MODE_DEFAULTS[self.mode]
        v = float(self.v if self.v is not None else d["v"])
        M_f = int(self.M_f if self.M_f is not None else d["M_f"])
        lo = int(self.u_star_min if self.u_star_min is not None else math.ceil(v / 2))
        hi = int(self.u_star_max if self.u_star_max is not None else M_f // 2)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "M_f", M_f)
        object.__setattr__(self, "u_star_min", lo)
        object.__setattr__(self, "u_star_max", hi)
        if v <= 0 or self.h <= 0:
            raise DomainError("v and h must be positive")
        if lo < math.ceil(v / 2):
            raise DomainError(f"u_star_min={lo} below ceil(v/2)={math.ceil(v / 2)}")
        if hi > M_f or hi < lo:
            raise DomainError(f"need ceil(v/2) <= u_star_min <= u_star_max <= M_f, got [{lo}, {hi}] with M_f={M_f}")

    @property
    def thresholds(self) -> np.ndarray:
        return np.arange(self.u_star_min, self.u_star_max + 1)

    @property
    def u_grid(self) -> np.ndarray:
        return np.arange(math.ceil(self.v / 2), self.M_f + 1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class PreparedData:
    """Threshold-independent inputs: index arrays, fitted seasonality, deseasonalized quotes."""

    mode: str
    spot_t: np.ndarray
    spot: np.ndarray
    fut_t: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    u: np.ndarray
    price: np.ndarray
    seasonal_avg: np.ndarray
    f_tilde: np.ndarray
    seasonality: SeasonalityParams
    seasonality_objective: list


@dataclass
class ThresholdBundle:
    u_star: int
    ok: bool = False
    message: str = ""
    stage: str = ""
    C: float = float("nan")
    eq_Z1: float = float("nan")
    n_regression: int = 0
    z: np.ndarray | None = None
    z_filled: np.ndarray | None = None
    y: np.ndarray | None = None
    phi: np.ndarray | None = None
    ar_method: str = ""
    carma: CarmaParams | None = None
    eps_stable: StableParams | None = None
    stable: StableParams | None = None
    eq_L1: float = float("nan")
    filtered: FilterRun | None = None
    burn_in: int = 0
    theoretical: np.ndarray | None = None
    empirical: np.ndarray | None = None
    empirical_sd: np.ndarray | None = None
    counts: np.ndarray | None = None
    error: float = float("inf")
    skipped: int = 0


@dataclass
class CalibrationResult:
    config: CalibrationConfig
    seasonality: SeasonalityParams
    bundles: list
    errors: np.ndarray
    u_star_hat: int
    final: ThresholdBundle
    nig: NigParams | None
    measure_change: MeasureChange | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([b.u_star for b in self.bundles])


def prepare(market: MarketData, config: CalibrationConfig) -> PreparedData:
    if market.mode != config.mode:
        raise DataError(f"market mode {market.mode!r} differs from config mode {config.mode!r}")
    spot_t = market.spot_t
    if np.any(np.diff(spot_t) != 1):
        k = int(np.argmax(np.diff(spot_t) != 1))
        raise DataError(f"spot series has a gap after {market.spot_dates[k]}; a gap-free day grid is required")
    seas, fit = fit_seasonality(spot_t, market.spot_price, config.mode, config.seasonality_method)
    T1, T2 = market.fut_T1, market.fut_T2
    avg = seasonal_average(seas, T1, T2) if T1.size else np.array([])
    return PreparedData(config.mode, spot_t, market.spot_price, market.fut_t, T1, T2, market.fut_u,
                        market.futures_price, avg, market.futures_price - avg, seas, fit.objective)


def regress_futures_longend(u, f_tilde, u_star: float, method: str = "huber", min_quotes: int = 30):
    """Robust regression of deseasonalized prices on time to maturity for u >= u*.

    Returns (C, E_Q[Z(1)], number of quotes used).
    """
    u = np.asarray(u, dtype=float)
    f_tilde = np.asarray(f_tilde, dtype=float)
    sel = u >= u_star
    n = int(sel.sum())
    if n < min_quotes:
        raise EstimationError(f"only {n} quotes with u >= {u_star}; need {min_quotes}", {"u_star": u_star})
    X = np.column_stack([np.ones(n), u[sel]])
    fit = robust_linear_fit(X, f_tilde[sel], method=method)
    return float(fit.coef[0]), float(fit.coef[1]), n


def filter_Z(n_days: int, fut_t, u, f_tilde, C: float, eq_Z1: float, u_star: float):
    """Z(t) as the mean of F~ - C - u E_Q[Z(1)] over the day's quotes with u >= u*.

    Days without such quotes (weekends in base mode, holidays, gaps) carry the
    last available value and are flagged; days before the first quote take the
    first value.  Returns (z, filled_mask).
    """
    fut_t = np.asarray(fut_t, dtype=int)
    u = np.asarray(u, dtype=float)
    sel = (u >= u_star) & (fut_t >= 0) & (fut_t < n_days)
    if not np.any(sel):
        raise EstimationError(f"Z is undefined: no quotes with u >= {u_star} inside the spot range")
    resid = np.asarray(f_tilde, dtype=float)[sel] - C - u[sel] * eq_Z1
    cnt = np.bincount(fut_t[sel], minlength=n_days)
    tot = np.bincount(fut_t[sel], weights=resid, minlength=n_days)
    observed = cnt > 0
    z = np.full(n_days, np.nan)
    z[observed] = tot[observed] / cnt[observed]
    # forward fill, then back fill the leading stretch
    idx = np.where(observed, np.arange(n_days), -1)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmax(observed))
    idx[idx < 0] = first
    return z[idx], ~observed


def z_increments(z, filled) -> np.ndarray:
    """One-step increments of Z between consecutive observed days (filled days excluded)."""
    z = np.asarray(z, dtype=float)
    obs = ~np.asarray(filled, dtype=bool)
    both = obs[1:] & obs[:-1]
    return np.diff(z)[both]


def _fit_ar(y, h):
    """AR part of the CARMA(2,1) fit: instrumental variables, then least squares,
    then least squares restricted to embeddable roots.  Returns (phi, a, method)."""
    errors = []
    for method in ("iv", "ols"):
        try:
            phi = estimate_arma_ar(y, 2, method=method)
            return phi, ar_from_arma_roots(phi, h)[1], method
        except EstimationError as exc:
            # short samples can put a root inside the unit circle or on the negative axis
            errors.append(f"{method}: {exc}")
    try:
        phi = fit_embedded_ar(y, 2, h)
        return phi, ar_from_arma_roots(phi, h)[1], "ols-embedded"
    except EstimationError as exc:
        errors.append(f"ols-embedded: {exc}")
    raise EstimationError("no AR estimate has a CARMA embedding; " + "; ".join(errors))


def _fail(bundle, stage, exc):
    bundle.ok = False
    bundle.stage = stage
    bundle.message = f"{type(exc).__name__}: {exc}"
    return bundle


def estimate_all(data: PreparedData, u_star: int, config: CalibrationConfig,
                 stable_method: str | None = None) -> ThresholdBundle:
    """Run every estimation stage for one threshold; failures are recorded, not raised."""
    b = ThresholdBundle(int(u_star))
    stage = "regression"
    try:
        b.C, b.eq_Z1, b.n_regression = regress_futures_longend(
            data.u, data.f_tilde, u_star, config.regression_method, config.min_quotes)
        stage = "filter_Z"
        n = data.spot_t.size
        b.z, b.z_filled = filter_Z(n, data.fut_t, data.u, data.f_tilde, b.C, b.eq_Z1, u_star)
        b.y = data.spot - data.seasonality(data.spot_t) - b.z

        stage = "carma"
        b.phi, a, b.ar_method = _fit_ar(b.y, config.h)
        bvec = estimate_ma_b(a, empirical_acf(b.y, config.ma_lags), 1, config.h)
        b.carma = CarmaParams(a, bvec)
        report = check_stationarity(b.carma)
        if not report:
            raise EstimationError("recovered CARMA parameters are not stationary: " + "; ".join(report.reasons))

        stage = "stable"
        eps = recover_noise(b.y, report.eigenvalues, config.h)
        b.eps_stable = estimate_stable(eps.eps, method=stable_method or config.stable_method)
        b.stable = map_epsilon_to_L(b.eps_stable, b.carma, config.h)

        stage = "states"
        gain = stationary_gain(b.carma)
        b.eq_L1 = b.C / gain
        b.filtered = l1_filter(b.y, b.carma, config.h)
        b.burn_in = burn_in_steps(b.carma, config.h)

        stage = "premium"
        grid = config.u_grid
        b.theoretical = np.asarray(theoretical_risk_premium(
            grid.astype(float), config.v, b.carma, b.eq_L1 - b.stable.mu, b.eq_Z1))
        use = (data.fut_t >= b.burn_in) & (data.fut_t < n)
        t = data.fut_t[use]
        terms = empirical_premium_terms(
            data.price[use], data.seasonal_avg[use], b.filtered.states[t], b.z[t], t,
            data.T1[use], data.T2[use], b.carma, b.stable.mu)
        b.empirical, b.empirical_sd, b.counts = empirical_premium_curve(grid, data.u[use], terms)
        b.error, b.skipped = risk_premium_error(b.empirical, b.theoretical)
        if b.skipped == grid.size:
            raise EstimationError("no maturity has both an empirical and a theoretical premium")
        b.ok = True
        b.stage = "done"
    except (CarmaSpotError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.info("threshold %s failed at %s: %s", u_star, stage, exc)
        return _fail(b, stage, exc)
    return b


def calibrate_threshold(market: MarketData, config: CalibrationConfig, progress=None) -> CalibrationResult:
    """Sweep all thresholds, pick the minimal premium error (ties to the smaller u*),
    refit the winner and assemble the measure change."""
    data = prepare(market, config)
    bundles = []
    for u_star in config.thresholds:
        bundles.append(estimate_all(data, int(u_star), config))
        if progress is not None:
            progress(bundles[-1])
    errors = np.array([bd.error if bd.ok else np.inf for bd in bundles])
    if not np.any(np.isfinite(errors)):
        diag = {bd.u_star: f"{bd.stage}: {bd.message}" for bd in bundles}
        raise EstimationError("every threshold failed", diag)
    k = int(np.argmin(errors))  # first minimum = smallest threshold among ties
    u_hat = bundles[k].u_star
    final = bundles[k]
    if config.final_stable_method != config.stable_method:
        refit = estimate_all(data, u_hat, config, stable_method=config.final_stable_method)
        if refit.ok:
            final = refit
    diagnostics = {
        "failed_thresholds": {bd.u_star: f"{bd.stage}: {bd.message}" for bd in bundles if not bd.ok},
        "seasonality_objective": data.seasonality_objective,
        "n_quotes": int(data.u.size),
        "ar_method": final.ar_method,
    }
    flags = []
    if final.ar_method != "iv":
        flags.append(f"AR part estimated by fallback method {final.ar_method!r}")
    lam = check_stationarity(final.carma).eigenvalues
    if np.any(np.abs(lam.real) >= 0.999 * 20.0 / config.h) or np.any(np.abs(lam.real) <= 1.001e-3 / config.h):
        flags.append("an eigenvalue sits on the bound of the embedded AR fit")
    if final.carma.b[0] >= 0.999 * MA_B0_MAX or final.carma.b[0] <= 0.0:
        flags.append(f"MA coefficient b0 = {final.carma.b[0]:.6g} sits on its search bound")
    if flags:
        diagnostics["boundary"] = flags
        for f in flags:
            log.warning("u*=%d: %s", u_hat, f)

    nig = mc = None
    theta_Z = theta_L = float("nan")
    try:
        nig = fit_nig_zero_mean(z_increments(final.z, final.z_filled))
        theta_Z = solve_theta_Z(nig, final.eq_Z1)
    except (EstimationError, InfeasibleError, DomainError) as exc:
        diagnostics["theta_Z"] = f"{type(exc).__name__}: {exc}"
    try:
        theta_L = solve_theta_L(final.stable, final.eq_L1 - final.stable.mu)
    except (InfeasibleError, DomainError) as exc:
        diagnostics["theta_L"] = f"{type(exc).__name__}: {exc}"
    mc = MeasureChange.assemble(final.carma, theta_Z, theta_L, final.eq_Z1, final.eq_L1)
    return CalibrationResult(config, data.seasonality, bundles, errors, u_hat, final, nig, mc, diagnostics)


def with_overrides(config: CalibrationConfig, **kw) -> CalibrationConfig:
    return replace(config, **kw)
