"""Futures and swap prices for S = Lambda + Z + Y and the implied risk premia.

Under a pricing measure Q the driver L and the factor Z remain Levy processes
with means E_Q[L(1)] and E_Q[Z(1)].  Conditional expectations of the CARMA part
use

    E_Q[Y(tau) | F_t] = b' e^{A(tau-t)} X(t) + b' A^{-1}(e^{A(tau-t)} - I) e_p E_Q[L(1)],

whose long-horizon limit is the stationary level g E_Q[L(1)] with
g = -b' A^{-1} e_p = b(0)/a(0).  Every e^{AT} e^{-At} product is evaluated as
e^{A(T-t)}, so large absolute day indices cannot overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carma import CarmaParams, _require_stationary, matrix_exp
from .errors import DataError, DomainError
from .seasonality import SeasonalityParams, eval_seasonality, seasonal_average

__all__ = [
    "MeasureChange",
    "MarketSnapshot",
    "stationary_gain",
    "futures_price_fixed",
    "carma_swap_term",
    "gamma_q",
    "swap_price",
    "theoretical_risk_premium",
    "empirical_premium_terms",
    "empirical_risk_premium",
    "empirical_premium_curve",
    "risk_premium_error",
]


class _Spectral:
    """Eigen-decomposition of A with helpers for b' A^{-k} e^{As} v."""

    def __init__(self, model: CarmaParams):
        _require_stationary(model)
        A = model.A
        self.lam, self.V = np.linalg.eig(A)
        self.Vinv = np.linalg.inv(self.V)
        self.b = model.b_vec
        self.e_p = model.e_p
        self.A = A
        self.p = model.p

    def row(self, k: int) -> np.ndarray:
        """b' A^{-k} V as a row in eigen-coordinates."""
        return (self.b @ self.V) * self.lam ** (-k)

    def apply(self, k: int, s, vec) -> np.ndarray:
        """b' A^{-k} e^{A s} vec for arrays s (n,) and vec (n, p) or (p,)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        vec = np.asarray(vec, dtype=float)
        coords = vec @ self.Vinv.T  # (n, p) or (p,)
        vals = np.exp(np.outer(s, self.lam)) * coords * self.row(k)
        return vals.sum(axis=-1).real


@dataclass(frozen=True)
class MeasureChange:
    """Risk-neutral quantities: Esscher parameter of Z, tempering of L and the implied means.

    ``c_const`` is the long-end level C = g E_Q[L(1)] with g the stationary gain
    of the CARMA model it was assembled for.
    """

    theta_Z: float
    theta_L: float
    eq_Z1: float
    eq_L1: float
    c_const: float

    def __post_init__(self):
        if self.theta_L > 0.0:
            raise DomainError(f"theta_L must be <= 0, got {self.theta_L}")

    @classmethod
    def assemble(cls, model: CarmaParams, theta_Z: float, theta_L: float, eq_Z1: float, eq_L1: float):
        return cls(theta_Z, theta_L, eq_Z1, eq_L1, stationary_gain(model) * eq_L1)

    def check(self, model: CarmaParams, tol: float = 1e-8) -> None:
        expected = stationary_gain(model) * self.eq_L1
        if abs(expected - self.c_const) > tol * max(1.0, abs(expected)):
            raise DomainError(f"C = {self.c_const} inconsistent with E_Q[L(1)] (expected {expected})")


@dataclass(frozen=True)
class MarketSnapshot:
    t: float
    z_t: float
    x_t: np.ndarray
    seasonality: SeasonalityParams

    def __post_init__(self):
        object.__setattr__(self, "x_t", np.asarray(getattr(self.x_t, "x", self.x_t), dtype=float).reshape(-1))


def stationary_gain(model: CarmaParams) -> float:
    """g = -b' A^{-1} e_p, the mean of Y per unit driver mean."""
    return float(-model.b_vec @ np.linalg.solve(model.A, model.e_p))


def _check_dim(snap, model):
    if snap.x_t.size != model.p:
        raise DomainError(f"state dimension {snap.x_t.size} does not match p={model.p}")


def futures_price_fixed(snap: MarketSnapshot, tau: float, model: CarmaParams, mc: MeasureChange) -> float:
    """Price at time t of a contract delivering S(tau)."""
    if tau < snap.t:
        raise DomainError(f"maturity {tau} precedes trade time {snap.t}")
    _check_dim(snap, model)
    _require_stationary(model)
    s = tau - snap.t
    # a single maturity: the dense exponential is exactly I at s = 0, so f(t, t) = S(t)
    E = matrix_exp(model.A, s)
    carma = float(model.b_vec @ E @ snap.x_t)
    drift = float(model.b_vec @ np.linalg.solve(model.A, (E - np.eye(model.p)) @ model.e_p)) * mc.eq_L1
    return float(eval_seasonality(snap.seasonality, tau) + snap.z_t + carma + s * mc.eq_Z1 + drift)


def carma_swap_term(model: CarmaParams, x, t, T1, T2, _sp=None) -> np.ndarray:
    """(1/(T2-T1)) b' A^{-1}(e^{A(T2-t)} - e^{A(T1-t)}) X(t), vectorized over quotes."""
    sp = _sp or _Spectral(model)
    t, T1, T2 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (t, T1, T2))
    x = np.asarray(x, dtype=float)
    return (sp.apply(1, T2 - t, x) - sp.apply(1, T1 - t, x)) / (T2 - T1)


def gamma_q(model: CarmaParams, t, T1, T2, eq_Z1: float, eq_L1: float, _sp=None) -> np.ndarray:
    """Measure-dependent part of the swap price.

    (mid - t) E_Q[Z(1)] + [b' A^{-2}(e^{A(T2-t)} - e^{A(T1-t)}) e_p / (T2-T1) - b' A^{-1} e_p] E_Q[L(1)]
    """
    sp = _sp or _Spectral(model)
    t, T1, T2 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (t, T1, T2))
    level = sp.apply(1, 0.0, sp.e_p)[0]
    carma = (sp.apply(2, T2 - t, sp.e_p) - sp.apply(2, T1 - t, sp.e_p)) / (T2 - T1) - level
    return (0.5 * (T1 + T2) - t) * eq_Z1 + carma * eq_L1


def swap_price(snap: MarketSnapshot, T1: float, T2: float, model: CarmaParams, mc: MeasureChange,
               seasonal: str = "daily") -> float:
    """Price at time t of a contract settled on the average spot over [T1, T2]."""
    if not snap.t <= T1 < T2:
        raise DomainError(f"need t <= T1 < T2, got t={snap.t}, T1={T1}, T2={T2}")
    _check_dim(snap, model)
    sp = _Spectral(model)
    avg = seasonal_average(snap.seasonality, T1, T2, seasonal)
    carma = carma_swap_term(model, snap.x_t, snap.t, T1, T2, _sp=sp)[0]
    gam = gamma_q(model, snap.t, T1, T2, mc.eq_Z1, mc.eq_L1, _sp=sp)[0]
    return float(avg + snap.z_t + carma + gam)


def theoretical_risk_premium(u, v: float, model: CarmaParams, driver_shift: float, eq_Z1: float):
    """Gamma_Q - Gamma_P for a contract of length v whose midpoint lies u days ahead.

    ``driver_shift`` is E_Q[L(1)] - E[L(1)]; Z has mean zero under P.
    """
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u < 0.5 * v - 1e-12):
        raise DomainError("time to maturity must be at least half the delivery length")
    out = gamma_q(model, 0.0, u - 0.5 * v, u + 0.5 * v, eq_Z1, driver_shift)
    return float(out[0]) if scalar else out


def empirical_premium_terms(price, seasonal_avg, x_t, z_t, t, T1, T2, model: CarmaParams,
                            driver_mean_P: float) -> np.ndarray:
    """Per-quote premium: F - seasonal average - CARMA state term - Z(t) - Gamma_P.

    Averaged over quotes with the same time to maturity this is the empirical
    risk premium; Gamma_P carries the two E[L(1)] correction terms.
    """
    sp = _Spectral(model)
    carma = carma_swap_term(model, x_t, t, T1, T2, _sp=sp)
    gam_p = gamma_q(model, t, T1, T2, 0.0, driver_mean_P, _sp=sp)
    return np.asarray(price, dtype=float) - np.asarray(seasonal_avg, dtype=float) - carma - np.asarray(z_t) - gam_p


def _bin(u_quote):
    return np.floor(np.asarray(u_quote, dtype=float) + 0.5).astype(int)


def empirical_risk_premium(u: int, u_quote, terms) -> float:
    """Mean of the per-quote premia whose time to maturity rounds to u."""
    sel = _bin(u_quote) == int(u)
    if not np.any(sel):
        raise DataError(f"no futures quotes with time to maturity {u}")
    return float(np.mean(np.asarray(terms)[sel]))


def empirical_premium_curve(u_grid, u_quote, terms):
    """Vectorized :func:`empirical_risk_premium`; returns (mean, sd, count), NaN where empty."""
    u_grid = np.asarray(u_grid, dtype=int)
    bins = _bin(u_quote)
    terms = np.asarray(terms, dtype=float)
    lo = int(u_grid.min())
    size = int(u_grid.max()) - lo + 1
    keep = (bins >= lo) & (bins < lo + size)
    idx = bins[keep] - lo
    count = np.bincount(idx, minlength=size).astype(float)
    s1 = np.bincount(idx, weights=terms[keep], minlength=size)
    s2 = np.bincount(idx, weights=terms[keep] ** 2, minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / count
        var = np.maximum(s2 / count - mean ** 2, 0.0) * count / (count - 1)
    sd = np.sqrt(var)
    pick = u_grid - lo
    return mean[pick], sd[pick], count[pick].astype(int)


def risk_premium_error(empirical, theoretical):
    """Sum of squared differences over u, skipping points without data.

    Returns (value, number of skipped points).
    """
    e = np.asarray(empirical, dtype=float)
    th = np.asarray(theoretical, dtype=float)
    ok = np.isfinite(e) & np.isfinite(th)
    return float(np.sum((e[ok] - th[ok]) ** 2)), int((~ok).sum())
