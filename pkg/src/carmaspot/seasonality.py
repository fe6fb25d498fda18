"""Deterministic seasonality and robust linear regression.

Base load: c1 + c2 t + c3 cos(2 pi t/365) + c4 sin(2 pi t/365) + c5 cos(2 pi t/7) + c6 sin(2 pi t/7)
Peak load: c1 + c2 t + c3 cos(2 pi t/261) + c4 sin(2 pi t/261)

Base time runs over calendar days, peak time over weekdays only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DomainError, EstimationError

log = logging.getLogger(__name__)

__all__ = [
    "SeasonalityParams",
    "RobustFit",
    "robust_linear_fit",
    "seasonal_design",
    "eval_seasonality",
    "seasonal_average",
    "fit_seasonality",
]

PERIODS = {"base": (365.0, 7.0), "peak": (261.0, None)}


@dataclass(frozen=True)
class SeasonalityParams:
    mode: str
    c: tuple

    def __post_init__(self):
        if self.mode not in PERIODS:
            raise DomainError(f"mode must be 'base' or 'peak', got {self.mode!r}")
        c = tuple(float(v) for v in self.c)
        if len(c) != n_coefficients(self.mode):
            raise DomainError(f"{self.mode} seasonality needs {n_coefficients(self.mode)} coefficients, got {len(c)}")
        object.__setattr__(self, "c", c)

    @property
    def yearly_period(self) -> float:
        return PERIODS[self.mode][0]

    @property
    def weekly_period(self):
        return PERIODS[self.mode][1]

    def __call__(self, t):
        return eval_seasonality(self, t)


def n_coefficients(mode: str) -> int:
    return 6 if mode == "base" else 4


def seasonal_design(t, mode: str) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    yearly, weekly = PERIODS[mode]
    cols = [np.ones_like(t), t, np.cos(2 * np.pi * t / yearly), np.sin(2 * np.pi * t / yearly)]
    if weekly is not None:
        cols += [np.cos(2 * np.pi * t / weekly), np.sin(2 * np.pi * t / weekly)]
    return np.stack(cols, axis=-1)


def eval_seasonality(params: SeasonalityParams, t):
    out = seasonal_design(t, params.mode) @ np.array(params.c)
    return float(out) if np.ndim(out) == 0 else out


def seasonal_average(params: SeasonalityParams, T1, T2, method: str = "daily"):
    """Average of Lambda over a delivery period [T1, T2).

    ``daily`` averages Lambda at the integer days T1..T2-1 (the settlement
    convention); ``continuous`` integrates Lambda over [T1, T2] in closed form.
    """
    T1 = np.asarray(T1, dtype=float)
    T2 = np.asarray(T2, dtype=float)
    if np.any(T2 <= T1):
        raise DomainError("need T1 < T2")
    if method == "continuous":
        yearly, weekly = PERIODS[params.mode]
        c = params.c
        length = T2 - T1
        out = c[0] + c[1] * 0.5 * (T1 + T2)
        harmonics = [(yearly, c[2], c[3])]
        if weekly is not None:
            harmonics.append((weekly, c[4], c[5]))
        for period, cc, cs in harmonics:
            w = 2 * np.pi / period
            out = out + (cc * (np.sin(w * T2) - np.sin(w * T1)) + cs * (np.cos(w * T1) - np.cos(w * T2))) / (w * length)
        return float(out) if out.ndim == 0 else out
    if method != "daily":
        raise ValueError(f"unknown method {method!r}")
    if np.any(T1 != np.round(T1)) or np.any(T2 != np.round(T2)):
        raise DomainError("daily averaging needs integer day indices")
    lo, hi = int(T1.min()), int(T2.max())
    cum = np.concatenate([[0.0], np.cumsum(eval_seasonality(params, np.arange(lo, hi)))])
    out = (cum[T2.astype(int) - lo] - cum[T1.astype(int) - lo]) / (T2 - T1)
    return float(out) if out.ndim == 0 else out


@dataclass
class RobustFit:
    coef: np.ndarray
    scale: float
    weights: np.ndarray
    objective: list = field(default_factory=list)
    n_iter: int = 0
    method: str = "huber"


def _huber_rho(r, k):
    a = np.abs(r)
    return np.where(a <= k, 0.5 * r * r, k * a - 0.5 * k * k)


def robust_linear_fit(X, y, method: str = "huber", tuning: float = 1.345,
                      tol: float = 1e-12, max_iter: int = 500) -> RobustFit:
    """Linear regression by Huber IRLS (default), LAD or plain least squares.

    The Huber scale is fixed at 1.4826 * MAD of the least-squares residuals, so
    each reweighting step cannot increase the Huber objective.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DomainError("design and response have inconsistent shapes")
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise EstimationError("rank-deficient regression design", {"shape": X.shape})
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    if method == "ols":
        return RobustFit(coef, float(np.std(y - X @ coef)), np.ones(y.size), [], 0, "ols")
    if method == "lad":
        n, k = X.shape
        # min sum(u+ + u-) s.t. X c + u+ - u- = y
        cost = np.concatenate([np.zeros(k), np.ones(2 * n)])
        A_eq = np.hstack([X, np.eye(n), -np.eye(n)])
        bounds = [(None, None)] * k + [(0, None)] * (2 * n)
        res = optimize.linprog(cost, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
        if not res.success:
            raise EstimationError("LAD linear program failed", {"message": res.message})
        coef = res.x[:k]
        return RobustFit(coef, float(np.median(np.abs(y - X @ coef))), np.ones(n), [res.fun], res.nit, "lad")
    if method != "huber":
        raise ValueError(f"unknown method {method!r}")

    r = y - X @ coef
    scale = 1.4826 * float(np.median(np.abs(r - np.median(r))))
    if scale <= 1e-14 * max(1.0, float(np.abs(y).max())):
        # exact fit up to rounding; nothing to downweight
        return RobustFit(coef, 0.0, np.ones(y.size), [0.0], 0, "huber")
    k = tuning * scale
    history = [float(_huber_rho(r, k).sum())]
    w = np.ones(y.size)
    it = 0
    for it in range(1, max_iter + 1):
        a = np.abs(r)
        w = np.where(a <= k, 1.0, k / np.maximum(a, 1e-300))
        sw = np.sqrt(w)
        new = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
        r = y - X @ new
        history.append(float(_huber_rho(r, k).sum()))
        step = np.max(np.abs(new - coef)) / (1.0 + np.max(np.abs(coef)))
        coef = new
        if step < tol:
            break
    return RobustFit(coef, scale, w, history, it, "huber")


def fit_seasonality(t, price, mode: str = "base", method: str = "huber") -> tuple:
    """Robust fit of the seasonality function; returns (SeasonalityParams, RobustFit)."""
    if mode not in PERIODS:
        raise DomainError(f"mode must be 'base' or 'peak', got {mode!r}")
    t = np.asarray(t, dtype=float)
    price = np.asarray(price, dtype=float)
    if t.size < 2 * PERIODS[mode][0]:
        log.warning("seasonality fitted on fewer than two years of data (%d points)", t.size)
    fit = robust_linear_fit(seasonal_design(t, mode), price, method=method)
    return SeasonalityParams(mode, tuple(fit.coef)), fit
