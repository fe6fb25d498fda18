"""Normal inverse Gaussian law of the daily increments of the long-term factor."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, special

from .errors import DomainError, EstimationError, InfeasibleError

__all__ = [
    "NigParams",
    "nig_log_density",
    "nig_mean",
    "nig_variance",
    "nig_char_function",
    "zero_mean_location",
    "fit_nig_zero_mean",
    "sample_nig",
    "esscher_shift_nig",
    "solve_theta_Z",
]


@dataclass(frozen=True)
class NigParams:
    alpha_Z: float
    beta_Z: float
    delta_Z: float
    mu_Z: float = 0.0

    def __post_init__(self):
        if not self.alpha_Z > 0.0:
            raise DomainError(f"alpha_Z must be positive, got {self.alpha_Z}")
        if not self.delta_Z > 0.0:
            raise DomainError(f"delta_Z must be positive, got {self.delta_Z}")
        if not abs(self.beta_Z) < self.alpha_Z:
            raise DomainError(f"|beta_Z| must be below alpha_Z, got beta_Z={self.beta_Z}, alpha_Z={self.alpha_Z}")

    @property
    def gamma_Z(self) -> float:
        return math.sqrt(self.alpha_Z ** 2 - self.beta_Z ** 2)


def nig_log_density(params: NigParams, x):
    """Log density; uses the exponentially scaled Bessel function K1 for stability."""
    x = np.asarray(x, dtype=float)
    a, b, d, m = params.alpha_Z, params.beta_Z, params.delta_Z, params.mu_Z
    r = np.hypot(d, x - m)
    out = (
        math.log(a * d / math.pi)
        + d * params.gamma_Z
        + b * (x - m)
        - np.log(r)
        + np.log(special.k1e(a * r))
        - a * r
    )
    return out[()] if out.ndim == 0 else out


def nig_char_function(params: NigParams, z):
    z = np.asarray(z, dtype=float)
    a, b, d, m = params.alpha_Z, params.beta_Z, params.delta_Z, params.mu_Z
    return np.exp(1j * m * z + d * (params.gamma_Z - np.sqrt(a * a - (b + 1j * z) ** 2)))


def nig_mean(params: NigParams) -> float:
    return params.mu_Z + params.delta_Z * params.beta_Z / params.gamma_Z


def nig_variance(params: NigParams) -> float:
    return params.delta_Z * params.alpha_Z ** 2 / params.gamma_Z ** 3


def zero_mean_location(alpha_Z: float, beta_Z: float, delta_Z: float) -> float:
    return -delta_Z * beta_Z / math.sqrt(alpha_Z ** 2 - beta_Z ** 2)


def sample_nig(params: NigParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """Normal variance-mean mixture with an inverse-Gaussian mixing variable."""
    g = params.gamma_Z
    # IG with mean delta/gamma and shape delta**2
    v = rng.wald(params.delta_Z / g, params.delta_Z ** 2, size=n)
    return params.mu_Z + params.beta_Z * v + np.sqrt(v) * rng.standard_normal(n)


def _unpack(theta):
    log_a, atanh_rho, log_d = theta
    alpha = math.exp(log_a)
    beta = alpha * math.tanh(atanh_rho)
    delta = math.exp(log_d)
    return alpha, beta, delta


def fit_nig_zero_mean(increments) -> NigParams:
    """Maximum likelihood over NIG laws with mean exactly zero.

    The location is eliminated via mu = -delta beta / sqrt(alpha^2 - beta^2), so
    the search runs over (log alpha, atanh(beta/alpha), log delta).
    """
    x = np.asarray(increments, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 200:
        raise EstimationError(f"need at least 200 increments, got {x.size}")
    var = float(np.var(x))
    if var <= (1e-12 * max(1.0, float(np.max(np.abs(x))))) ** 2:
        raise EstimationError("degenerate increments: variance at rounding level")
    # moment start: symmetric law with matched variance and excess kurtosis
    kurt = max(float(np.mean((x - x.mean()) ** 4)) / var ** 2 - 3.0, 0.05)
    alpha0 = math.sqrt(3.0 / (kurt * var))
    delta0 = var * alpha0

    def nll(theta):
        try:
            alpha, beta, delta = _unpack(theta)
            if not (np.isfinite(alpha) and np.isfinite(delta)) or abs(beta) >= alpha:
                return np.inf
            p = NigParams(alpha, beta, delta, zero_mean_location(alpha, beta, delta))
        except (OverflowError, ZeroDivisionError, DomainError):
            return np.inf
        val = -float(np.sum(nig_log_density(p, x)))
        return val if np.isfinite(val) else np.inf

    best = None
    for rho in (0.0, 0.3, -0.3):
        start = np.array([math.log(alpha0), rho, math.log(delta0)])
        res = optimize.minimize(nll, start, method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if not np.isfinite(best.fun):
        raise EstimationError("NIG likelihood maximization failed",
                              {"message": best.message, "nit": best.nit})
    alpha, beta, delta = _unpack(best.x)
    return NigParams(alpha, beta, delta, zero_mean_location(alpha, beta, delta))


def esscher_shift_nig(params: NigParams, theta_Z: float) -> NigParams:
    """Law of Z(1) after an Esscher transform with parameter theta_Z."""
    shifted = params.beta_Z + theta_Z
    if not abs(shifted) < params.alpha_Z:
        raise InfeasibleError(
            f"Esscher parameter {theta_Z} leaves the exponential-moment region "
            f"(|beta_Z + theta_Z| = {abs(shifted):.6g} >= alpha_Z = {params.alpha_Z:.6g})"
        )
    return replace(params, beta_Z=shifted)


def solve_theta_Z(params: NigParams, target_mean: float) -> float:
    """Esscher parameter giving E_Q[Z(1)] = target_mean (bracketed root search)."""
    a, b, d, m = params.alpha_Z, params.beta_Z, params.delta_Z, params.mu_Z
    # mean after the shift is m + d s / sqrt(a^2 - s^2) with s = b + theta, increasing in s;
    # invert in closed form, then polish by bisection on the bracket
    k = (target_mean - m) / d
    s_closed = a * k / math.sqrt(1.0 + k * k)
    if not abs(s_closed) < a or not math.isfinite(s_closed):
        raise InfeasibleError(f"target mean {target_mean} is outside the attainable range")

    def excess(theta):
        s = b + theta
        return m + d * s / math.sqrt(a * a - s * s) - target_mean

    theta0 = s_closed - b
    lo, hi = theta0 - 1e-6 * (1.0 + abs(theta0)), theta0 + 1e-6 * (1.0 + abs(theta0))
    lo, hi = max(lo, -a - b + 1e-15), min(hi, a - b - 1e-15)
    if excess(lo) > 0.0 or excess(hi) < 0.0:
        return theta0
    return optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
