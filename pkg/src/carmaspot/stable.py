"""Alpha-stable laws and the tempered-stable pricing measure.

All routines use the parameterization

    log E[exp(i z X)] = -gamma**alpha * |z|**alpha * (1 - i beta sign(z) tan(pi alpha / 2)) + i mu z,

valid for alpha != 1 (Samorodnitsky-Taqqu S1 form).  In this form ``mu`` is the
mean whenever ``alpha > 1`` and ``gamma`` maps to a normal standard deviation of
``sqrt(2) * gamma`` at ``alpha = 2``.

Densities are obtained by numerical Fourier inversion on a fixed grid (composite
Gauss-Legendre) with a cubic spline in the body of the law and a Bergstrom-type
asymptotic series in the tails.  They are supported for ``1 < alpha <= 2`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import interpolate, optimize, special

from .errors import DomainError, EstimationError, InfeasibleError

__all__ = [
    "StableParams",
    "TemperedTail",
    "stable_char_exponent",
    "sample_stable",
    "stable_pdf",
    "stable_logpdf",
    "stable_cdf",
    "stable_ppf",
    "estimate_stable",
    "stable_c_pm",
    "tempered_tail",
    "tempered_mean_shift",
    "solve_theta_L",
]


@dataclass(frozen=True)
class StableParams:
    """Law of L(1): shape ``alpha``, skewness ``beta``, scale ``gamma``, location ``mu``."""

    alpha: float
    beta: float
    gamma: float
    mu: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise DomainError(f"alpha must lie in (0, 2], got {self.alpha}")
        if abs(self.alpha - 1.0) < 1e-12:
            raise DomainError("alpha = 1 is not supported")
        if not (-1.0 <= self.beta <= 1.0):
            raise DomainError(f"beta must lie in [-1, 1], got {self.beta}")
        if not self.gamma > 0.0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if not math.isfinite(self.mu):
            raise DomainError("mu must be finite")

    @property
    def mean(self) -> float:
        if self.alpha <= 1.0:
            raise DomainError("the mean exists only for alpha > 1")
        return self.mu

    def scaled(self, factor: float) -> "StableParams":
        """Law of ``factor * X`` (factor > 0)."""
        return StableParams(self.alpha, self.beta, self.gamma * factor, self.mu * factor)


@dataclass(frozen=True)
class TemperedTail:
    """Exponential tempering of a stable Levy measure with jump intensities c+ and c-."""

    theta_L: float
    c_plus: float
    c_minus: float

    def __post_init__(self):
        if not self.theta_L < 0.0:
            raise DomainError(f"theta_L must be strictly negative, got {self.theta_L}")
        if self.c_plus < 0.0 or self.c_minus < 0.0:
            raise DomainError("jump intensities must be non-negative")
        if not self.c_plus + self.c_minus > 0.0:
            raise DomainError("c_plus + c_minus must be positive")


def stable_char_exponent(params: StableParams, z):
    """Characteristic exponent phi(z) with E exp(i z L(1)) = exp(phi(z))."""
    z = np.asarray(z, dtype=float)
    a = params.alpha
    skew = params.beta * np.sign(z) * math.tan(math.pi * a / 2.0)
    out = -(params.gamma ** a) * np.abs(z) ** a * (1.0 - 1j * skew) + 1j * params.mu * z
    return out[()] if out.ndim == 0 else out


def sample_stable(params: StableParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` variates with the Chambers-Mallows-Stuck method."""
    if n < 1:
        raise DomainError("n must be at least 1")
    a, b = params.alpha, params.beta
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=n)
    w = rng.exponential(1.0, size=n)
    t = b * math.tan(math.pi * a / 2.0)
    shift = math.atan(t) / a
    scale = (1.0 + t * t) ** (1.0 / (2.0 * a))
    x = (
        scale
        * np.sin(a * (v + shift))
        / np.cos(v) ** (1.0 / a)
        * (np.cos(v - a * (v + shift)) / w) ** ((1.0 - a) / a)
    )
    return params.gamma * x + params.mu


# ---------------------------------------------------------------------------
# density by Fourier inversion

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_HALF_WIDTH = 40.0  # grid half-width in standardized units; series beyond
_SERIES_TERMS = 10


def _panel_nodes(edges):
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    z = (lo + hi) / 2.0 + half * _GL_NODES[None, :]
    w = half * _GL_WEIGHTS[None, :]
    return z.ravel(), w.ravel()


def _inversion_rule(alpha, beta, xmax):
    """Quadrature nodes on [0, zmax] resolving oscillations up to |x| = xmax."""
    t = beta * math.tan(math.pi * alpha / 2.0)
    zmax = 36.0 ** (1.0 / alpha)
    rate = xmax + abs(t) * alpha * zmax ** (alpha - 1.0) + 1.0
    n_panels = max(8, int(math.ceil(zmax * rate / 1.5)))
    first = zmax / n_panels
    graded = first * 2.0 ** -np.arange(24, -1, -1)
    edges = np.concatenate([[0.0], graded, np.linspace(first, zmax, n_panels)[1:]])
    return _panel_nodes(edges)


def _pdf_by_quadrature(x, alpha, beta):
    """Standardized density at points ``x`` by direct inversion."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = beta * math.tan(math.pi * alpha / 2.0)
    z, w = _inversion_rule(alpha, beta, float(np.max(np.abs(x))) if x.size else 1.0)
    decay = w * np.exp(-(z ** alpha))
    phase = t * z ** alpha
    out = np.empty_like(x)
    for start in range(0, x.size, 256):
        chunk = x[start:start + 256]
        out[start:start + 256] = np.cos(phase[None, :] - chunk[:, None] * z[None, :]) @ decay
    return out / math.pi


def _tail_series(x, alpha, beta, cumulative=False):
    """Right-tail expansion for x -> +inf of the standardized density (or survival)."""
    x = np.asarray(x, dtype=float)
    c = 1.0 - 1j * beta * math.tan(math.pi * alpha / 2.0)
    total = np.zeros(x.shape, dtype=complex)
    for k in range(1, _SERIES_TERMS + 1):
        coef = (-c) ** k / math.factorial(k) * math.gamma(k * alpha + 1.0)
        coef *= np.exp(-0.5j * math.pi * (k * alpha + 1.0))
        if cumulative:
            total += coef * x ** (-k * alpha) / (k * alpha)
        else:
            total += coef * x ** (-k * alpha - 1.0)
    return total.real / math.pi


def _grid_offsets():
    core = np.arange(-5.0, 5.0, 0.02)
    mid = np.arange(5.0, 15.0, 0.05)
    far = np.arange(15.0, _HALF_WIDTH + 1e-9, 0.2)
    return np.unique(np.round(np.concatenate([-far, -mid, core, mid, far]), 10))


class _StandardLaw:
    """Spline representation of a standardized (gamma=1, mu=0) stable law."""

    def __init__(self, alpha, beta):
        if not (1.0 < alpha <= 2.0):
            raise DomainError("stable densities are implemented for 1 < alpha <= 2 only")
        self.alpha, self.beta = alpha, beta
        self.center = beta * math.tan(math.pi * alpha / 2.0)
        grid = self.center + _grid_offsets()
        self.lo, self.hi = grid[0], grid[-1]
        dens = _pdf_by_quadrature(grid, alpha, beta)
        self.spline = interpolate.CubicSpline(grid, dens)
        self.antideriv = self.spline.antiderivative()
        self.left_mass = float(_tail_series(-self.lo, alpha, -beta, cumulative=True))
        self.right_mass = float(_tail_series(self.hi, alpha, beta, cumulative=True))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        inside = (x >= self.lo) & (x <= self.hi)
        out[inside] = self.spline(x[inside])
        right = x > self.hi
        out[right] = _tail_series(x[right], self.alpha, self.beta)
        left = x < self.lo
        out[left] = _tail_series(-x[left], self.alpha, -self.beta)
        return np.maximum(out, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        inside = (x >= self.lo) & (x <= self.hi)
        out[inside] = self.left_mass + self.antideriv(x[inside])
        right = x > self.hi
        out[right] = 1.0 - _tail_series(x[right], self.alpha, self.beta, cumulative=True)
        left = x < self.lo
        out[left] = _tail_series(-x[left], self.alpha, -self.beta, cumulative=True)
        return np.clip(out, 0.0, 1.0)

    def ppf(self, q):
        def f(x, target):
            return float(self.cdf(np.array(x))) - target

        out = []
        for target in np.atleast_1d(q):
            lo, hi = self.center - 1.0, self.center + 1.0
            while f(lo, target) > 0.0:
                lo -= 2.0 * (hi - lo)
            while f(hi, target) < 0.0:
                hi += 2.0 * (hi - lo)
            out.append(optimize.brentq(f, lo, hi, args=(target,), xtol=1e-12))
        return np.array(out)


@lru_cache(maxsize=128)
def _standard_law(alpha: float, beta: float) -> _StandardLaw:
    return _StandardLaw(alpha, beta)


def _law(params):
    return _standard_law(float(params.alpha), float(params.beta))


def stable_pdf(x, params: StableParams):
    z = (np.asarray(x, dtype=float) - params.mu) / params.gamma
    return _law(params).pdf(z) / params.gamma


def stable_logpdf(x, params: StableParams):
    with np.errstate(divide="ignore"):
        return np.log(stable_pdf(x, params))


def stable_cdf(x, params: StableParams):
    return _law(params).cdf((np.asarray(x, dtype=float) - params.mu) / params.gamma)


def stable_ppf(q, params: StableParams):
    return params.mu + params.gamma * _law(params).ppf(q)


# ---------------------------------------------------------------------------
# estimation

_QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)
_ALPHA_MAX_FIT = 1.9999
_ALPHA_MIN_FIT = 1.1


def _quantile_statistics(q):
    q05, q25, q50, q75, q95 = q
    return (q95 - q05) / (q75 - q25), (q95 + q05 - 2.0 * q50) / (q95 - q05)


def build_quantile_table(alphas=None, betas=None):
    """Tabulate McCulloch-type quantile statistics of standardized laws.

    Returns a dict with the alpha and beta axes and arrays ``nu_alpha``,
    ``nu_beta``, ``iqr`` and ``median`` of shape (len(alphas), len(betas)).
    """
    alphas = np.round(np.arange(1.1, 2.0 + 1e-9, 0.05), 10) if alphas is None else np.asarray(alphas)
    betas = np.round(np.arange(-1.0, 1.0 + 1e-9, 0.1), 10) if betas is None else np.asarray(betas)
    shape = (alphas.size, betas.size)
    table = {k: np.empty(shape) for k in ("nu_alpha", "nu_beta", "iqr", "median")}
    for i, a in enumerate(alphas):
        for j, b in enumerate(betas):
            q = _StandardLaw(float(a), float(b)).ppf(_QUANTILE_LEVELS)
            table["nu_alpha"][i, j], table["nu_beta"][i, j] = _quantile_statistics(q)
            table["iqr"][i, j] = q[3] - q[1]
            table["median"][i, j] = q[2]
    table["alphas"], table["betas"] = alphas, betas
    return table


@lru_cache(maxsize=1)
def _quantile_table():
    with resources.files("carmaspot.data").joinpath("stable_quantiles.npz").open("rb") as fh:
        data = np.load(fh)
        table = {k: data[k] for k in data.files}
    axes = (table["alphas"], table["betas"])
    interp = {
        k: interpolate.RegularGridInterpolator(axes, table[k], method="cubic")
        for k in ("nu_alpha", "nu_beta", "iqr", "median")
    }
    return table, interp


def _quantile_fit(x):
    table, interp = _quantile_table()
    q = np.quantile(x, _QUANTILE_LEVELS)
    if q[3] - q[1] <= 0.0 or q[4] - q[0] <= 0.0:
        raise EstimationError("samples have zero interquartile range", {"quantiles": q.tolist()})
    nu_a, nu_b = _quantile_statistics(q)
    a_lo, a_hi = table["alphas"][0], table["alphas"][-1]
    if nu_a <= float(interp["nu_alpha"]([a_hi, 0.0])[0]):
        alpha, beta = a_hi, 0.0
    else:
        def resid(v):
            pt = np.array([v])
            return [float(interp["nu_alpha"](pt)[0]) - nu_a, float(interp["nu_beta"](pt)[0]) - nu_b]

        sol = optimize.least_squares(
            resid, x0=[1.5, float(np.clip(nu_b * 3.0, -0.9, 0.9))],
            bounds=([a_lo, -1.0], [a_hi, 1.0]), xtol=1e-12, ftol=1e-12,
        )
        alpha, beta = (float(v) for v in sol.x)
    pt = np.array([[alpha, beta]])
    gamma = (q[3] - q[1]) / float(interp["iqr"](pt)[0])
    mu = q[2] - gamma * float(interp["median"](pt)[0])
    alpha = min(alpha, _ALPHA_MAX_FIT)
    return StableParams(alpha, float(np.clip(beta, -1.0, 1.0)), float(gamma), float(mu))


def _negloglik(theta, x, loc0, scale0):
    alpha, beta, log_scale, loc = theta
    if not (_ALPHA_MIN_FIT <= alpha <= _ALPHA_MAX_FIT) or abs(beta) > 1.0:
        return np.inf
    gamma = scale0 * math.exp(log_scale)
    dens = _standard_law(float(alpha), float(beta)).pdf((x - (loc0 + scale0 * loc)) / gamma)
    return -(np.sum(np.log(np.maximum(dens, 1e-300))) - x.size * math.log(gamma))


def estimate_stable(samples, method: str = "ml") -> StableParams:
    """Estimate (alpha, beta, gamma, mu) from i.i.d. samples.

    ``method="quantile"`` returns the McCulloch-type quantile estimate only;
    ``method="ml"`` refines it by maximum likelihood using the inverted density.
    The fit is restricted to ``1.1 <= alpha < 2``.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 200:
        raise EstimationError(f"need at least 200 samples, got {x.size}")
    if np.ptp(x) == 0.0:
        raise EstimationError("degenerate sample: all values equal")
    start = _quantile_fit(x)
    if method == "quantile":
        return start
    if method != "ml":
        raise ValueError(f"unknown method {method!r}")
    start = StableParams(
        min(max(start.alpha, _ALPHA_MIN_FIT + 0.01), _ALPHA_MAX_FIT - 0.01),
        float(np.clip(start.beta, -0.98, 0.98)), start.gamma, start.mu,
    )
    x0 = np.array([start.alpha, start.beta, 0.0, 0.0])
    simplex = np.array([x0, x0 + [0.05, 0, 0, 0], x0 + [0, 0.1, 0, 0], x0 + [0, 0, 0.05, 0], x0 + [0, 0, 0, 0.05]])
    simplex[:, 1] = np.clip(simplex[:, 1], -0.98, 0.98)
    res = optimize.minimize(
        _negloglik, x0, args=(x, start.mu, start.gamma), method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": 1e-5, "fatol": 1e-7, "maxiter": 2000},
    )
    if not np.isfinite(res.fun):
        raise EstimationError("stable likelihood maximization failed", {"message": res.message})
    alpha, beta, log_scale, loc = res.x
    return StableParams(float(alpha), float(beta), float(start.gamma * math.exp(log_scale)),
                        float(start.mu + start.gamma * loc))


# ---------------------------------------------------------------------------
# Levy measure and tempering


def stable_c_pm(params: StableParams) -> tuple[float, float]:
    """Jump intensities (c+, c-) with c+ + c- = gamma**alpha and (c+ - c-)/(c+ + c-) = beta."""
    total = params.gamma ** params.alpha
    return 0.5 * (1.0 + params.beta) * total, 0.5 * (1.0 - params.beta) * total


def tempered_tail(params: StableParams, theta_L: float) -> TemperedTail:
    c_plus, c_minus = stable_c_pm(params)
    return TemperedTail(theta_L, c_plus, c_minus)


def _require_finite_mean(params):
    if not (1.0 < params.alpha < 2.0):
        raise DomainError("tempered mean shift requires 1 < alpha < 2")


def tempered_mean_shift(params: StableParams, theta_L: float) -> float:
    """E_Q[L(1)] - E_P[L(1)] when the Levy measure is tempered by exp(theta_L |x|)."""
    _require_finite_mean(params)
    tail = tempered_tail(params, theta_L)
    return special.gamma(1.0 - params.alpha) * (-theta_L) ** (params.alpha - 1.0) * (tail.c_plus - tail.c_minus)


def solve_theta_L(params: StableParams, target_shift: float) -> float:
    """Tempering exponent producing a given shift of the mean of L(1)."""
    _require_finite_mean(params)
    c_plus, c_minus = stable_c_pm(params)
    denom = special.gamma(1.0 - params.alpha) * (c_plus - c_minus)
    ratio = target_shift / denom if denom != 0.0 else float("nan")
    if not (ratio > 0.0 and math.isfinite(ratio)):
        raise InfeasibleError(
            f"mean shift {target_shift} is not attainable with theta_L < 0 "
            f"(c+ - c- = {c_plus - c_minus:.6g})"
        )
    return -(ratio ** (1.0 / (params.alpha - 1.0)))
