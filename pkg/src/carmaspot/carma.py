"""CARMA(p, q) structure, simulation and discrete-time estimation.

State space form (controller canonical):

    Y(t) = b' X(t),   dX(t) = A X(t) dt + e_p dL(t)

with A the companion matrix of a(z) = z^p + a_1 z^(p-1) + ... + a_p and
b = (b_0, ..., b_{p-1}), b_q = 1, b_j = 0 for j > q.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, optimize, signal

from .errors import DomainError, EstimationError, NotStationaryError
from .stable import StableParams, sample_stable

log = logging.getLogger(__name__)

__all__ = [
    "CarmaParams",
    "CarmaState",
    "CarmaPath",
    "NoiseSeries",
    "StationarityReport",
    "companion_matrix",
    "eigenvalues",
    "check_stationarity",
    "matrix_exp",
    "simulate_carma",
    "estimate_arma_ar",
    "fit_embedded_ar",
    "discrete_ar_coefficients",
    "ar_from_arma_roots",
    "stationary_covariance",
    "carma_autocov",
    "carma_acf",
    "empirical_acf",
    "estimate_ma_b",
    "recover_noise",
    "kappa",
    "noise_kernels",
    "epsilon_stable_params",
    "map_epsilon_to_L",
    "burn_in_steps",
]


@dataclass(frozen=True)
class CarmaParams:
    """AR coefficients ``a = (a_1..a_p)`` and MA vector ``b = (b_0..b_{p-1})``."""

    a: tuple
    b: tuple

    def __init__(self, a, b=None):
        a = tuple(float(v) for v in np.atleast_1d(a))
        p = len(a)
        if p < 1:
            raise DomainError("AR order p must be at least 1")
        if b is None:
            b = (1.0,) + (0.0,) * (p - 1)
        b = tuple(float(v) for v in np.atleast_1d(b))
        if len(b) < p:
            b = b + (0.0,) * (p - len(b))
        if len(b) != p:
            raise DomainError(f"b must have length p={p}, got {len(b)}")
        nonzero = [j for j, v in enumerate(b) if v != 0.0]
        if not nonzero or b[nonzero[-1]] != 1.0:
            raise DomainError("the highest non-zero MA coefficient b_q must equal 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def p(self) -> int:
        return len(self.a)

    @property
    def q(self) -> int:
        return max(j for j, v in enumerate(self.b) if v != 0.0)

    @property
    def A(self) -> np.ndarray:
        return companion_matrix(self)

    @property
    def b_vec(self) -> np.ndarray:
        return np.array(self.b)

    @property
    def e_p(self) -> np.ndarray:
        e = np.zeros(self.p)
        e[-1] = 1.0
        return e


@dataclass
class CarmaState:
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)


@dataclass
class CarmaPath:
    """Simulated states ``X(t_n)`` and observations ``y_n = b' X(t_n)`` on the observation grid."""

    times: np.ndarray
    states: np.ndarray
    y: np.ndarray


@dataclass
class NoiseSeries:
    eps: np.ndarray
    h: float

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        if not np.all(np.isfinite(self.eps)):
            raise DomainError("noise series contains non-finite values")


@dataclass
class StationarityReport:
    ok: bool
    eigenvalues: np.ndarray
    reasons: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def companion_matrix(params: CarmaParams) -> np.ndarray:
    p = params.p
    A = np.zeros((p, p))
    if p > 1:
        A[np.arange(p - 1), np.arange(1, p)] = 1.0
    A[-1, :] = -np.array(params.a[::-1])
    return A


def eigenvalues(A) -> np.ndarray:
    return np.linalg.eigvals(np.atleast_2d(np.asarray(A, dtype=float)))


def _b_poly(params, z):
    return np.polyval(np.array(params.b[::-1]), z)


def _distinct(lam, rel=1e-8):
    lam = np.asarray(lam)
    scale = max(1.0, float(np.max(np.abs(lam))))
    for i in range(lam.size):
        for j in range(i + 1, lam.size):
            if abs(lam[i] - lam[j]) <= rel * scale:
                return False
    return True


def check_stationarity(params: CarmaParams) -> StationarityReport:
    """Distinct eigenvalues with negative real parts and no common roots of a(z), b(z)."""
    lam = eigenvalues(params.A)
    reasons = []
    if not _distinct(lam):
        reasons.append("eigenvalues of A are not distinct")
    if np.any(lam.real >= 0.0):
        reasons.append(f"eigenvalue with non-negative real part: max Re = {lam.real.max():.6g}")
    b_at = np.abs(_b_poly(params, lam))
    if params.q > 0 and np.any(b_at <= 1e-10 * max(1.0, float(np.max(np.abs(params.b))))):
        reasons.append("a(z) and b(z) share a root")
    return StationarityReport(not reasons, lam, reasons)


def _require_stationary(params):
    report = check_stationarity(params)
    if not report:
        raise NotStationaryError("; ".join(report.reasons), {"eigenvalues": report.eigenvalues.tolist()})
    return report


def matrix_exp(A, t: float = 1.0) -> np.ndarray:
    """exp(A t) by eigendecomposition when A has distinct eigenvalues, else scaling-and-squaring."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if t == 0.0:
        return np.eye(A.shape[0])
    lam, V = np.linalg.eig(A)
    if _distinct(lam) and np.linalg.cond(V) < 1e8:
        out = (V * np.exp(lam * t)) @ np.linalg.inv(V)
        return out.real
    return linalg.expm(A * t)


def burn_in_steps(params: CarmaParams, h: float = 1.0) -> int:
    """Number of grid steps of length h covering 10 / |max Re(lambda)| time units."""
    slowest = float(np.max(eigenvalues(params.A).real))
    return int(math.ceil(10.0 / abs(slowest) / h))


# ---------------------------------------------------------------------------
# simulation


def simulate_carma(params: CarmaParams, driver: StableParams | None, horizon: float,
                   fine_step: float, obs_step: float, rng: np.random.Generator,
                   x0=None, burn_in: bool = True, chunk: int = 2000) -> CarmaPath:
    """Euler scheme dX = A X dt + e_p dL on a fine grid, observed every ``obs_step``.

    Driver increments over a fine step are stable with scale gamma*fine_step**(1/alpha)
    and location mu*fine_step.  ``driver=None`` gives the noiseless ODE.  With
    ``burn_in`` the path is started 10/|max Re lambda| time units before t=0.
    The fine-grid recursion is aggregated exactly to the observation grid.
    """
    report = _require_stationary(params)
    if not (0.0 < fine_step <= obs_step):
        raise DomainError("need 0 < fine_step <= obs_step")
    ratio = obs_step / fine_step
    K = int(round(ratio))
    if abs(K - ratio) > 1e-9 * ratio:
        raise DomainError("obs_step must be an integer multiple of fine_step")
    n_obs = int(round(horizon / obs_step)) + 1
    n_burn = int(math.ceil(10.0 / abs(report.eigenvalues.real.max()) / obs_step)) if burn_in else 0

    p = params.p
    M = np.eye(p) + params.A * fine_step
    powers = np.empty((K, p))
    v = params.e_p.copy()
    for j in range(K):  # powers[j] = M^(K-1-j) e_p
        powers[K - 1 - j] = v
        v = M @ v
    G = np.linalg.matrix_power(M, K)
    d, V = np.linalg.eig(G)
    Vinv = np.linalg.inv(V)

    total = n_burn + n_obs - 1
    xi = Vinv @ (np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).reshape(p))
    # recursion in eigen-coordinates: xi_{n+1} = d * xi_n + Vinv C_n
    collected = np.empty((total + 1, p), dtype=complex)
    collected[0] = xi
    pos = 0
    while pos < total:
        m = min(chunk, total - pos)
        if driver is None:
            contrib = np.zeros((m, p))
        else:
            step_law = StableParams(driver.alpha, driver.beta,
                                    driver.gamma * fine_step ** (1.0 / driver.alpha),
                                    driver.mu * fine_step)
            dL = sample_stable(step_law, rng, m * K).reshape(m, K)
            contrib = dL @ powers
        u = contrib @ Vinv.T
        block = np.empty((m, p), dtype=complex)
        for i in range(p):
            block[:, i], _ = signal.lfilter([1.0], [1.0, -d[i]], u[:, i], zi=[d[i] * xi[i]])
        xi = block[-1]
        collected[pos + 1:pos + 1 + m] = block
        pos += m
    kept = collected[n_burn:n_burn + n_obs]
    states = (kept @ V.T).real
    times = obs_step * np.arange(n_obs)
    return CarmaPath(times, states, states @ params.b_vec)


# ---------------------------------------------------------------------------
# discrete-time embedding


def estimate_arma_ar(y, p: int, intercept: bool = True, method: str = "iv") -> np.ndarray:
    """Least-squares AR(p) coefficients (phi_1..phi_p) of y_n on its p lags.

    A sampled CARMA(p, q) series is ARMA(p, p-1), so its innovations are
    correlated with the first p-1 lags and plain regression (``method="ols"``)
    is biased.  ``method="iv"`` (default) uses lags p..2p-1, which are
    uncorrelated with the p-dependent innovations, as instruments.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 10 * p:
        raise EstimationError(f"need at least {10 * p} observations for AR({p}), got {y.size}")
    if method not in ("ols", "iv"):
        raise ValueError(f"unknown method {method!r}")
    n = y.size
    start = p if method == "ols" else 2 * p - 1
    target = y[start:]
    X = np.column_stack([y[start - k:n - k] for k in range(1, p + 1)])
    Z = np.column_stack([y[start - k:n - k] for k in range(p, 2 * p)]) if method == "iv" else X
    if intercept:
        X = np.column_stack([np.ones(n - start), X])
        Z = np.column_stack([np.ones(n - start), Z])
    sv = np.linalg.svd(Z.T @ X, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise EstimationError("singular AR design (constant or collinear series)",
                              {"singular_values": sv.tolist()})
    coef = np.linalg.solve(Z.T @ X, Z.T @ target)
    return coef[1:] if intercept else coef


def fit_embedded_ar(y, p: int, h: float = 1.0, lam_bounds=(1e-3, 20.0)) -> np.ndarray:
    """Least-squares AR(p) coefficients restricted to sampled CARMA processes.

    Used when the unconstrained estimate has no CARMA embedding (a root inside
    the unit circle or on the negative real axis).  Minimizes the residual sum
    of squares of the demeaned series over phi = discrete_ar_coefficients(lambda, h)
    with real eigenvalues -lambda_i * h in ``lam_bounds``.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 10 * p:
        raise EstimationError(f"need at least {10 * p} observations for AR({p}), got {y.size}")
    x = y - y.mean()
    n = x.size
    target = x[p:]
    X = np.column_stack([x[p - k:n - k] for k in range(1, p + 1)])
    scale = float(target @ target) or 1.0
    lo, hi = (math.log(v / h) for v in lam_bounds)

    def loss(theta):
        r = target - X @ discrete_ar_coefficients(-np.exp(theta), h)
        return float(r @ r) / scale

    best = None
    for first in np.linspace(lo + 0.5, hi - 0.5, 4)[:3]:
        theta0 = np.clip(first + np.arange(p) * 1.5, lo, hi)
        res = optimize.minimize(loss, theta0, method="Nelder-Mead", bounds=[(lo, hi)] * p,
                                options={"xatol": 1e-8, "fatol": 1e-14, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    lam = -np.exp(best.x)
    if not np.isfinite(best.fun) or not _distinct(lam):
        raise EstimationError("constrained AR fit failed or collapsed to a repeated root",
                              {"lambda": lam.tolist()})
    return discrete_ar_coefficients(lam, h)


def discrete_ar_coefficients(lam, h: float = 1.0) -> np.ndarray:
    """phi with prod_i (1 - exp(lambda_i h) B) = 1 - phi_1 B - ... - phi_p B^p."""
    c = np.poly(np.exp(np.asarray(lam) * h))
    phi = -c[1:]
    if np.max(np.abs(phi.imag)) > 1e-10:
        raise DomainError("eigenvalues do not produce real AR coefficients")
    return phi.real


def ar_from_arma_roots(phi, h: float = 1.0):
    """Map AR coefficients of the sampled process to (lambda, a) of the CARMA model.

    The roots xi_i of 1 - phi_1 z - ... - phi_p z^p give lambda_i = -log(xi_i)/h.
    """
    phi = np.asarray(phi, dtype=float)
    coeffs = np.concatenate([-phi[::-1], [1.0]])
    while coeffs.size > 1 and coeffs[0] == 0.0:
        coeffs = coeffs[1:]
    if coeffs.size - 1 != phi.size:
        raise NotStationaryError("leading AR coefficient vanishes; order is lower than p")
    xi = np.roots(coeffs)
    if np.any(np.abs(xi) <= 1.0):
        raise NotStationaryError("AR polynomial has a root on or inside the unit circle",
                                 {"roots": xi.tolist()})
    if not _distinct(xi):
        raise NotStationaryError("AR polynomial roots are not distinct", {"roots": xi.tolist()})
    lam = -np.log(xi.astype(complex)) / h
    c = np.poly(lam)
    if np.max(np.abs(c.imag)) > 1e-8:
        raise NotStationaryError("roots do not come in conjugate pairs; no real CARMA embedding",
                                 {"lambda": lam.tolist()})
    order = np.argsort(-lam.real)
    return lam[order], tuple(c.real[1:])


# ---------------------------------------------------------------------------
# second-order structure


def stationary_covariance(params: CarmaParams) -> np.ndarray:
    """Sigma solving A Sigma + Sigma A' + e_p e_p' = 0 (Kronecker form)."""
    A = params.A
    p = params.p
    eye = np.eye(p)
    op = np.kron(eye, A) + np.kron(A, eye)
    rhs = -np.outer(params.e_p, params.e_p).reshape(-1, order="F")
    try:
        vec = np.linalg.solve(op, rhs)
    except np.linalg.LinAlgError as exc:
        raise NotStationaryError("Lyapunov operator is singular") from exc
    return vec.reshape(p, p, order="F")


def carma_autocov(params: CarmaParams, s) -> np.ndarray | float:
    """gamma_y(s) = b' exp(A|s|) Sigma b, per unit driver variance."""
    _require_stationary(params)
    sigma_b = stationary_covariance(params) @ params.b_vec
    b = params.b_vec
    s_arr = np.atleast_1d(np.abs(np.asarray(s, dtype=float)))
    out = np.array([b @ matrix_exp(params.A, float(v)) @ sigma_b for v in s_arr])
    return float(out[0]) if np.ndim(s) == 0 else out


def carma_acf(params: CarmaParams, lags, h: float = 1.0) -> np.ndarray:
    lags = np.asarray(lags, dtype=float)
    lam, V = np.linalg.eig(params.A)
    b = params.b_vec
    sigma_b = stationary_covariance(params) @ b
    left = b @ V
    right = np.linalg.solve(V, sigma_b)
    vals = (np.exp(np.outer(lags * h, lam)) * (left * right)).sum(axis=1).real
    return vals / float(b @ sigma_b)


def empirical_acf(y, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..max_lag (mean removed, biased normalization)."""
    y = np.asarray(y, dtype=float)
    d = y - y.mean()
    denom = float(d @ d)
    if denom == 0.0:
        raise EstimationError("constant series has no autocorrelation")
    return np.array([float(d[k:] @ d[:-k]) / denom for k in range(1, max_lag + 1)])


def estimate_ma_b(a, empirical, q: int = 1, h: float = 1.0) -> tuple:
    """MA coefficients by least absolute deviation between model and sample ACF.

    ``empirical`` holds sample autocorrelations at lags 1..K.  b_q is fixed at 1;
    for q = 1 the free coefficient is located by a grid search refined with golden
    section on b_0 >= 0 (the ACF depends on b_0 only through b_0**2).
    """
    a = tuple(float(v) for v in a)
    p = len(a)
    rho = np.asarray(empirical, dtype=float)
    lags = np.arange(1, rho.size + 1)
    if not 0 <= q < p:
        raise DomainError("need 0 <= q < p")
    if rho.size < q + 1:
        raise DomainError(f"need at least q+1={q + 1} autocorrelation lags")
    _require_stationary(CarmaParams(a))

    def full_b(free):
        b = np.zeros(p)
        b[:q] = free
        b[q] = 1.0
        return b

    def loss(free):
        try:
            model = carma_acf(CarmaParams(a, full_b(free)), lags, h)
        except (np.linalg.LinAlgError, DomainError):
            return np.inf
        return float(np.sum(np.abs(rho - model)))

    if q == 0:
        return tuple(full_b([]))
    if q == 1:
        grid = np.concatenate([[0.0], np.geomspace(1e-4, 1e3, 600)])
        vals = np.array([loss([g]) for g in grid])
        k = int(np.argmin(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = optimize.minimize_scalar(lambda v: loss([v]), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        best = res.x if res.fun <= vals[k] else grid[k]
        return tuple(full_b([best]))
    start = np.poly(-np.ones(q))[::-1][:q]  # b(z) = (z + 1)^q
    res = optimize.minimize(loss, start, method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 20000})
    if not np.isfinite(res.fun):
        raise EstimationError("LAD fit of the MA coefficients failed", {"message": res.message})
    return tuple(full_b(res.x))


# ---------------------------------------------------------------------------
# noise recovery and the induced stable law


def recover_noise(y, lam, h: float = 1.0) -> NoiseSeries:
    """Apply prod_i (1 - exp(lambda_i h) B) to y; returns eps_n for n = p..N-1."""
    y = np.asarray(y, dtype=float)
    phi = discrete_ar_coefficients(lam, h)
    p = phi.size
    if y.size <= p:
        raise DomainError("series shorter than the AR order")
    eps = y[p:].copy()
    for k in range(1, p + 1):
        eps -= phi[k - 1] * y[p - k:y.size - k]
    return NoiseSeries(eps, h)


def kappa(params: CarmaParams) -> np.ndarray:
    """kappa_i = b(lambda_i) / a'(lambda_i)."""
    lam = eigenvalues(params.A)
    lam = lam[np.argsort(-lam.real)]
    a_poly = np.concatenate([[1.0], params.a])
    return _b_poly(params, lam) / np.polyval(np.polyder(a_poly), lam)


def noise_kernels(params: CarmaParams, h: float = 1.0, kernel: str = "exact"):
    """Deterministic kernels g_m on [0, h] with eps_n = sum_m int g_m dL over window n-m.

    ``exact`` expands prod_{j != i}(1 - exp(lambda_j h) B) applied to the
    one-step integrals of each eigen-component; the lagged windows carry the
    coefficients of that product.  ``same-sign`` (p = 2 only) is the simplified
    form in which the lagged window enters with a positive sign and an extra
    discount exp(lambda_i h); it reproduces the reference driver skewness exactly.
    """
    _require_stationary(params)
    lam = eigenvalues(params.A)
    lam = lam[np.argsort(-lam.real)]
    k = kappa(params)
    r = np.exp(lam * h)
    p = params.p
    if kernel == "exact":
        coef = np.zeros((p, p), dtype=complex)  # coef[m, i]
        for i in range(p):
            c = np.poly(np.delete(r, i))  # prod_{j != i} (z - r_j) -> coefficients of (1 - r_j B)
            coef[:, i] = k[i] * c
        return [(lambda w, c=coef[m]: float(np.real(np.sum(c * np.exp(lam * (h - w))))))
                for m in range(p)]
    if kernel == "same-sign":
        if p != 2:
            raise NotImplementedError("the same-sign kernel form is defined for p = 2 only")
        c0 = k
        c1 = k * r[::-1]
        return [(lambda w, c=c: float(np.real(np.sum(c * np.exp(lam * (h - w)))))) for c in (c0, c1)]
    raise ValueError(f"unknown kernel form {kernel!r}")


def _kernel_moments(params, alpha, h, kernel):
    abs_pow = signed_pow = total = 0.0
    for g in noise_kernels(params, h, kernel):
        opts = dict(limit=200, epsabs=1e-13, epsrel=1e-12)
        abs_pow += integrate.quad(lambda w: abs(g(w)) ** alpha, 0.0, h, **opts)[0]
        signed_pow += integrate.quad(lambda w: math.copysign(abs(g(w)) ** alpha, g(w)), 0.0, h, **opts)[0]
        total += integrate.quad(g, 0.0, h, **opts)[0]
    if kernel == "same-sign":
        total = 1.0
    return abs_pow, signed_pow, total


def epsilon_stable_params(params: CarmaParams, driver: StableParams, h: float = 1.0,
                          kernel: str = "exact") -> StableParams:
    """Stable law of the sampled-CARMA innovations eps_n induced by the driver L."""
    abs_pow, signed_pow, total = _kernel_moments(params, driver.alpha, h, kernel)
    gamma = driver.gamma * abs_pow ** (1.0 / driver.alpha)
    beta = driver.beta * signed_pow / abs_pow
    return StableParams(driver.alpha, float(np.clip(beta, -1.0, 1.0)), gamma, driver.mu * total)


def map_epsilon_to_L(eps_params: StableParams, params: CarmaParams, h: float = 1.0,
                     kernel: str = "exact") -> StableParams:
    """Invert :func:`epsilon_stable_params` for the driver law."""
    abs_pow, signed_pow, total = _kernel_moments(params, eps_params.alpha, h, kernel)
    gamma = eps_params.gamma / abs_pow ** (1.0 / eps_params.alpha)
    if signed_pow == 0.0:
        beta = 0.0
    else:
        beta = eps_params.beta * abs_pow / signed_pow
    if abs(beta) > 1.0:
        log.debug("driver skewness %.4f outside [-1, 1]; clipped", beta)
        beta = float(np.clip(beta, -1.0, 1.0))
    if total == 0.0:
        raise DomainError("kernel integrates to zero; driver location is not identified")
    return StableParams(eps_params.alpha, float(beta), gamma, eps_params.mu / total)
