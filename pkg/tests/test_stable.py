import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from carmaspot.errors import DomainError, EstimationError, InfeasibleError
from carmaspot.stable import (
    StableParams,
    TemperedTail,
    estimate_stable,
    sample_stable,
    solve_theta_L,
    stable_c_pm,
    stable_cdf,
    stable_char_exponent,
    stable_pdf,
    stable_ppf,
    tempered_mean_shift,
)

from conftest import BASE_DRIVER, PEAK_DRIVER

alphas = st.floats(1.05, 1.95)
betas = st.floats(-1.0, 1.0)
gammas = st.floats(0.1, 10.0)


# --- independent oracles -------------------------------------------------------

def cf(params, z):
    return np.exp(stable_char_exponent(params, z))


def pdf_oracle(params, x):
    """Fourier inversion by adaptive quadrature."""
    f = lambda z: (np.exp(-1j * z * x) * cf(params, z)).real
    return integrate.quad(f, 0.0, np.inf, limit=500, epsabs=1e-12)[0] / math.pi


def cdf_oracle(params, x):
    """Gil-Pelaez inversion formula."""
    f = lambda z: (np.exp(-1j * z * x) * cf(params, z)).imag / z
    return 0.5 - integrate.quad(f, 0.0, np.inf, limit=500, epsabs=1e-12)[0] / math.pi


def mean_shift_oracle(params, theta):
    """int x (exp(theta |x|) - 1) nu(dx) with nu(dx) = c+- |x|^{-1-alpha} dx on each half-line."""
    cp, cm = stable_c_pm(params)
    a = params.alpha
    g = lambda x: x ** (-a) * np.expm1(theta * x)
    half = integrate.quad(g, 0.0, 1.0, limit=200)[0] + integrate.quad(g, 1.0, np.inf, limit=200)[0]
    return (cp - cm) * half


# --- construction ----------------------------------------------------------------

def test_alpha_one_rejected():
    with pytest.raises(DomainError):
        StableParams(1.0, 0.0, 1.0)


@pytest.mark.parametrize("kw", [dict(alpha=2.1, beta=0, gamma=1), dict(alpha=1.5, beta=1.2, gamma=1),
                                dict(alpha=1.5, beta=0, gamma=0.0)])
def test_invalid_params_rejected(kw):
    with pytest.raises(DomainError):
        StableParams(**kw)


def test_tempered_tail_invariants():
    with pytest.raises(DomainError):
        TemperedTail(0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        TemperedTail(-1.0, 0.0, 0.0)


# --- characteristic exponent ------------------------------------------------------

def test_char_exponent_gaussian_branch():
    assert stable_char_exponent(StableParams(2.0, 0.0, 1.0, 0.0), 1.0) == pytest.approx(-1.0 + 0j, abs=1e-15)


def test_char_exponent_location_shift():
    z = 0.1
    p0 = BASE_DRIVER
    p5 = StableParams(p0.alpha, p0.beta, p0.gamma, 5.0)
    diff = stable_char_exponent(p5, z) - stable_char_exponent(p0, z)
    assert diff == pytest.approx(5j * z, abs=1e-14)


def test_empirical_characteristic_function():
    rng = np.random.default_rng(1)
    x = sample_stable(BASE_DRIVER, rng, 10 ** 6)
    for z in (0.05, 0.1, 0.5):
        e = np.exp(1j * z * x)
        emp = e.mean()
        se = math.sqrt((np.var(e.real) + np.var(e.imag)) / x.size)
        assert abs(emp - cf(BASE_DRIVER, z)) < 3 * se


# --- sampler -----------------------------------------------------------------------

def test_gaussian_case_variance():
    x = sample_stable(StableParams(2.0, 0.0, 1.0, 0.0), np.random.default_rng(2), 10 ** 6)
    # variance of the sample variance of N(0, 2) is 2 * 2^2 / n
    assert abs(x.var() - 2.0) < 3 * math.sqrt(8.0 / x.size)


def test_gaussian_case_normality():
    x = sample_stable(StableParams(2.0, 0.0, 1.0, 0.0), np.random.default_rng(3), 10 ** 5)
    assert stats.normaltest(x).pvalue > 0.01


def test_totally_skewed_positive_support():
    x = sample_stable(StableParams(0.5, 1.0, 1.0, 0.0), np.random.default_rng(4), 10 ** 5)
    assert np.all(x > 0.0)


def test_sampler_deterministic():
    a = sample_stable(BASE_DRIVER, np.random.default_rng(7), 100)
    b = sample_stable(BASE_DRIVER, np.random.default_rng(7), 100)
    assert np.array_equal(a, b)


def test_sampler_quantiles_match_inversion():
    n = 10 ** 6
    x = sample_stable(BASE_DRIVER, np.random.default_rng(5), n)
    for q in (0.05, 0.5, 0.95):
        target = optimize.brentq(lambda v: cdf_oracle(BASE_DRIVER, v) - q, -200, 200, xtol=1e-10)
        se = math.sqrt(q * (1 - q) / n) / pdf_oracle(BASE_DRIVER, target)
        assert abs(np.quantile(x, q) - target) < 3.5 * se


# --- density --------------------------------------------------------------------------

@pytest.mark.parametrize("params", [BASE_DRIVER, PEAK_DRIVER, StableParams(1.9, -0.7, 0.5, 1.0)])
def test_density_matches_quadrature(params):
    for x in params.mu + params.gamma * np.array([-30.0, -3.0, -0.5, 0.0, 0.7, 4.0, 60.0]):
        assert stable_pdf(x, params) == pytest.approx(pdf_oracle(params, x), abs=1e-8, rel=1e-6)


def test_cdf_and_ppf_consistent():
    qs = np.array([0.01, 0.2, 0.5, 0.8, 0.99])
    xs = stable_ppf(qs, BASE_DRIVER)
    assert np.allclose(stable_cdf(xs, BASE_DRIVER), qs, atol=1e-7)
    assert stable_cdf(xs[2], BASE_DRIVER) == pytest.approx(cdf_oracle(BASE_DRIVER, xs[2]), abs=1e-7)


# --- estimation --------------------------------------------------------------------------

def test_estimate_round_trip_base():
    x = sample_stable(BASE_DRIVER, np.random.default_rng(6), 10 ** 5)
    est = estimate_stable(x)
    assert abs(est.alpha - BASE_DRIVER.alpha) < 0.03
    assert abs(est.beta - BASE_DRIVER.beta) < 0.06
    assert abs(est.gamma / BASE_DRIVER.gamma - 1) < 0.02
    assert abs(est.mu - BASE_DRIVER.mu) < 0.3


def test_estimate_quantile_mode_close_to_truth():
    x = sample_stable(PEAK_DRIVER, np.random.default_rng(8), 10 ** 5)
    est = estimate_stable(x, method="quantile")
    assert abs(est.alpha - PEAK_DRIVER.alpha) < 0.05
    assert abs(est.gamma / PEAK_DRIVER.gamma - 1) < 0.05


def test_estimate_gaussian_boundary():
    x = np.random.default_rng(9).standard_normal(10 ** 5)
    est = estimate_stable(x)
    assert 1.95 <= est.alpha <= 2.0


def test_estimate_degenerate_and_short_samples():
    with pytest.raises(EstimationError):
        estimate_stable(np.ones(500))
    with pytest.raises(EstimationError):
        estimate_stable(np.arange(100.0))


# --- c+- and tempering ---------------------------------------------------------------------

@pytest.mark.parametrize("params,expected", [(BASE_DRIVER, (14.9715, 6.5532)), (PEAK_DRIVER, (6.3342, 5.5587))])
def test_c_pm_fixtures(params, expected):
    assert stable_c_pm(params) == pytest.approx(expected, abs=5e-4)


def test_c_pm_symmetric():
    cp, cm = stable_c_pm(StableParams(1.5, 0.0, 2.0))
    assert cp == cm == pytest.approx(2.0 ** 1.5 / 2)


@given(alphas, betas, gammas)
def test_c_pm_identities(alpha, beta, gamma):
    p = StableParams(alpha, beta, gamma)
    cp, cm = stable_c_pm(p)
    total = gamma ** alpha
    assert cp + cm == pytest.approx(total, rel=1e-13)
    assert cp - cm == pytest.approx(beta * total, rel=1e-12, abs=1e-12 * total)


def test_mean_shift_symmetric_is_zero():
    assert tempered_mean_shift(StableParams(1.5, 0.0, 3.0), -0.5) == 0.0


def test_mean_shift_vanishes_without_tempering():
    shifts = [abs(tempered_mean_shift(BASE_DRIVER, -th)) for th in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(b < a for a, b in zip(shifts, shifts[1:]))
    assert shifts[-1] < 1e-3


def test_mean_shift_base_fixture_and_quadrature():
    shift = tempered_mean_shift(BASE_DRIVER, -0.0021)
    assert shift == pytest.approx(-0.5848, abs=0.03)  # inputs are rounded to four digits
    assert shift == pytest.approx(mean_shift_oracle(BASE_DRIVER, -0.0021), rel=1e-7)


@given(alphas, betas.filter(lambda b: abs(b) > 0.01), gammas, st.floats(-5.0, -1e-4))
def test_mean_shift_matches_quadrature(alpha, beta, gamma, theta):
    p = StableParams(alpha, beta, gamma)
    assert tempered_mean_shift(p, theta) == pytest.approx(mean_shift_oracle(p, theta), rel=1e-6)


@pytest.mark.parametrize("params,target,expected,tol", [
    (BASE_DRIVER, -0.5848, -0.0021, 3e-4),
    (PEAK_DRIVER, -1.2730, -0.0552, 1e-3),
])
def test_solve_theta_L_fixtures(params, target, expected, tol):
    theta = solve_theta_L(params, target)
    assert theta == pytest.approx(expected, abs=tol)
    assert tempered_mean_shift(params, theta) == pytest.approx(target, rel=1e-10)


def test_solve_theta_L_boundary_and_sign():
    with pytest.raises(InfeasibleError):
        solve_theta_L(BASE_DRIVER, 0.0)
    with pytest.raises(InfeasibleError):
        solve_theta_L(BASE_DRIVER, +0.5)  # c+ > c- makes every tempering shift negative


def test_tempering_requires_finite_mean():
    with pytest.raises(DomainError):
        tempered_mean_shift(StableParams(0.8, 0.5, 1.0), -0.1)


@given(alphas, betas.filter(lambda b: abs(b) > 1e-3), gammas, st.floats(-20.0, -1e-6))
def test_solve_inverts_shift(alpha, beta, gamma, theta):
    p = StableParams(alpha, beta, gamma)
    shift = tempered_mean_shift(p, theta)
    assume(shift != 0.0 and math.isfinite(shift))
    assert solve_theta_L(p, shift) == pytest.approx(theta, rel=1e-8)


@given(alphas, betas.filter(lambda b: abs(b) > 1e-3), gammas,
       st.floats(-10.0, -1e-4), st.floats(1.01, 3.0))
def test_shift_strictly_monotone(alpha, beta, gamma, theta, factor):
    p = StableParams(alpha, beta, gamma)
    a, b = tempered_mean_shift(p, theta), tempered_mean_shift(p, theta * factor)
    # stronger tempering moves the mean further in the direction of -(c+ - c-)
    assert abs(b) > abs(a)
    assert np.sign(a) == np.sign(b)
