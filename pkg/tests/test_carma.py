import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, signal

from carmaspot.carma import (
    CarmaParams,
    CarmaState,
    ar_from_arma_roots,
    burn_in_steps,
    carma_acf,
    carma_autocov,
    check_stationarity,
    companion_matrix,
    discrete_ar_coefficients,
    eigenvalues,
    empirical_acf,
    epsilon_stable_params,
    estimate_arma_ar,
    estimate_ma_b,
    fit_embedded_ar,
    kappa,
    map_epsilon_to_L,
    matrix_exp,
    noise_kernels,
    recover_noise,
    simulate_carma,
    stationary_covariance,
)
from carmaspot.errors import DomainError, EstimationError, NotStationaryError
from carmaspot.stable import StableParams, estimate_stable, sample_stable

from conftest import BASE_CARMA, BASE_DRIVER, PEAK_CARMA, base_long_path


@st.composite
def stationary_models(draw, max_p=3):
    """CARMA(p, p-1) models with distinct negative real eigenvalues or a complex pair."""
    p = draw(st.integers(1, max_p))
    rates = sorted(draw(st.lists(st.floats(0.05, 3.0), min_size=p, max_size=p, unique=True)))
    lam = -np.array(rates, dtype=complex)
    if p >= 2 and draw(st.booleans()):
        im = draw(st.floats(0.1, 2.0))
        lam[0] = complex(-rates[0], im)
        lam[1] = complex(-rates[0], -im)
    if not np.all(np.diff(np.sort_complex(lam)) != 0) or min(
            abs(x - y) for i, x in enumerate(lam) for y in lam[i + 1:]) < 1e-3 if p > 1 else False:
        lam = -np.arange(1, p + 1, dtype=complex) * 0.5
    a = tuple(np.poly(lam).real[1:])
    b = tuple(draw(st.lists(st.floats(0.1, 2.0), min_size=p - 1, max_size=p - 1))) + (1.0,)
    model = CarmaParams(a, b)
    if not check_stationarity(model):
        model = CarmaParams(a)
    return model


def det_laplace(M):
    """Determinant by cofactor expansion along the first row."""
    n = len(M)
    if n == 1:
        return M[0][0]
    return sum((-1) ** j * M[0][j] * det_laplace([row[:j] + row[j + 1:] for row in M[1:]]) for j in range(n))


# --- structure ---------------------------------------------------------------------

def test_companion_p1():
    assert companion_matrix(CarmaParams((0.5,))).tolist() == [[-0.5]]


def test_companion_p2_layout():
    A = companion_matrix(CarmaParams((1.4854, 0.0911)))
    assert A.tolist() == [[0.0, 1.0], [-0.0911, -1.4854]]


@pytest.mark.parametrize("a", [(0.7,), (1.5, 0.3), (2.0, -1.0, 0.5), (0.3, 1.1, -0.4, 2.0)])
def test_characteristic_polynomial_by_cofactors(a):
    A = companion_matrix(CarmaParams(a))
    p = len(a)
    for lam in (-1.3, 0.2, 2.7):
        M = (A - lam * np.eye(p)).tolist()
        expected = (-1) ** p * np.polyval(np.concatenate([[1.0], a]), lam)
        assert det_laplace(M) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_b_normalization_enforced():
    with pytest.raises(DomainError):
        CarmaParams((1.0, 0.2), (0.3, 2.0))
    assert CarmaParams((1.0, 0.2, 0.1), (0.5, 1.0)).b == (0.5, 1.0, 0.0)
    assert CarmaParams((1.0, 0.2, 0.1), (0.5, 1.0)).q == 1


def test_state_dimension():
    assert CarmaState([1.0, 2.0]).x.shape == (2,)


@pytest.mark.parametrize("model,expected", [(BASE_CARMA, (-0.0641, -1.4213)), (PEAK_CARMA, (-0.1014, -2.2319))])
def test_reference_eigenvalues(model, expected):
    lam = np.sort(eigenvalues(model.A).real)[::-1]
    assert lam == pytest.approx(expected, abs=5e-4)  # a is rounded to four digits
    report = check_stationarity(model)
    assert report.ok and not report.reasons


def test_double_root():
    lam = eigenvalues(companion_matrix(CarmaParams((2.0, 1.0))))
    assert lam == pytest.approx([-1.0, -1.0], abs=1e-6)
    report = check_stationarity(CarmaParams((2.0, 1.0)))
    assert not report and any("distinct" in r for r in report.reasons)


def test_unstable_rejected():
    report = check_stationarity(CarmaParams((-1.0, 0.25)))
    assert not report and any("real part" in r for r in report.reasons)


def test_common_root_rejected():
    # a(z) = (z+1)(z+2), b(z) = z + 1
    report = check_stationarity(CarmaParams((3.0, 2.0), (1.0, 1.0)))
    assert not report and any("share" in r for r in report.reasons)


# --- matrix exponential ------------------------------------------------------------------

def test_matrix_exp_basics():
    assert np.array_equal(matrix_exp(BASE_CARMA.A, 0.0), np.eye(2))
    assert matrix_exp(CarmaParams((0.7,)).A, 2.0)[0, 0] == pytest.approx(math.exp(-1.4), rel=1e-14)


def test_matrix_exp_taylor_oracle():
    A = BASE_CARMA.A
    term = np.eye(2)
    total = np.eye(2)
    for k in range(1, 41):
        term = term @ A / k
        total = total + term
    assert np.allclose(matrix_exp(A, 1.0), total, rtol=0, atol=1e-10)


def test_matrix_exp_repeated_eigenvalue_fallback():
    A = companion_matrix(CarmaParams((2.0, 1.0)))
    t = 0.7
    exact = math.exp(-t) * np.array([[1 + t, t], [-t, 1 - t]])
    assert np.allclose(matrix_exp(A, t), exact, atol=1e-12)


@given(stationary_models(), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_matrix_exp_semigroup(model, s, t):
    A = model.A
    lhs = matrix_exp(A, s) @ matrix_exp(A, t)
    assert np.allclose(lhs, matrix_exp(A, s + t), rtol=0, atol=1e-10 * max(1.0, np.abs(lhs).max()))


# --- simulation ----------------------------------------------------------------------------

def test_noiseless_simulation_follows_ode():
    x0 = np.array([1.0, -0.5])
    path = simulate_carma(BASE_CARMA, None, 20.0, 0.01, 1.0, np.random.default_rng(0), x0=x0, burn_in=False)
    exact = np.array([matrix_exp(BASE_CARMA.A, t) @ x0 for t in path.times])
    # Euler error is first order in the step
    assert np.max(np.abs(path.states - exact)) < 0.01
    finer = simulate_carma(BASE_CARMA, None, 20.0, 0.001, 1.0, np.random.default_rng(0), x0=x0, burn_in=False)
    assert np.max(np.abs(finer.states - exact)) < 0.2 * np.max(np.abs(path.states - exact))


def test_simulation_deterministic_and_shapes():
    a = simulate_carma(BASE_CARMA, BASE_DRIVER, 50, 0.01, 1.0, np.random.default_rng(3))
    b = simulate_carma(BASE_CARMA, BASE_DRIVER, 50, 0.01, 1.0, np.random.default_rng(3))
    assert a.states.shape == (51, 2) and np.array_equal(a.y, b.y)
    assert np.allclose(a.y, a.states @ BASE_CARMA.b_vec)


def test_simulation_rejects_bad_input():
    with pytest.raises(NotStationaryError):
        simulate_carma(CarmaParams((-1.0, 0.25)), BASE_DRIVER, 10, 0.01, 1.0, np.random.default_rng(0))
    with pytest.raises(DomainError):
        simulate_carma(BASE_CARMA, BASE_DRIVER, 10, 0.3, 1.0, np.random.default_rng(0))


def test_simulated_acf_matches_model_at_four_years():
    path = simulate_carma(BASE_CARMA, BASE_DRIVER, 1461, 0.01, 1.0, np.random.default_rng(21))
    emp = empirical_acf(path.y, 5)
    model = carma_acf(BASE_CARMA, np.arange(1, 6))
    # heavy tails and strong persistence make the sampling band wide at n = 1461
    assert np.max(np.abs(emp - model)) < 0.15


def test_gaussian_driver_variance():
    model = CarmaParams((3.0, 2.0), (0.5, 1.0))
    gamma = 0.7
    path = simulate_carma(model, StableParams(2.0, 0.0, gamma, 0.0), 2 * 10 ** 4, 0.01, 1.0,
                          np.random.default_rng(22))
    b = model.b_vec
    theory = float(b @ stationary_covariance(model) @ b) * 2 * gamma ** 2
    assert path.y.var() == pytest.approx(theory, rel=0.05)


# --- discrete embedding ---------------------------------------------------------------------

@pytest.mark.parametrize("method,tol", [("ols", 0.02), ("iv", 0.05)])
def test_ar_recovery_exact_recursion(method, tol):
    rng = np.random.default_rng(23)
    eps = sample_stable(StableParams(1.7, 0.3, 1.0, 0.0), rng, 10 ** 5)
    y = signal.lfilter([1.0], [1.0, -0.9, 0.05], eps)
    phi = estimate_arma_ar(y, 2, method=method)
    assert phi == pytest.approx((0.9, -0.05), abs=tol)


def test_ar_null_model():
    y = sample_stable(StableParams(1.7, 0.0, 1.0, 0.0), np.random.default_rng(24), 10 ** 5)
    assert np.all(np.abs(estimate_arma_ar(y, 2, method="ols")) < 0.02)


def test_ar_singular_design():
    with pytest.raises(EstimationError):
        estimate_arma_ar(np.full(200, 3.0), 2)
    with pytest.raises(EstimationError):
        estimate_arma_ar(np.arange(10.0), 2)


def test_embedding_round_trip_on_simulated_base():
    path = base_long_path()
    lam, _ = ar_from_arma_roots(estimate_arma_ar(path.y, 2), 1.0)
    assert lam.real == pytest.approx((-0.0641, -1.4213), abs=0.05)


def test_least_squares_is_biased_for_sampled_carma():
    # the innovations of a sampled CARMA(2,1) are MA(1); plain regression on the lags is inconsistent
    path = base_long_path()
    lam_iv, _ = ar_from_arma_roots(estimate_arma_ar(path.y, 2, method="iv"), 1.0)
    phi_ols = estimate_arma_ar(path.y, 2, method="ols")
    true_phi = discrete_ar_coefficients(eigenvalues(BASE_CARMA.A), 1.0)
    assert np.max(np.abs(phi_ols - true_phi)) > 0.2
    assert np.max(np.abs(discrete_ar_coefficients(lam_iv, 1.0) - true_phi)) < 0.05


def test_ar_from_roots_p1():
    lam, a = ar_from_arma_roots([math.exp(-1.0)], 1.0)
    assert lam[0].real == pytest.approx(-1.0, abs=1e-14) and a == pytest.approx((1.0,))


def test_ar_from_roots_reference():
    lam = np.array([-0.0641, -1.4213])
    phi = (math.exp(lam[0]) + math.exp(lam[1]), -math.exp(lam.sum()))
    _, a = ar_from_arma_roots(phi, 1.0)
    assert a == pytest.approx((1.4854, 0.0911), abs=1e-4)


def test_ar_from_roots_scaling_in_h():
    phi = (1.2, -0.3)
    lam1, _ = ar_from_arma_roots(phi, 1.0)
    lam_half, _ = ar_from_arma_roots(phi, 0.5)
    assert lam_half == pytest.approx(2 * lam1, rel=1e-13)


def test_ar_from_roots_rejections():
    with pytest.raises(NotStationaryError):
        ar_from_arma_roots((1.2, -0.1), 1.0)  # root inside the unit circle
    with pytest.raises(NotStationaryError):
        ar_from_arma_roots((0.6, 0.09), 1.0)  # negative real root: no real embedding
    with pytest.raises(NotStationaryError):
        ar_from_arma_roots((1.0, -0.25), 1.0)  # repeated root


@given(stationary_models(max_p=3), st.sampled_from([0.5, 1.0, 2.0]))
def test_ar_from_roots_inverts_exact_coefficients(model, h):
    lam = eigenvalues(model.A)
    if np.max(np.abs(lam.imag)) * h >= math.pi:
        return  # aliased frequencies are not identifiable from the sampled process
    got, a = ar_from_arma_roots(discrete_ar_coefficients(lam, h), h)
    assert np.allclose(np.sort_complex(got), np.sort_complex(lam), atol=1e-10)
    assert np.allclose(a, model.a, atol=1e-9)


def test_embedded_fallback_returns_embeddable_roots():
    path = simulate_carma(CarmaParams((1.2, 0.2), (0.5, 1.0)), StableParams(1.8, 0.8, 0.3, 0.0),
                          1460, 0.01, 1.0, np.random.default_rng(5))
    phi = fit_embedded_ar(path.y, 2, 1.0)
    lam, a = ar_from_arma_roots(phi, 1.0)
    assert np.all(lam.real < 0) and np.all(lam.imag == 0)


# --- second-order structure -------------------------------------------------------------------

def test_acf_basics():
    assert carma_acf(BASE_CARMA, [0.0])[0] == pytest.approx(1.0, abs=1e-14)
    ou = CarmaParams((0.8,))
    s = np.array([0.5, 1.0, 3.0])
    assert carma_acf(ou, s) == pytest.approx(np.exp(-0.8 * s), rel=1e-12)
    assert carma_autocov(ou, 0.0) == pytest.approx(1 / 1.6, rel=1e-12)


def test_autocov_and_acf_agree():
    s = np.array([0.0, 1.0, 2.0, 7.5])
    cov = carma_autocov(BASE_CARMA, s)
    assert carma_acf(BASE_CARMA, s) == pytest.approx(cov / cov[0], rel=1e-10)


@given(stationary_models())
def test_lyapunov_residual(model):
    A = model.A
    S = stationary_covariance(model)
    resid = A @ S + S @ A.T + np.outer(model.e_p, model.e_p)
    assert np.max(np.abs(resid)) < 1e-10 * max(1.0, np.max(np.abs(S)))


def test_lyapunov_residual_base():
    A = BASE_CARMA.A
    S = stationary_covariance(BASE_CARMA)
    assert np.max(np.abs(A @ S + S @ A.T + np.outer(BASE_CARMA.e_p, BASE_CARMA.e_p))) < 1e-10


def test_gaussian_simulation_acf():
    path = simulate_carma(BASE_CARMA, StableParams(2.0, 0.0, 1.0, 0.0), 2 * 10 ** 5, 0.01, 1.0,
                          np.random.default_rng(25))
    emp = empirical_acf(path.y, 3)
    assert emp == pytest.approx(carma_acf(BASE_CARMA, [1, 2, 3]), abs=0.02)


# --- MA fit -----------------------------------------------------------------------------------

def test_ma_fit_fully_constrained():
    assert estimate_ma_b((1.0, 0.2), [0.5, 0.3], q=0) == (1.0, 0.0)


def test_ma_fit_exact_acf():
    rho = carma_acf(BASE_CARMA, np.arange(1, 21))
    b = estimate_ma_b(BASE_CARMA.a, rho, q=1)
    assert b[0] == pytest.approx(0.2861, abs=1e-4)


def test_ma_fit_simulated():
    path = base_long_path()
    _, a = ar_from_arma_roots(estimate_arma_ar(path.y, 2), 1.0)
    b = estimate_ma_b(a, empirical_acf(path.y, 20), q=1)
    assert abs(b[0] - 0.2861) < 0.05


def test_ma_fit_general_q():
    model = CarmaParams((3.0, 2.5, 0.6), (0.8, 1.5, 1.0))
    rho = carma_acf(model, np.arange(1, 21))
    b = estimate_ma_b(model.a, rho, q=2)
    assert np.allclose(carma_acf(CarmaParams(model.a, b), np.arange(1, 21)), rho, atol=1e-5)


# --- noise recovery and the epsilon <-> L map ---------------------------------------------------

def test_recover_noise_inverts_recursion():
    lam = np.array([-0.2, -1.3])
    phi = discrete_ar_coefficients(lam, 1.0)
    eps = np.random.default_rng(26).standard_normal(500)
    y = signal.lfilter([1.0], np.concatenate([[1.0], -phi]), eps)
    rec = recover_noise(y, lam, 1.0)
    assert np.allclose(rec.eps, eps[2:], rtol=0, atol=1e-12)


def test_recovered_noise_is_p_dependent():
    path = base_long_path()
    eps = recover_noise(path.y, eigenvalues(BASE_CARMA.A), 1.0).eps
    # heavy tails: use signs, which have finite variance
    s = np.sign(eps - np.median(eps))
    r = [np.mean(s[k:] * s[:-k]) for k in range(3, 8)]
    assert np.max(np.abs(r)) < 4 / math.sqrt(s.size)


def test_gaussian_noise_variance_matches_kernels():
    model = BASE_CARMA
    gamma = 1.0
    path = simulate_carma(model, StableParams(2.0, 0.0, gamma, 0.0), 2 * 10 ** 5, 0.01, 1.0,
                          np.random.default_rng(27))
    eps = recover_noise(path.y, eigenvalues(model.A), 1.0).eps
    kern = sum(integrate.quad(lambda w: g(w) ** 2, 0.0, 1.0)[0] for g in noise_kernels(model, 1.0))
    assert eps.var() == pytest.approx(2 * gamma ** 2 * kern, rel=0.03)


def test_kappa_reference():
    assert np.sort(kappa(BASE_CARMA).real) == pytest.approx((0.1636, 0.8364), abs=1e-4)


def test_same_sign_kernel_keeps_skewness():
    # the simplified kernel form has both windows positive when both kappa are positive
    eps = epsilon_stable_params(BASE_CARMA, BASE_DRIVER, 1.0, kernel="same-sign")
    assert eps.beta == pytest.approx(BASE_DRIVER.beta, abs=1e-12)
    assert eps.mu == BASE_DRIVER.mu
    assert map_epsilon_to_L(eps, BASE_CARMA, 1.0, kernel="same-sign").beta == pytest.approx(BASE_DRIVER.beta)


def test_epsilon_law_matches_simulation():
    path = base_long_path()
    eps = recover_noise(path.y, eigenvalues(BASE_CARMA.A), 1.0).eps
    est = estimate_stable(eps, method="quantile")
    pred = epsilon_stable_params(BASE_CARMA, BASE_DRIVER, 1.0)
    assert est.alpha == pytest.approx(pred.alpha, abs=0.05)
    assert est.gamma == pytest.approx(pred.gamma, rel=0.04)
    assert est.beta == pytest.approx(pred.beta, abs=0.1)


def test_epsilon_location_uses_kernel_mass():
    driver = StableParams(1.6524, 0.3911, 6.4072, 1.0)
    pred = epsilon_stable_params(BASE_CARMA, driver, 1.0)
    mass = sum(integrate.quad(g, 0.0, 1.0)[0] for g in noise_kernels(BASE_CARMA, 1.0))
    assert pred.mu == pytest.approx(mass, rel=1e-10)


def test_same_sign_kernel_only_for_p2():
    with pytest.raises(NotImplementedError):
        noise_kernels(CarmaParams((3.0, 2.5, 0.6), (0.8, 1.0)), 1.0, kernel="same-sign")


@given(stationary_models(max_p=3), st.floats(1.2, 1.95), st.floats(-0.9, 0.9), st.floats(0.1, 5.0),
       st.floats(-2.0, 2.0))
def test_epsilon_map_inverse(model, alpha, beta, gamma, mu):
    driver = StableParams(alpha, beta, gamma, mu)
    eps = epsilon_stable_params(model, driver, 1.0)
    if abs(eps.beta) >= 1.0 - 1e-12:
        return  # clipped values are not invertible
    back = map_epsilon_to_L(eps, model, 1.0)
    assert (back.alpha, back.beta, back.gamma, back.mu) == pytest.approx(
        (alpha, beta, gamma, mu), rel=1e-8, abs=1e-8)


def test_end_to_end_driver_recovery():
    path = base_long_path()
    eps = recover_noise(path.y, eigenvalues(BASE_CARMA.A), 1.0).eps
    back = map_epsilon_to_L(estimate_stable(eps), BASE_CARMA, 1.0)
    assert abs(back.alpha - BASE_DRIVER.alpha) < 0.05
    assert back.gamma == pytest.approx(BASE_DRIVER.gamma, rel=0.05)
    assert abs(back.beta - BASE_DRIVER.beta) < 0.15


def test_burn_in():
    assert burn_in_steps(BASE_CARMA, 1.0) == math.ceil(10 / 0.0641 - 1e-9) or \
        burn_in_steps(BASE_CARMA, 1.0) == math.ceil(10 / abs(eigenvalues(BASE_CARMA.A).real.max()))
