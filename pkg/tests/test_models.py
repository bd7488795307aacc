import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swingcvx.models import (FactorState, ModelError, ModelSpec, cholesky_explicit, factor_transition, gamma_matrix,
                             lambda_sq, spot_price, uniform_times, vol_field_multifactor)


def test_gamma_identity_at_zero():
    np.testing.assert_array_equal(gamma_matrix(0.0, 3), np.eye(3))


def test_gamma_equicorrelation():
    G = gamma_matrix(0.5, 3)
    assert np.all(np.diag(G) == 1.0)
    assert np.all(G[~np.eye(3, dtype=bool)] == 0.5)


def test_gamma_two_by_two_eigenvalues():
    G = gamma_matrix(-0.6, 2)
    np.testing.assert_allclose(G, [[1, -0.6], [-0.6, 1]])
    np.testing.assert_allclose(np.linalg.eigvalsh(G), [0.4, 1.6])


@pytest.mark.parametrize("rho,q", [(1.0, 3), (-0.5, 3), (1.2, 2), (-1.0, 2)])
def test_rho_outside_range_rejected(rho, q):
    with pytest.raises(ModelError):
        gamma_matrix(rho, q)


def test_cholesky_identity_at_zero():
    np.testing.assert_array_equal(cholesky_explicit(0.0, 4), np.eye(4))


def test_cholesky_known_factor():
    L = cholesky_explicit(0.5, 3)
    np.testing.assert_allclose(np.diag(L), [1.0, 0.8660254, 0.8164966], atol=1e-7)
    np.testing.assert_allclose([L[1, 0], L[2, 1]], [0.5, 0.2886751], atol=1e-7)
    np.testing.assert_allclose(L @ L.T, gamma_matrix(0.5, 3), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(q=st.integers(2, 12), frac=st.floats(0.001, 0.999))
def test_cholesky_matches_dense_factorisation(q, frac):
    lo = -1.0 / (q - 1)
    rho = lo + frac * (1.0 - lo)
    L = cholesky_explicit(rho, q)
    G = gamma_matrix(rho, q)
    assert np.allclose(L, np.tril(L))
    np.testing.assert_allclose(L, np.linalg.cholesky(G), atol=1e-10)
    assert np.max(np.abs(L @ L.T - G)) <= 1e-12


def test_lambda_sq_at_zero_is_zero():
    assert lambda_sq(0.0, ModelSpec((0.4, 0.8), (0.2, 0.7), 0.3, 20.0)) == 0.0


def test_lambda_sq_one_factor():
    m = ModelSpec((0.4,), (0.2,), 0.0, 20.0)
    assert lambda_sq(1.0, m) == pytest.approx(0.0275336, abs=1e-7)
    assert lambda_sq(1.0, m) == pytest.approx(0.2 ** 2 / 0.8 * (1 - np.exp(-0.8)), rel=1e-14)


def test_lambda_sq_uncorrelated_is_sum_of_one_factor_terms():
    m = ModelSpec((0.4, 0.8, 1.5), (0.2, 0.7, 0.3), 0.0, 20.0)
    parts = sum(lambda_sq(2.0, ModelSpec((a,), (s,), 0.0, 20.0)) for a, s in zip(m.alpha, m.sigma))
    assert lambda_sq(2.0, m) == pytest.approx(parts, rel=1e-14)


def test_lambda_sq_vectorised():
    m = ModelSpec((0.4,), (0.2,), 0.0, 20.0)
    ts = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(lambda_sq(ts, m), [lambda_sq(t, m) for t in ts])


def test_spot_price_at_origin_is_forward():
    m = ModelSpec((0.4,), (0.2,), 0.0, 20.0)
    assert spot_price(FactorState(0.0, [0.0]), m) == 20.0


def test_spot_price_one_factor():
    m = ModelSpec((0.4,), (0.2,), 0.0, 20.0)
    s = spot_price(FactorState(1.0, [1.0]), m)
    assert s == pytest.approx(20.0 * np.exp(0.2 - 0.0275336 / 2), rel=1e-6)
    assert s == pytest.approx(24.094064, abs=1e-6)


def test_spot_price_dimension_mismatch():
    m = ModelSpec((0.4,), (0.2,), 0.0, 20.0)
    with pytest.raises(ModelError):
        spot_price(FactorState(1.0, [1.0, 2.0]), m)


def test_spot_is_martingale_under_exact_factors():
    # E S_t = F(0, t): one exact OU draw at t = 1 from X_0 = 0, 10^6 paths
    m = ModelSpec((0.4, 0.8), (0.2, 0.7), 0.4, 20.0)
    decay, cov = factor_transition(m, 1.0)
    z = np.random.default_rng(11).standard_normal((1_000_000, 2))
    x = z @ np.linalg.cholesky(cov).T
    s = spot_price(FactorState(1.0, x), m)
    assert abs(s.mean() - 20.0) <= 3 * s.std() / np.sqrt(len(s))


def test_vol_field_zero_state_is_zero_row():
    m = ModelSpec((0.8, 0.8, 0.8), (0.7, 0.7, 0.7), 0.4, 20.0)
    fld = vol_field_multifactor(m, 1.0, uniform_times(1.0, 15))
    np.testing.assert_array_equal(fld(3, 0.0), np.zeros((1, 3)))
    assert fld.shape == (1, 3)


def test_vol_field_one_factor_form():
    m = ModelSpec((0.4,), (0.2,), 0.0, 20.0)
    T, n = 15 / 365, 15
    times = uniform_times(T, n)
    fld = vol_field_multifactor(m, T, times)
    k, x = 4, 21.5
    expected = 0.2 * x * np.sqrt(T / n) * np.exp(-0.4 * (T - times[k]))
    assert fld(k, x)[0, 0] == pytest.approx(expected, rel=1e-14)


def test_vol_field_quadratic_form():
    m = ModelSpec((0.4, 0.8, 1.2), (0.2, 0.7, 0.5), 0.3, 20.0)
    T, n, k, x = 1.0, 10, 6, 1.3
    times = uniform_times(T, n)
    s = vol_field_multifactor(m, T, times)(k, x)
    dt = T / n
    e = m.sigma * np.exp(-m.alpha * (T - times[k]))
    expected = x * x * dt * e @ gamma_matrix(0.3, 3) @ e
    assert (s @ s.T)[0, 0] == pytest.approx(expected, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-50, 50), c=st.floats(-5, 5))
def test_vol_field_linear_in_state(x, c):
    m = ModelSpec((0.8, 0.8), (0.7, 0.3), 0.1, 20.0)
    fld = vol_field_multifactor(m, 1.0, uniform_times(1.0, 4))
    np.testing.assert_allclose(fld(1, c * x), c * fld(1, x), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(mean_reversions=(0.0,), vols=(0.2,)),
    dict(mean_reversions=(0.4,), vols=(-0.1,)),
    dict(mean_reversions=(0.4, 0.4), vols=(0.2,)),
    dict(mean_reversions=(0.4,), vols=(0.2,), initial_curve=-1.0),
])
def test_model_invariants_enforced(kwargs):
    with pytest.raises(ModelError):
        ModelSpec(**kwargs)


def test_nonpositive_curve_rejected_on_use():
    m = ModelSpec((0.4,), (0.2,), 0.0, lambda t: 20.0 - 100.0 * t)
    assert m.forward(0.0) == 20.0
    with pytest.raises(ModelError):
        m.forward(1.0)
