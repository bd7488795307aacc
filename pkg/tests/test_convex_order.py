import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swingcvx.convex_order import (check_matrix_field_convexity, chord_violation, convex_order_1d,
                                   drift_monotonicity_coefficient, estimate_semiconvexity,
                                   gaussian_convex_order_check, lipschitz_chain_bound, psd_order)
from swingcvx.models import ModelSpec, VolField, scalar_field, uniform_times, vol_field_multifactor


def kinked(x):
    return np.sqrt(2.0 - min(x * x, 1.0))


def test_psd_order_holds():
    v = psd_order(np.eye(2), np.diag([2.0, 1.0]))
    assert v.holds and v.worst_violation == 0.0


def test_psd_order_fails_with_violation_three():
    v = psd_order(np.diag([2.0, 1.0]), np.eye(2))
    assert v.holds is False
    assert v.worst_violation == pytest.approx(3.0)
    assert abs(v.witness[0]) == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_psd_order_scalar_is_absolute_comparison(a, b):
    assert psd_order([[a]], [[b]]).holds == (abs(a) <= abs(b) + 1e-12 * (1 + b * b))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 4))
def test_psd_order_augmented_family(seed, d):
    r = np.random.default_rng(seed)
    A = r.standard_normal((d, d))
    C = r.standard_normal((d, d))
    B = np.linalg.cholesky(A @ A.T + C @ C.T + 1e-9 * np.eye(d))
    v = psd_order(A, B)
    assert v.holds
    assert v.holds == (v.worst_violation <= v.tolerance)


def test_gaussian_check_zero_lower_matrix():
    assert gaussian_convex_order_check(np.zeros((2, 2)), np.eye(2), sample_size=50_000).holds


def test_gaussian_check_scaled_identity():
    assert gaussian_convex_order_check(0.5 * np.eye(2), np.eye(2), sample_size=50_000).holds
    assert not gaussian_convex_order_check(np.eye(2), 0.5 * np.eye(2), sample_size=50_000).holds


def test_half_normal_mean_ratio():
    z = np.random.default_rng(0).standard_normal(1_000_000)
    ratio = np.abs(0.5 * z).mean() / np.abs(1.5 * z).mean()
    assert ratio == pytest.approx(0.5 / 1.5, rel=1e-12)


def test_convex_order_1d_closed_form_potentials():
    from scipy.stats import norm
    g = np.random.default_rng(3)
    u = g.standard_normal(200_000)
    v = 2.0 * g.standard_normal(200_000)

    def call_pot(s, k):
        return s * norm.pdf(k / s) - k * (1 - norm.cdf(k / s))

    assert call_pot(1, 0) == pytest.approx(0.39894, abs=1e-5)
    assert call_pot(2, 0) == pytest.approx(0.79788, abs=1e-5)
    assert np.maximum(u, 0).mean() == pytest.approx(call_pot(1, 0), abs=0.01)
    assert convex_order_1d(u, v).holds
    assert not convex_order_1d(v, u).holds


def test_convex_order_same_samples():
    u = np.random.default_rng(4).standard_normal(10_000)
    v = convex_order_1d(u, u)
    assert v.holds and v.worst_violation == 0.0


def test_increasing_and_decreasing_convex_modes():
    g = np.random.default_rng(5)
    u = g.standard_normal(100_000)
    assert convex_order_1d(u, u + 1.0, mode="icx").holds
    assert not convex_order_1d(u + 1.0, u, mode="icx").holds
    assert convex_order_1d(u + 1.0, u, mode="dcx").holds


def test_linear_scalar_field_is_convex():
    assert check_matrix_field_convexity(scalar_field(lambda x: 0.3 * x), np.linspace(-3, 3, 31)).holds


def test_model_field_is_convex():
    m = ModelSpec((0.8, 0.8, 0.8), (0.7, 0.7, 0.7), 0.4, 20.0)
    f = vol_field_multifactor(m, 15 / 365, uniform_times(15 / 365, 15))
    assert check_matrix_field_convexity(f, np.linspace(-5, 40, 31), steps=range(15)).holds


def test_kinked_field_fails_near_unit():
    v = check_matrix_field_convexity(scalar_field(kinked), np.linspace(-3, 3, 61))
    assert v.holds is False
    assert v.worst_violation == pytest.approx(np.sqrt(2) - 1, abs=1e-12)
    x, y, _ = v.witness["chord"]
    assert (x, y) == (-1.0, 1.0)


def test_opaque_field_indeterminate():
    f = VolField(lambda s, x: np.array([[x, 0.0]]), (1, 2))
    v = check_matrix_field_convexity(f, [0.0, 1.0])
    assert v.holds is None and v.status == "indeterminate"


def test_chord_violation_convex_function_zero():
    worst, _ = chord_violation(lambda x: x * x, np.linspace(-2, 2, 21), [0.25, 0.5])
    assert worst == 0.0


@pytest.mark.parametrize("sigma,expected", [(lambda x: x, 0.0), (lambda x: 0.7, 0.0), (kinked, 1.0)])
def test_semiconvexity(sigma, expected):
    rep = estimate_semiconvexity(sigma, -3, 3, 6001)
    assert rep.a_sigma == pytest.approx(expected, abs=1e-2)
    assert rep.a_sigma >= 0


def test_semiconvexity_needs_fine_grid():
    with pytest.raises(ValueError):
        estimate_semiconvexity(lambda x: x, points=100)


def test_drift_monotonicity():
    assert drift_monotonicity_coefficient(lambda x: 0.4 * (x - 1)) == 0.0
    assert drift_monotonicity_coefficient(lambda x: -0.5 * x) == pytest.approx(0.5)
    assert drift_monotonicity_coefficient(lambda x: max(-2 * x, 0.5 * x)) == pytest.approx(2.0)


def test_lipschitz_bound_values():
    b = lipschitz_chain_bound(0, 1, 0.1, 0.5, 1.0, [1.0] * 10, 0.0)
    assert b.C_h == pytest.approx(1.1)
    assert b.powers[10] == pytest.approx(2.5937424601)
    assert b.envelope[10] == pytest.approx(np.e)
    assert b.envelope_holds
    assert lipschitz_chain_bound(0, 4, 0.1, 0.5, 1.0, [0.0] * 10, 0.0).bound == 0.0


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 8), h=st.floats(1e-4, 0.5), kap=st.floats(0, 2), lip=st.floats(0, 2))
def test_lipschitz_bound_monotone_in_k(m, h, kap, lip):
    lips = [1.0, 2.0, 0.5, 3.0]
    bounds = [lipschitz_chain_bound(k, m, h, kap, lip, lips, 1.5).bound for k in range(5)]
    assert all(x >= y for x, y in zip(bounds, bounds[1:]))
    assert lipschitz_chain_bound(0, m, h, kap, lip, lips, 1.5).envelope_holds
