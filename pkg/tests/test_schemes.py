import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from swingcvx.models import ModelSpec
from swingcvx.schemes import (MAX_TRUNCATION_LAMBDA, Diffusion, SchemeConfig, SchemeError, SimulationError,
                              UniformGrid, affine_diffusion, euler_step, exact_ou_step, gauss_hermite,
                              multi_step_operator, price_diffusion, quadrature_transition, simulate_paths,
                              sub_step_normals, transition_operator, truncate_noise, truncated_gauss_rule,
                              truncated_plain_gap, truncated_stein_residual, truncation_threshold)


def lin_vol(step, x):
    return np.array([[0.2 * float(x)]])


def test_euler_step_without_noise_or_drift():
    assert euler_step(1.7, 0, 0.0, 0.0, 0.0, lin_vol, 0.01) == 1.7


def test_euler_step_hand_value():
    assert euler_step(1.0, 0, 1.0, 0.0, 0.0, lin_vol, 0.01) == pytest.approx(1.02, abs=1e-15)


def test_euler_step_martingale():
    # zero drift: E step(x, Z) = x, integrated exactly by Gauss-Hermite
    z, w = gauss_hermite(16)
    vals = np.array([euler_step(2.0, 0, zi, 0.0, 0.0, lin_vol, 0.01) for zi in z])
    assert w @ vals == pytest.approx(2.0, abs=1e-14)


def test_truncate_noise_values():
    assert truncate_noise(0.5, 2.5) == 0.5
    assert truncate_noise(3.0, 2.5) == 0.0
    np.testing.assert_array_equal(truncate_noise(np.array([-3.0, 1.0, 2.5]), 2.5), [0.0, 1.0, 2.5])


@pytest.mark.exploratory
def test_exploratory_multidim_truncation_by_euclidean_norm():
    # plumbing only: no convexity guarantee claimed beyond one dimension
    z = np.array([[1.5, 1.5], [1.0, 1.0]])
    np.testing.assert_array_equal(truncate_noise(z, 2.0), [[0.0, 0.0], [1.0, 1.0]])


def test_truncated_noise_mean_zero():
    z = np.random.default_rng(1).standard_normal(400_000)
    zt = truncate_noise(z, 1.0)
    assert abs(zt.mean()) < 3 * zt.std() / np.sqrt(len(zt))


def test_truncation_threshold_values():
    assert truncation_threshold(0.01, 1.0, 0.0, 0.25) == pytest.approx(2.5, rel=1e-14)
    assert truncation_threshold(0.01, 2.0, 1.0, 0.2) == pytest.approx(0.8944272, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(h=st.floats(1e-6, 1.0), lip=st.floats(0.01, 10), a=st.floats(0, 5), lam=st.floats(0.01, 0.29))
def test_truncation_threshold_scaling(h, lip, a, lam):
    s1 = truncation_threshold(h, lip, a, lam)
    s2 = truncation_threshold(h / 2, lip, a, lam)
    assert s2 == pytest.approx(np.sqrt(2) * s1, rel=1e-12)


@pytest.mark.parametrize("lam", [0.0, MAX_TRUNCATION_LAMBDA, 0.3, -0.1])
def test_truncation_lambda_range(lam):
    with pytest.raises(SchemeError):
        truncation_threshold(0.01, 1.0, 0.0, lam)
    with pytest.raises(SchemeError):
        SchemeConfig(n=2, maturity=1.0, truncation_lambda=lam)


def test_scheme_grid_invariants():
    cfg = SchemeConfig(n=15, maturity=15 / 365, m=4)
    assert cfg.h * cfg.m * cfg.n == pytest.approx(cfg.maturity, rel=1e-15)
    assert cfg.times()[-1] == cfg.maturity


def test_constant_paths_without_vol_or_drift():
    cfg = SchemeConfig(n=3, maturity=1.0, m=2, path_count=100)
    ens = simulate_paths(cfg, affine_diffusion(0.0, 0.0), 3.5)
    assert np.all(ens.states == 3.5)


def test_exercise_slice():
    cfg = SchemeConfig(n=3, maturity=1.0, m=4, path_count=10)
    ens = simulate_paths(cfg, affine_diffusion(0.2), 1.0)
    assert [ens.exercise_slice(k) for k in range(4)] == [0, 4, 8, 12]
    np.testing.assert_array_equal(ens.exercise_states()[:, 2, 0], ens.states[:, 8, 0])


def test_lognormal_forward_martingale():
    m = ModelSpec((0.4,), (0.7,), 0.0, 20.0)
    cfg = SchemeConfig(n=4, maturity=1.0, m=1, path_count=1_000_000, seed=5)
    x = simulate_paths(cfg, price_diffusion(m, 1.0), 20.0).exercise_states()[:, -1, 0]
    assert abs(x.mean() - 20.0) <= 3 * x.std() / np.sqrt(len(x))


def test_paths_deterministic_across_workers_and_runs():
    cfg = SchemeConfig(n=5, maturity=1.0, m=3, path_count=3000, seed=9, truncation_lambda=0.25)
    d = affine_diffusion(0.5, 0.1, kappa=-0.3)
    a = simulate_paths(cfg, d, 1.0, True, workers=1).states
    b = simulate_paths(cfg, d, 1.0, True, workers=4).states
    np.testing.assert_array_equal(a, b)


def test_compiled_and_generic_paths_agree():
    cfg = SchemeConfig(n=3, maturity=1.0, m=2, path_count=500, seed=2, truncation_lambda=0.2)
    aff = affine_diffusion(0.4, 0.05, kappa=-0.2, zeta=1.0)
    gen = Diffusion(vol=lambda t, x: 0.4 * x + 0.05, kappa=-0.2, zeta=1.0, sigma_lip=0.4)
    for trunc in (False, True):
        np.testing.assert_allclose(simulate_paths(cfg, aff, 1.0, trunc).states,
                                   simulate_paths(cfg, gen, 1.0, trunc).states, rtol=1e-13)


def test_truncated_and_plain_differ_only_where_truncation_fires():
    cfg = SchemeConfig(n=1, maturity=1.0, m=8, path_count=2000, seed=4, truncation_lambda=0.25)
    d = affine_diffusion(0.7)
    s_h = truncation_threshold(cfg.h, 0.7, 0.0, 0.25)
    z = sub_step_normals(cfg.seed, cfg.path_count, cfg.substeps)[:, :, 0]
    fired = np.cumsum(np.abs(z) > s_h, axis=1) > 0
    plain = simulate_paths(cfg, d, 1.0).states[:, 1:, 0]
    trunc = simulate_paths(cfg, d, 1.0, True).states[:, 1:, 0]
    assert np.all(plain[~fired] == trunc[~fired])
    assert np.all(plain[fired] != trunc[fired])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state_reported():
    cfg = SchemeConfig(n=1, maturity=1.0, m=4, path_count=8)
    d = Diffusion(vol=lambda t, x: np.where(x > 1.5, np.inf, 0.1), kappa=-1.0)
    with pytest.raises(SimulationError) as exc:
        simulate_paths(cfg, d, 2.0)
    assert exc.value.path == 0


def test_exact_ou_step_values():
    assert exact_ou_step(0.0, 0.4, 1 / 15, 1.0) == pytest.approx(np.sqrt((1 - np.exp(-0.8 / 15)) / 0.8), rel=1e-14)
    assert exact_ou_step(0.0, 0.4, 1 / 15, 1.0) == pytest.approx(0.2547942, abs=1e-7)
    assert abs(exact_ou_step(1.0, 200.0, 1.0, 0.0)) < 1e-80


def test_exact_ou_stationary_variance():
    v = exact_ou_step(0.0, 0.4, 1e3, 1.0) ** 2
    assert v == pytest.approx(1 / 0.8, rel=1e-12)


def test_gauss_hermite_moments():
    z, w = gauss_hermite(32)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert w @ z ** 2 == pytest.approx(1.0, abs=1e-13)
    assert w @ z ** 4 == pytest.approx(3.0, abs=1e-12)


def test_truncated_rule_matches_truncated_moments():
    s = 1.3
    z, w = truncated_gauss_rule(64, s)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    phi = np.exp(-s * s / 2) / np.sqrt(2 * np.pi)
    assert w @ z ** 2 == pytest.approx((1 - 2 * ndtr(-s)) - 2 * s * phi, abs=1e-13)


GRID = UniformGrid(-2.0, 4.0, 121)


def test_quadrature_constant_and_linear():
    d = affine_diffusion(0.3)
    x = GRID.nodes
    r1 = quadrature_transition(np.ones_like(x), GRID, 0, d, 0.01)
    np.testing.assert_allclose(r1.values, 1.0, atol=1e-14)
    r2 = quadrature_transition(x, GRID, 0, d, 0.01)
    np.testing.assert_allclose(r2.values, x, atol=1e-12)


def test_quadrature_second_moment_constant_vol():
    s, h = 0.5, 0.01
    d = affine_diffusion(0.0, s)
    fine = UniformGrid(-3.0, 3.0, 6001)
    x = fine.nodes
    r = quadrature_transition(x ** 2, fine, 0, d, h, node_count=64)
    inner = np.abs(x) < 2.5
    np.testing.assert_allclose(r.values[inner], x[inner] ** 2 + h * s * s, atol=1e-6)


def test_quadrature_flags_extrapolation():
    d = affine_diffusion(0.0, 5.0)
    r = quadrature_transition(GRID.nodes, GRID, 0, d, 1.0)
    assert r.extrapolated and r.outside_mass > 0


def test_quadrature_rejects_bad_input():
    d = affine_diffusion(0.3)
    with pytest.raises(SchemeError):
        quadrature_transition(np.full(GRID.points, np.nan), GRID, 0, d, 0.01)
    with pytest.raises(SchemeError):
        quadrature_transition(GRID.nodes, GRID, 0, d, 0.01, node_count=4)


def test_multi_step_operator_is_composition():
    d = affine_diffusion(0.3, kappa=-0.5)
    ops = [transition_operator(GRID, i * 0.01, d, 0.01).matrix for i in range(3)]
    M = multi_step_operator(GRID, 0, 3, d, 0.01).matrix
    np.testing.assert_allclose(M, ops[0] @ ops[1] @ ops[2], atol=1e-14)


def test_gap_vanishes_when_truncation_never_fires():
    # constant vol 0.01 with lam = 0.25, h = 1/8: s_h = 0.25 / sqrt(h 1e-4) > 6
    d = affine_diffusion(0.0, 0.01, sigma_lip=0.01)
    t = truncated_plain_gap(d, 1.0, 1, (2, 8), [0.0, 1.0], paths=20_000)
    assert np.all(t.thresholds > 6)
    assert t.sup_gap.max() < 1e-6


def test_gap_trend_one_factor():
    d = price_diffusion(ModelSpec((0.4,), (0.2,)), 1.0)
    xs = np.linspace(-3, 3, 13)
    t = truncated_plain_gap(d, 1.0, 1, (2, 16), xs, paths=20_000)
    assert t.sup_gap[1] < t.sup_gap[0]
    # paths are linear in x, so gap / (1 + |x|) is bounded by the |x| = 3 value
    assert np.all(t.ratio <= t.ratio[:, [0]] + 1e-12)


def test_stein_residuals():
    s_h = truncation_threshold(0.01, 0.2, 0.0, 0.25)
    _, _, r_sq = truncated_stein_residual(lambda y: 2 * y, lambda y: 2 + 0 * y, 1.0, 0.01, 0.2, s_h)
    _, _, r_exp = truncated_stein_residual(lambda y: np.exp(y / 4) / 4, lambda y: np.exp(y / 4) / 16,
                                           1.0, 0.01, 0.2, s_h)
    assert r_sq <= 1e-8 and r_exp <= 1e-6


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.2, 4.0), x=st.floats(-2, 2), sig=st.floats(0.05, 2.0))
def test_stein_identity_holds_for_cubic(s, x, sig):
    lhs, rhs, res = truncated_stein_residual(lambda y: 3 * y * y, lambda y: 6 * y, x, 0.01, sig, s)
    assert res <= 1e-10 * (1 + abs(lhs))
