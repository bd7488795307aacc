import numpy as np
import pytest

from swingcvx.bdpp import delta_envelope, price, simulate_policy
from swingcvx.bdpp.grid import factor_step_law, grid_value_at, solve_grid
from swingcvx.bdpp.lsmc import PolynomialBasis, solve_lsmc
from swingcvx.bdpp.studies import bang_bang_vs_enumeration, m_refinement_study
from swingcvx.bdpp.surface import SolverError
from swingcvx.contract import PEN, ContractSpec, penalty
from swingcvx.models import ModelSpec
from swingcvx.schemes import SchemeConfig

BASE = ContractSpec()
SCHEME = SchemeConfig(n=15, maturity=15 / 365, path_count=20_000, seed=1)


def one_factor(sigma, f0=20.0):
    return ModelSpec((0.4,), (sigma,), 0.0, f0)


def zero_vol_price(f0):
    return 80 * max(f0 - 20, 0) - 50 * max(20 - f0, 0)


@pytest.mark.parametrize("f0", [10.0, 20.0, 30.0])
def test_zero_vol_grid(f0):
    r = price(solve_grid(one_factor(0.0, f0), BASE, SCHEME))
    assert r.price == pytest.approx(zero_vol_price(f0), rel=1e-10, abs=1e-10)
    if f0 != 20.0:
        assert r.delta == pytest.approx(80.0 if f0 > 20 else 50.0, rel=1e-12)


@pytest.mark.parametrize("f0", [10.0, 30.0])
def test_zero_vol_lsmc_matches_grid(f0):
    surf = solve_lsmc(one_factor(0.0, f0), BASE, SCHEME)
    r = price(surf)
    assert r.price == pytest.approx(zero_vol_price(f0), rel=1e-10)
    assert r.std_error == 0.0
    assert r.delta == pytest.approx(80.0 if f0 > 20 else 50.0, rel=1e-12)
    assert (0, 3, 0) in surf.diagnostics["rank_reductions"]


@pytest.mark.parametrize("f0,expected", [(25.0, 30.0), (15.0, 0.0)])
def test_single_date_pen_closed_form(f0, expected):
    c = ContractSpec(n=1, maturity=1 / 365, q_max=6, Q_min=0, Q_max=6, mode=PEN)
    s = SchemeConfig(n=1, maturity=1 / 365)
    assert price(solve_grid(one_factor(0.3, f0), c, s)).price == pytest.approx(expected, abs=1e-12)


def test_terminal_slice_is_penalty():
    c = ContractSpec(mode=PEN, penalty_A=0.2, penalty_B=0.2)
    surf = solve_grid(one_factor(0.3), c, SCHEME, state="price")
    x = surf.x_grid.nodes
    vols = surf.volumes.volumes()
    np.testing.assert_allclose(surf.values[c.n], penalty(PEN, x[:, None], vols[None, :], c), atol=1e-12)


def test_firm_values_defined_on_attainable_pairs_only():
    surf = solve_grid(one_factor(0.2), BASE, SCHEME)
    for k in range(BASE.n + 1):
        mask = surf.volumes.attainable_mask(k)
        assert np.all(np.isfinite(surf.values[k][:, mask]))
        assert np.all(np.isneginf(surf.values[k][:, ~mask]))


def test_policy_summary_support_and_std_error():
    surf = solve_lsmc(one_factor(0.2), BASE, SCHEME)
    r = price(surf)
    assert r.std_error >= 0 and r.delta_std_error >= 0
    assert min(r.policy_summary) >= BASE.Q_min and max(r.policy_summary) <= BASE.Q_max
    assert sum(r.policy_summary.values()) == pytest.approx(1.0)
    g = price(solve_grid(one_factor(0.2), BASE, SCHEME), paths=5000)
    assert min(g.policy_summary) >= BASE.Q_min and max(g.policy_summary) <= BASE.Q_max


def test_lsmc_matches_grid_across_sweep():
    s = SchemeConfig(n=15, maturity=15 / 365, path_count=30_000, seed=3)
    for f0 in np.arange(5.0, 35.1, 2.5):
        g = price(solve_grid(one_factor(0.2, f0), BASE, s)).price
        r = price(solve_lsmc(one_factor(0.2, f0), BASE, s))
        assert abs(r.price - g) <= 3 * r.std_error + 1e-9, f0


def test_indexed_strike_zero_vol_is_worthless():
    c = ContractSpec(payoff_kind="indexed_strike")
    r = price(solve_lsmc(one_factor(0.0), c, SCHEME))
    assert r.price == pytest.approx(0.0, abs=1e-10)


def test_grid_rejects_indexed_strike_and_multifactor():
    with pytest.raises(SolverError):
        solve_grid(one_factor(0.2), ContractSpec(payoff_kind="indexed_strike"), SCHEME)
    with pytest.raises(SolverError):
        solve_grid(ModelSpec((0.4, 0.4), (0.2, 0.2), 0.1), BASE, SCHEME)


def test_penalty_tightens_towards_firm():
    firm = price(solve_grid(one_factor(0.3), BASE, SCHEME)).price
    pens = [price(solve_grid(one_factor(0.3), ContractSpec(mode=PEN, penalty_A=a, penalty_B=a), SCHEME)).price
            for a in (0.0, 0.2, 1.0, 5.0)]
    assert pens[0] >= firm
    assert all(x >= y - 1e-9 for x, y in zip(pens, pens[1:]))
    assert abs(pens[-1] - firm) < abs(pens[1] - firm)


def test_euler_factor_law_composition():
    decay, std = factor_step_law(0.4, 0.1, 3)
    a = 1 - 0.4 * 0.1 / 3
    assert decay == pytest.approx(a ** 3)
    assert std ** 2 == pytest.approx(0.1 / 3 * (1 + a ** 2 + a ** 4))


def test_exact_transition_reference_against_fine_euler():
    m = one_factor(0.7)
    exact = price(solve_grid(m, BASE, SCHEME, transition="exact")).price
    fine = price(solve_grid(m, BASE, SchemeConfig(n=15, maturity=15 / 365, m=64))).price
    assert abs(fine - exact) < 1e-3 * abs(exact)


def test_refinement_zero_vol_constant():
    t = m_refinement_study(one_factor(0.0, 25.0), BASE, (1, 2, 4))
    np.testing.assert_allclose(t.prices, zero_vol_price(25.0), rtol=1e-12)


def test_refinement_gaps_shrink():
    t = m_refinement_study(one_factor(0.2), BASE, (1, 2, 4, 8))
    assert np.all(np.diff(t.gaps) < 0)


@pytest.mark.parametrize("kind,mode", [("fixed_strike", "firm"), ("call", "firm"), ("fixed_strike", PEN)])
def test_bang_bang_matches_enumeration_on_lattice(kind, mode):
    c = ContractSpec(n=5, maturity=5 / 365, q_max=2, Q_min=4, Q_max=8, payoff_kind=kind, mode=mode,
                     penalty_A=0.2, penalty_B=0.2)
    rep = bang_bang_vs_enumeration(c, one_factor(0.2))
    assert rep.exact
    assert rep.off_lattice_max > 0


def test_bang_bang_oracle_size_limit():
    with pytest.raises(SolverError):
        bang_bang_vs_enumeration(BASE, one_factor(0.2))


def test_lsmc_deterministic_across_workers():
    s = SchemeConfig(n=15, maturity=15 / 365, path_count=5000, seed=11)
    a = price(solve_lsmc(one_factor(0.4), BASE, s, workers=1), workers=1)
    b = price(solve_lsmc(one_factor(0.4), BASE, s, workers=3), workers=3)
    assert a.price == b.price and a.delta == b.delta


def test_envelope_delta_forward_matches_backward():
    surf = solve_grid(one_factor(0.2), BASE, SCHEME)
    d = delta_envelope(surf, paths=50_000, seed=5)
    assert abs(d.delta - price(surf).delta) <= 4 * d.std_error + 0.05
    assert len(d.by_date) == BASE.n + 1


def test_forward_policy_price_close_to_backward():
    surf = solve_grid(one_factor(0.2), BASE, SCHEME)
    sim = simulate_policy(surf, 50_000, 6)
    cash = sim["cash"]
    assert abs(cash.mean() - grid_value_at(surf, 0.0)) <= 4 * cash.std() / np.sqrt(len(cash)) + 0.05


def test_polynomial_basis_exponents():
    b = PolynomialBasis(2, np.zeros(2), np.ones(2))
    assert b.exponents == [(), (0,), (1,), (0, 0), (0, 1), (1, 1)]
    np.testing.assert_allclose(b.design(np.array([[2.0, 3.0]])), [[1, 2, 3, 4, 6, 9]])


def test_scheme_contract_mismatch():
    with pytest.raises(SolverError):
        solve_grid(one_factor(0.2), BASE, SchemeConfig(n=10, maturity=15 / 365))
