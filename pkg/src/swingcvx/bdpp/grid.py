"""Grid/quadrature engine for one-dimensional Markov states.

Two state conventions:

* ``factor``: the state is the OU factor of a one-factor model and the spot
  is ``F0(t) exp(vol x - lambda_t^2 / 2)``. The m Euler sub-steps of the
  factor compose into one Gaussian step (constant volatility, linear drift),
  so a single quadrature matrix per exercise interval is exact in law.
* ``price``: the state is the price, simulated by an Euler scheme with any
  ``Diffusion``; the m sub-steps are composed as m quadrature matrices.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .._kernels import bellman, choose_controls, transition_matrix
from ..contract import FIRM, ContractSpec, build_volume_grid, penalty, unit_gain
from ..models import FactorState, ModelSpec, spot_price
from .. import rng
from ..schemes import (Diffusion, SchemeConfig, TransitionOperator, UniformGrid, gauss_hermite,
                       multi_step_operator, ou_factor_diffusion, price_diffusion, simulate_paths)
from .surface import SolverError, ValueSurface

TAIL_WARNING = 1e-6


def factor_terminal_std(alpha: float, maturity: float) -> float:
    return float(np.sqrt(-np.expm1(-2.0 * alpha * maturity) / (2.0 * alpha)))


def default_factor_grid(model: ModelSpec, maturity: float, points: int = 401, width: float = 8.0) -> UniformGrid:
    """Symmetric grid of +-``width`` terminal standard deviations of the factor."""
    half = width * factor_terminal_std(model.alpha[0], maturity)
    return UniformGrid(-half, half, points)


def default_price_grid(model: ModelSpec, points: int = 601) -> UniformGrid:
    f0 = float(model.forward(0.0))
    return UniformGrid(0.0, 3.0 * f0, points)


def factor_step_law(alpha: float, dt: float, m: int, transition: str = "euler") -> tuple[float, float]:
    """Decay and innovation std of the factor over one exercise interval.

    ``euler``: m Euler sub-steps of dX = -alpha X dt + dW composed exactly.
    ``exact``: the exact OU transition.
    """
    if transition == "exact":
        return float(np.exp(-alpha * dt)), float(np.sqrt(-np.expm1(-2.0 * alpha * dt) / (2.0 * alpha)))
    if transition != "euler":
        raise SolverError(f"unknown transition {transition!r}")
    h = dt / m
    a = 1.0 - alpha * h
    if a <= 0:
        raise SolverError("Euler factor step unstable: alpha * h >= 1")
    var = h * np.sum(a ** (2 * np.arange(m)))
    return float(a ** m), float(np.sqrt(var))


def factor_operator(grid: UniformGrid, alpha: float, dt: float, m: int, transition: str = "euler",
                    node_count: int = 32, compose: str = "gaussian") -> TransitionOperator:
    if compose == "quadrature" and transition == "euler":
        return multi_step_operator(grid, 0, m, ou_factor_diffusion(alpha), dt / m, node_count)
    decay, std = factor_step_law(alpha, dt, m, transition)
    z, w = gauss_hermite(node_count)
    targets = decay * grid.nodes[:, None] + std * z[None, :]
    T, outside = transition_matrix(grid.x_min, grid.dx, targets, w)
    return TransitionOperator(T, outside)


def _check_supported(model: ModelSpec | None, contract: ContractSpec, state: str):
    if contract.payoff_kind == "indexed_strike":
        raise SolverError("grid engine handles fixed_strike and call payoffs only")
    if state == "factor" and (model is None or model.factor_count != 1):
        raise SolverError("grid engine in factor mode needs a one-factor model")
    if state not in ("factor", "price"):
        raise SolverError(f"unknown state convention {state!r}")


def grid_spots(surface: ValueSurface, k: int, x) -> np.ndarray:
    """Spot at date k for state values x."""
    x = np.asarray(x, dtype=float)
    if surface.state == "price":
        return x
    t = surface.scheme.maturity * k / surface.n
    return spot_price(FactorState(t, x[..., None]), surface.model)


def _finite_spots(surface: ValueSurface, k: int, x) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        spot = grid_spots(surface, k, x)
    if not np.all(np.isfinite(spot)):
        raise FloatingPointError(f"spot overflow on the state grid at date {k}")
    return spot


def _date_scale(surface: ValueSurface, k: int) -> float:
    if surface.state == "price":
        return 1.0
    return float(surface.model.forward(surface.scheme.maturity * k / surface.n))


def _elastic_gain(kind: str, spot, strike: float):
    """spot * d(gain)/d(spot)."""
    if kind == "call":
        return spot * (spot > strike)
    return spot


def solve_grid(model: ModelSpec | None, contract: ContractSpec, scheme: SchemeConfig,
               x_grid: UniformGrid | None = None, *, state: str = "factor", transition: str = "euler",
               compose: str = "gaussian", delta_q: float = 1.0, bang: bool = False,
               diffusion: Diffusion | None = None, with_delta: bool = True) -> ValueSurface:
    """Backward recursion v_k = max_q [q gain_k + P_{k->k+1} v_{k+1}(., Q + q)] on a grid.

    ``diffusion`` is only used in price mode and defaults to the model's
    forward-price dynamics.
    """
    _check_supported(model, contract, state)
    if scheme.n != contract.n or not np.isclose(scheme.maturity, contract.maturity):
        raise SolverError("scheme and contract disagree on n or maturity")
    n, m = contract.n, scheme.m
    dt = scheme.maturity / n
    vg = build_volume_grid(contract, delta_q)
    if state == "price":
        if diffusion is None:
            if model is None:
                raise SolverError("price mode needs a model or a diffusion")
            diffusion = price_diffusion(model, scheme.maturity)
        if x_grid is None:
            x_grid = default_price_grid(model)
    elif x_grid is None:
        x_grid = default_factor_grid(model, scheme.maturity)

    surf = ValueSurface("grid", contract, vg, model, scheme, bang=bang, state=state, x_grid=x_grid)
    surf.extra.update(transition=transition, compose=compose, diffusion=diffusion, delta_q=delta_q)
    x = x_grid.nodes
    nx, U = len(x), vg.size
    vols = vg.volumes()

    def operator(k):
        if state == "factor":
            return factor_operator(x_grid, model.alpha[0], dt, m, transition, scheme.quad_nodes, compose)
        return multi_step_operator(x_grid, k * m, m, diffusion, scheme.h, scheme.quad_nodes)

    op_cache = {}

    def op_at(k):
        key = 0 if state == "factor" else k
        if key not in op_cache:
            op_cache[key] = operator(k)
        return op_cache[key]

    spot_n = _finite_spots(surf, n, x)
    mask_next = vg.attainable_mask(n)
    V = np.full((nx, U), -np.inf)
    V[:, mask_next] = penalty(contract.mode, spot_n[:, None], vols[None, mask_next], contract)
    values = [None] * (n + 1)
    conts = [None] * n
    choices = [None] * n
    values[n] = V
    dim = n + 1
    D = None
    if with_delta:
        D = np.zeros((nx, U, dim))
        if contract.mode != FIRM:
            D[:, :, n] = np.where(mask_next, V, 0.0) / _date_scale(surf, n)
    outside_max = 0.0

    for k in range(n - 1, -1, -1):
        op = op_at(k)
        outside_max = max(outside_max, float(op.outside_mass.max()))
        Vn = np.where(mask_next[None, :], values[k + 1], 0.0)
        cont = op.apply(Vn)
        cont[:, ~mask_next] = -np.inf
        spot = _finite_spots(surf, k, x)
        gain = unit_gain(contract.payoff_kind, spot, contract.strike)
        lo, hi = vg.control_bounds(k)
        val, ch = bellman(gain, cont, lo, hi, vg.delta_q, bang)
        values[k], conts[k], choices[k] = val, cont, ch
        mask_k = vg.attainable_mask(k)
        if with_delta:
            TD = op.apply(D.reshape(nx, U * dim)).reshape(nx, U, dim)
            Dk = np.zeros_like(D)
            el = _elastic_gain(contract.payoff_kind, spot, contract.strike) / _date_scale(surf, k)
            rows = np.arange(nx)
            for u in np.flatnonzero(mask_k):
                c = ch[:, u]
                Dk[:, u, :] = TD[rows, u + c, :]
                Dk[:, u, k] += c * vg.delta_q * el
            D = Dk
        mask_next = mask_k

    surf.values, surf.continuation, surf.choices = values, conts, choices
    if with_delta:
        surf.extra["delta_components"] = D[:, 0, :]
    surf.diagnostics["outside_mass_max"] = outside_max
    if state == "factor":
        std_T = factor_terminal_std(model.alpha[0], scheme.maturity)
        tail = float(ndtr(x_grid.x_min / std_T) + ndtr(-x_grid.x_max / std_T))
        surf.diagnostics["gaussian_tail_mass"] = tail
        if tail > TAIL_WARNING:
            surf.diagnostics.setdefault("warnings", []).append(
                f"x-grid too narrow: Gaussian mass beyond grid {tail:.3g} > {TAIL_WARNING:g}")
    return surf


def _interp_rows(grid: UniformGrid, table: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linear interpolation (with linear continuation) of table rows at x."""
    pos = (x - grid.x_min) / grid.dx
    i = np.clip(np.floor(pos).astype(np.int64), 0, grid.points - 2)
    w = (pos - i)
    if table.ndim == 1:
        return (1 - w) * table[i] + w * table[i + 1]
    return (1 - w)[:, None] * table[i] + w[:, None] * table[i + 1]


def _local_continuation(grid: UniformGrid, cont: np.ndarray, x: np.ndarray, u: np.ndarray, cmax: int) -> np.ndarray:
    """Interpolated continuation at volumes u + c, c = 0..cmax, for each path."""
    pos = (x - grid.x_min) / grid.dx
    i = np.clip(np.floor(pos).astype(np.int64), 0, grid.points - 2)
    w = pos - i
    src = np.where(np.isfinite(cont), cont, 0.0)
    cols = np.minimum(u[:, None] + np.arange(cmax + 1)[None, :], cont.shape[1] - 1)
    return (1 - w)[:, None] * src[i[:, None], cols] + w[:, None] * src[i[:, None] + 1, cols]


def grid_value_at(surface: ValueSurface, x0: float, k: int = 0, u: int = 0) -> float:
    col = surface.values[k][:, u]
    return float(_interp_rows(surface.x_grid, col, np.atleast_1d(float(x0)))[0])


def grid_initial_state(surface: ValueSurface, x0=None) -> float:
    if x0 is not None:
        return float(x0)
    if surface.state == "factor":
        return 0.0
    return float(surface.model.forward(0.0))


def grid_delta(surface: ValueSurface, x0=None) -> tuple[float, np.ndarray]:
    """Envelope delta from the backward policy evaluation."""
    comps = surface.extra.get("delta_components")
    if comps is None:
        return float("nan"), np.full(surface.n + 1, np.nan)
    x0 = grid_initial_state(surface, x0)
    by_date = _interp_rows(surface.x_grid, comps, np.atleast_1d(x0))[0]
    if surface.state == "price":
        by_date = by_date / x0
    return float(by_date.sum()), by_date


def simulate_grid_policy(surface: ValueSurface, paths: int, seed: int, x0=None, workers: int = 1) -> dict:
    """Forward-simulate the grid policy; returns per-path cash, delta terms and Q_n."""
    c, vg, sch = surface.contract, surface.volumes, surface.scheme
    n = c.n
    x0 = grid_initial_state(surface, x0)
    if surface.state == "factor":
        decay, std = factor_step_law(surface.model.alpha[0], sch.maturity / n, sch.m, surface.extra["transition"])
        z = rng.normals(seed, rng.FORWARD, paths, (n,))
        X = np.empty((paths, n + 1))
        X[:, 0] = x0
        for k in range(n):
            X[:, k + 1] = decay * X[:, k] + std * z[:, k]
    else:
        cfg = SchemeConfig(n=n, maturity=sch.maturity, m=sch.m, seed=seed, path_count=paths)
        X = simulate_paths(cfg, surface.extra["diffusion"], x0, workers=workers).exercise_states()[:, :, 0]
    u = np.zeros(paths, dtype=np.int64)
    cash = np.zeros(paths)
    dterms = np.zeros((paths, n + 1))
    for k in range(n):
        spot = grid_spots(surface, k, X[:, k])
        gain = unit_gain(c.payoff_kind, spot, c.strike)
        lo, hi = vg.control_bounds(k)
        local = _local_continuation(surface.x_grid, surface.continuation[k], X[:, k], u, vg.control_max)
        ctl = choose_controls(gain, local, lo[u], hi[u], vg.delta_q, surface.bang)
        q = ctl * vg.delta_q
        cash += q * gain
        dterms[:, k] = q * _elastic_gain(c.payoff_kind, spot, c.strike) / _date_scale(surface, k)
        u += ctl
    spot_n = grid_spots(surface, n, X[:, n])
    Qn = u * vg.delta_q
    pen = penalty(c.mode, spot_n, Qn, c)
    cash += pen
    dterms[:, n] = pen / _date_scale(surface, n)
    if surface.state == "price":
        dterms /= x0
    return {"cash": cash, "delta_terms": dterms, "Q_n": Qn}
