"""Regression Monte Carlo engine.

Factors are simulated exactly at the exercise dates. Continuation values
are regressed per volume node on monomials of the normalised factors (plus
the running index average for the indexed strike); decisions use the
regressed continuation and values are propagated pathwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .. import rng
from .._kernels import bellman, choose_controls
from ..contract import ContractSpec, build_volume_grid, index_average, penalty, unit_gain
from ..models import ModelSpec, factor_transition, lambda_sq
from ..schemes import SchemeConfig
from .surface import SolverError, ValueSurface

DEFAULT_RIDGE = 1e-10


@dataclass(frozen=True)
class PolynomialBasis:
    """Monomials of total degree <= ``degree`` in standardised regressors."""

    degree: int
    mean: np.ndarray
    std: np.ndarray

    @property
    def exponents(self) -> list[tuple[int, ...]]:
        r = len(self.mean)
        out = [()]
        for d in range(1, self.degree + 1):
            out += list(combinations_with_replacement(range(r), d))
        return out

    def design(self, variables: np.ndarray) -> np.ndarray:
        zs = (variables - self.mean) / self.std
        cols = []
        for e in self.exponents:
            col = np.ones(len(zs))
            for j in e:
                col = col * zs[:, j]
            cols.append(col)
        return np.column_stack(cols)


@dataclass(frozen=True)
class FactorPaths:
    factors: np.ndarray  # (paths, n + 1, q)
    spots: np.ndarray    # (paths, n + 1)


def simulate_factor_paths(model: ModelSpec, contract: ContractSpec, paths: int, seed: int,
                          stream: int = rng.PATHS, workers: int = 1) -> FactorPaths:
    n, q = contract.n, model.factor_count
    dt = contract.maturity / n
    decay, cov = factor_transition(model, dt)
    chol = np.linalg.cholesky(cov) if np.any(cov) else np.zeros_like(cov)
    times = contract.maturity * np.arange(n + 1) / n
    fwd = np.atleast_1d(model.forward(times)).astype(float) * np.ones(n + 1)
    comp = np.exp(-0.5 * lambda_sq(times, model))

    def run(b, s, e):
        z = rng.substream(seed, stream, b).standard_normal((e - s, n, q))
        X = np.zeros((e - s, n + 1, q))
        for k in range(n):
            X[:, k + 1] = decay * X[:, k] + z[:, k] @ chol.T
        return X

    X = np.concatenate(rng.map_blocks(run, paths, workers), axis=0)
    with np.errstate(over="ignore", invalid="ignore"):
        spots = fwd * comp * np.exp(X @ model.sigma)
    if not np.all(np.isfinite(spots)):
        raise FloatingPointError("simulated spot overflow")
    return FactorPaths(X, spots)


def _regressors(fp: FactorPaths, contract: ContractSpec, k: int) -> np.ndarray:
    cols = [fp.factors[:, k, :]]
    if contract.payoff_kind == "indexed_strike" and k + 1 < contract.n:
        # the next date's index is known at date k
        cols.append(index_average(fp.spots, k + 1, contract)[:, None])
    return np.concatenate(cols, axis=1)


def _fit_basis(variables: np.ndarray, degree: int) -> tuple[PolynomialBasis, int]:
    """Standardise and drop degree until the design has full column rank."""
    mean = variables.mean(axis=0)
    std = variables.std(axis=0)
    if np.any(std <= 1e-12 * (1.0 + np.abs(mean))):
        return PolynomialBasis(0, mean, np.ones_like(std)), 0
    std = np.where(std > 0, std, 1.0)
    d = degree
    while d > 0:
        basis = PolynomialBasis(d, mean, std)
        if np.linalg.matrix_rank(basis.design(variables)) == len(basis.exponents):
            return basis, d
        d -= 1
    return PolynomialBasis(0, mean, std), 0


def _gain(contract: ContractSpec, fp: FactorPaths, k: int) -> np.ndarray:
    index = index_average(fp.spots, k, contract) if contract.payoff_kind == "indexed_strike" else None
    return unit_gain(contract.payoff_kind, fp.spots[:, k], contract.strike, index)


def solve_lsmc(model: ModelSpec, contract: ContractSpec, scheme: SchemeConfig, basis_degree: int = 3,
               *, delta_q: float = 1.0, bang: bool = False, ridge: float = DEFAULT_RIDGE,
               keep_values: bool = False, workers: int = 1) -> ValueSurface:
    """Backward regression over ``scheme.path_count`` paths seeded by ``scheme.seed``."""
    if scheme.n != contract.n or not np.isclose(scheme.maturity, contract.maturity):
        raise SolverError("scheme and contract disagree on n or maturity")
    if basis_degree < 0:
        raise SolverError("basis_degree must be >= 0")
    n = contract.n
    vg = build_volume_grid(contract, delta_q)
    fp = simulate_factor_paths(model, contract, scheme.path_count, scheme.seed, workers=workers)
    P, U = scheme.path_count, vg.size
    vols = vg.volumes()
    surf = ValueSurface("lsmc", contract, vg, model, scheme, bang=bang, state="factor")
    surf.diagnostics["rank_reductions"] = []
    mask_next = vg.attainable_mask(n)
    V = np.full((P, U), -np.inf)
    V[:, mask_next] = penalty(contract.mode, fp.spots[:, n, None], vols[None, mask_next], contract)
    coefs, bases = [None] * n, [None] * n
    values = [None] * (n + 1)
    values[n] = V if keep_values else None
    for k in range(n - 1, -1, -1):
        basis, d_used = _fit_basis(_regressors(fp, contract, k), basis_degree)
        if d_used < basis_degree:
            surf.diagnostics["rank_reductions"].append((k, basis_degree, d_used))
        Phi = basis.design(_regressors(fp, contract, k))
        G = Phi.T @ Phi
        G[np.diag_indices_from(G)] += ridge * max(1.0, float(np.max(np.diag(G))))
        cols = np.flatnonzero(mask_next)
        beta = np.zeros((Phi.shape[1], U))
        beta[:, cols] = np.linalg.solve(G, Phi.T @ V[:, cols])
        cont = np.full((P, U), -np.inf)
        cont[:, cols] = Phi @ beta[:, cols]
        lo, hi = vg.control_bounds(k)
        V, _ = bellman(_gain(contract, fp, k), cont, lo, hi, vg.delta_q, bang, realized=V)
        coefs[k], bases[k] = beta, basis
        if keep_values:
            values[k] = V
        mask_next = vg.attainable_mask(k)
    surf.coefficients, surf.bases = coefs, bases
    surf.values = values
    surf.extra.update(in_sample_price=float(V[:, 0].mean()), basis_degree=basis_degree, delta_q=delta_q)
    return surf


def simulate_lsmc_policy(surface: ValueSurface, paths: int, seed: int, workers: int = 1) -> dict:
    """Forward pass of the regressed policy on an independent ensemble."""
    c, vg, model = surface.contract, surface.volumes, surface.model
    n = c.n
    fp = simulate_factor_paths(model, c, paths, seed, stream=rng.FORWARD, workers=workers)
    times = c.maturity * np.arange(n + 1) / n
    fwd = np.atleast_1d(model.forward(times)).astype(float) * np.ones(n + 1)
    u = np.zeros(paths, dtype=np.int64)
    cash = np.zeros(paths)
    dterms = np.zeros((paths, n + 1))
    for k in range(n):
        gain = _gain(c, fp, k)
        betaT = surface.coefficients[k].T
        Phi = surface.bases[k].design(_regressors(fp, c, k))
        local = np.empty((paths, vg.control_max + 1))
        for j in range(vg.control_max + 1):
            local[:, j] = np.einsum("pb,pb->p", Phi, betaT[np.minimum(u + j, vg.size - 1)])
        lo, hi = vg.control_bounds(k)
        ctl = choose_controls(gain, local, lo[u], hi[u], vg.delta_q, surface.bang)
        q = ctl * vg.delta_q
        cash += q * gain
        if c.payoff_kind == "call":
            dterms[:, k] = q * fp.spots[:, k] * (fp.spots[:, k] > c.strike) / fwd[k]
        elif c.payoff_kind == "indexed_strike":
            dterms[:, k] = q * gain / fwd[k]
        else:
            dterms[:, k] = q * fp.spots[:, k] / fwd[k]
        u += ctl
    Qn = u * vg.delta_q
    pen = penalty(c.mode, fp.spots[:, n], Qn, c)
    cash += pen
    dterms[:, n] = pen / fwd[n]
    return {"cash": cash, "delta_terms": dterms, "Q_n": Qn}
