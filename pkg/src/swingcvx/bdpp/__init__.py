"""Backward dynamic programming for swing contracts."""

from __future__ import annotations

import numpy as np

from .grid import (default_factor_grid, default_price_grid, factor_operator, factor_step_law, grid_delta,
                   grid_initial_state, grid_value_at, simulate_grid_policy, solve_grid)
from .lsmc import PolynomialBasis, simulate_factor_paths, simulate_lsmc_policy, solve_lsmc
from .studies import (BangBangReport, RefinementTable, bang_bang_vs_enumeration, m_refinement_study)
from .surface import DeltaEstimate, PricingResult, SolverError, ValueSurface

__all__ = [
    "BangBangReport", "DeltaEstimate", "PolynomialBasis", "PricingResult", "RefinementTable", "SolverError",
    "ValueSurface", "bang_bang_vs_enumeration", "default_factor_grid", "default_price_grid", "delta_envelope",
    "factor_operator", "factor_step_law", "m_refinement_study", "price", "simulate_factor_paths",
    "simulate_policy", "solve_grid", "solve_lsmc",
]


def simulate_policy(surface: ValueSurface, paths: int, seed: int, x0=None, workers: int = 1) -> dict:
    if surface.engine == "grid":
        return simulate_grid_policy(surface, paths, seed, x0, workers)
    if x0 is not None:
        raise SolverError("the regression engine starts from the model's initial curve")
    return simulate_lsmc_policy(surface, paths, seed, workers)


def _summary(Qn: np.ndarray) -> dict:
    vals, counts = np.unique(Qn, return_counts=True)
    return {float(v): c / len(Qn) for v, c in zip(vals, counts)}


def delta_envelope(surface: ValueSurface, paths: int | None = None, seed: int | None = None,
                   x0=None, workers: int = 1) -> DeltaEstimate:
    """Forward-simulated envelope delta E[sum_k q*_k S_k / F0(t_k)] (+ penalty term).

    ``by_date`` has one entry per exercise date plus the terminal penalty.
    """
    paths = surface.scheme.path_count if paths is None else paths
    seed = surface.scheme.seed + 1 if seed is None else seed
    sim = simulate_policy(surface, paths, seed, x0, workers)
    terms = sim["delta_terms"]
    total = terms.sum(axis=1)
    return DeltaEstimate(float(total.mean()), float(total.std(ddof=1) / np.sqrt(len(total))), terms.mean(axis=0))


def price(surface: ValueSurface, x0=None, Q0: float = 0.0, paths: int | None = None,
          seed: int | None = None, workers: int = 1) -> PricingResult:
    """Contract value at inception with forward policy statistics.

    Grid engine: price read from v_0 at x0; delta, its standard error and
    ``policy_summary`` from a forward run of ``paths`` paths (default the
    scheme's path count, seed + 1). The backward policy-evaluation delta is
    kept in ``diagnostics["backward_delta"]``. Regression engine: price, delta and their standard errors
    come from the forward run on an independent ensemble (seed + 1).
    """
    if Q0 != 0.0:
        raise SolverError("only Q0 = 0 is attainable at inception")
    diag = dict(surface.diagnostics)
    if surface.engine == "grid":
        v = grid_value_at(surface, grid_initial_state(surface, x0))
        diag["backward_delta"] = grid_delta(surface, x0)[0]
        n_paths = surface.scheme.path_count if paths is None else paths
        sim = simulate_policy(surface, n_paths, surface.scheme.seed + 1 if seed is None else seed, x0, workers)
        terms = sim["delta_terms"]
        total = terms.sum(axis=1)
        dse = float(total.std(ddof=1) / np.sqrt(len(total)))
        diag["forward_price"] = float(sim["cash"].mean())
        return PricingResult(v, 0.0, float(total.mean()), dse, terms.mean(axis=0), _summary(sim["Q_n"]), diag,
                             "grid")
    n_paths = surface.scheme.path_count if paths is None else paths
    sim = simulate_policy(surface, n_paths, surface.scheme.seed + 1 if seed is None else seed, x0, workers)
    cash = sim["cash"]
    total = sim["delta_terms"].sum(axis=1)
    se = float(cash.std(ddof=1) / np.sqrt(len(cash)))
    dse = float(total.std(ddof=1) / np.sqrt(len(total)))
    diag["in_sample_price"] = surface.extra.get("in_sample_price")
    return PricingResult(float(cash.mean()), se, float(total.mean()), dse, sim["delta_terms"].mean(axis=0),
                         _summary(sim["Q_n"]), diag, "lsmc")
