"""Engine self-checks: endpoint controls vs enumeration, refinement in m."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..contract import ContractSpec
from ..models import ModelSpec
from ..schemes import SchemeConfig, UniformGrid
from .grid import grid_value_at, solve_grid
from .lsmc import solve_lsmc
from .surface import SolverError


@dataclass(frozen=True)
class BangBangReport:
    max_discrepancy: float
    max_relative: float
    location: tuple[int, int, int] | None
    per_date: np.ndarray
    off_lattice_max: float = 0.0

    @property
    def exact(self) -> bool:
        return self.max_discrepancy == 0.0


def bang_bang_vs_enumeration(contract: ContractSpec, model: ModelSpec, engine: str = "grid",
                             scheme: SchemeConfig | None = None, x_grid: UniformGrid | None = None,
                             state: str = "factor", delta_q: float = 1.0) -> BangBangReport:
    """Compare endpoint-restricted controls with full integer enumeration.

    Discrepancy is taken over every attainable (date, state node or path,
    volume node) on the lattice of multiples of ``q_max``, the volumes
    endpoint controls reach from zero. Off that lattice an interior control
    can be strictly better; its largest gap is kept in ``off_lattice_max``.
    ``max_relative`` scales by ``1 + max|v|`` per date.
    """
    if contract.n > 6 or contract.q_max > 3 or delta_q != 1.0:
        raise SolverError("enumeration oracle is for small instances (n <= 6, q_max <= 3, delta_q = 1)")
    if scheme is None:
        scheme = SchemeConfig(n=contract.n, maturity=contract.maturity, path_count=4096)
    if engine == "grid":
        full = solve_grid(model, contract, scheme, x_grid, state=state, delta_q=delta_q, bang=False, with_delta=False)
        bang = solve_grid(model, contract, scheme, x_grid, state=state, delta_q=delta_q, bang=True, with_delta=False)
    elif engine == "lsmc":
        full = solve_lsmc(model, contract, scheme, delta_q=delta_q, bang=False, keep_values=True)
        bang = solve_lsmc(model, contract, scheme, delta_q=delta_q, bang=True, keep_values=True)
    else:
        raise SolverError(f"unknown engine {engine!r}")
    per_date = np.zeros(contract.n + 1)
    per_rel = np.zeros(contract.n + 1)
    worst, loc, off = 0.0, None, 0.0
    units = np.arange(full.volumes.size)
    on_lattice = units % full.volumes.control_max == 0
    for k in range(contract.n + 1):
        reach = full.volumes.attainable_mask(k)
        stray = reach & ~on_lattice
        if stray.any():
            off = max(off, float(np.abs(full.values[k][:, stray] - bang.values[k][:, stray]).max()))
        mask = reach & on_lattice
        a, b = full.values[k][:, mask], bang.values[k][:, mask]
        diff = np.abs(a - b)
        per_date[k] = diff.max()
        per_rel[k] = per_date[k] / (1.0 + np.abs(a).max())
        if per_date[k] > worst:
            worst = float(per_date[k])
            i, j = np.unravel_index(np.argmax(diff), diff.shape)
            loc = (k, int(i), int(np.flatnonzero(mask)[j]))
    return BangBangReport(worst, float(per_rel.max()), loc, per_date, off)


@dataclass(frozen=True)
class RefinementTable:
    m_values: tuple[int, ...]
    prices: np.ndarray
    reference: float | None

    @property
    def gaps(self) -> np.ndarray:
        """|v(m_{i+1}) - v(m_i)| for successive entries."""
        return np.abs(np.diff(self.prices))

    @property
    def relative_errors(self) -> np.ndarray | None:
        if self.reference is None:
            return None
        return np.abs(self.prices - self.reference) / abs(self.reference)


def m_refinement_study(model: ModelSpec, contract: ContractSpec, m_values, x_grid: UniformGrid | None = None,
                       reference: bool = True, quad_nodes: int = 32, compose: str = "gaussian",
                       delta_q: float = 1.0) -> RefinementTable:
    """Grid prices for each m on one fixed x-grid, plus the exact-transition reference."""
    m_values = tuple(int(m) for m in m_values)
    prices = []
    for m in m_values:
        sch = SchemeConfig(n=contract.n, maturity=contract.maturity, m=m, quad_nodes=quad_nodes)
        surf = solve_grid(model, contract, sch, x_grid, compose=compose, delta_q=delta_q, with_delta=False)
        x_grid = surf.x_grid
        prices.append(grid_value_at(surf, 0.0))
    ref = None
    if reference:
        sch = SchemeConfig(n=contract.n, maturity=contract.maturity, m=1, quad_nodes=quad_nodes)
        surf = solve_grid(model, contract, sch, x_grid, transition="exact", delta_q=delta_q, with_delta=False)
        ref = grid_value_at(surf, 0.0)
    return RefinementTable(m_values, np.array(prices), ref)
