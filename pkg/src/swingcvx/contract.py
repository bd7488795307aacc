"""Swing contract: volume constraints, admissible controls, payoffs, penalties."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

FIRM = "firm"
PEN = "pen"
PAYOFF_KINDS = ("fixed_strike", "indexed_strike", "call")


class ContractError(ValueError):
    """Invalid contract or volume-grid configuration."""


def _is_int(v) -> bool:
    return float(v) == int(round(float(v)))


@dataclass(frozen=True)
class ContractSpec:
    """Take-or-pay swing contract.

    Local constraint 0 <= q_k <= q_max on each of the n exercise dates,
    global constraint Q_min <= Q_n <= Q_max. ``index_window`` is the number
    of past dates averaged by the indexed strike (None = all past dates).
    """

    n: int = 15
    maturity: float = 15.0 / 365.0
    q_max: float = 6.0
    Q_min: float = 50.0
    Q_max: float = 80.0
    strike: float = 20.0
    mode: str = FIRM
    penalty_A: float = 0.0
    penalty_B: float = 0.0
    payoff_kind: str = "fixed_strike"
    index_window: int | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ContractError("n must be a positive integer")
        if not self.maturity > 0:
            raise ContractError("maturity must be > 0")
        if self.mode not in (FIRM, PEN):
            raise ContractError(f"mode must be 'firm' or 'pen', got {self.mode!r}")
        if self.payoff_kind not in PAYOFF_KINDS:
            raise ContractError(f"unknown payoff kind {self.payoff_kind!r}")
        if not (0 <= self.Q_min <= self.Q_max < np.inf):
            raise ContractError("need 0 <= Q_min <= Q_max < inf")
        if not self.q_max > 0:
            raise ContractError("q_max must be > 0")
        if not all(_is_int(v) for v in (self.q_max, self.Q_min, self.Q_max)):
            raise ContractError("q_max, Q_min and Q_max must be integers")
        if not _is_int((self.Q_max - self.Q_min) / self.q_max):
            raise ContractError("Q_max - Q_min must be a multiple of q_max")
        if self.penalty_A < 0 or self.penalty_B < 0:
            raise ContractError("penalty coefficients must be >= 0")
        if self.mode == FIRM and self.Q_min > self.n * self.q_max:
            raise ContractError("firm contract infeasible: Q_min > n * q_max")
        if self.index_window is not None and int(self.index_window) < 1:
            raise ContractError("index_window must be a positive number of dates")

    def Q_down(self, k: int) -> float:
        """Lowest cumulative volume at date k from which Q_min is still reachable."""
        if self.mode == PEN:
            return 0.0
        return max(0.0, self.Q_min - (self.n - k) * self.q_max)

    def Q_up(self, k: int) -> float:
        if self.mode == PEN:
            return k * self.q_max
        return min(k * self.q_max, self.Q_max)

    def admissible(self, k: int, Q: float) -> tuple[float, float]:
        """Admissible purchase interval at date k given cumulative volume Q."""
        if self.mode == PEN:
            return 0.0, self.q_max
        return max(0.0, self.Q_down(k + 1) - Q), min(self.q_max, self.Q_up(k + 1) - Q)

    def index_dates(self, k: int) -> range:
        """Dates averaged by the indexed strike at date k; {0} at k = 0."""
        if k == 0:
            return range(0, 1)
        start = 0 if self.index_window is None else max(0, k - int(self.index_window))
        return range(start, k)


@dataclass(frozen=True)
class VolumeGrid:
    """Cumulative volumes in integer units of ``delta_q`` on 0..size-1.

    ``lo[k][u] > hi[k][u]`` marks an unattainable node at date k.
    """

    contract: ContractSpec
    delta_q: float

    @cached_property
    def unit_max(self) -> int:
        c = self.contract
        return int(round(c.Q_up(c.n) / self.delta_q))

    @property
    def size(self) -> int:
        return self.unit_max + 1

    @property
    def control_max(self) -> int:
        return int(round(self.contract.q_max / self.delta_q))

    def volumes(self) -> np.ndarray:
        return self.delta_q * np.arange(self.size)

    def attainable_bounds(self, k: int) -> tuple[int, int]:
        c = self.contract
        return int(round(c.Q_down(k) / self.delta_q)), int(round(c.Q_up(k) / self.delta_q))

    def attainable(self, k: int) -> np.ndarray:
        a, b = self.attainable_bounds(k)
        return self.delta_q * np.arange(a, b + 1)

    def attainable_mask(self, k: int) -> np.ndarray:
        a, b = self.attainable_bounds(k)
        u = np.arange(self.size)
        return (u >= a) & (u <= b)

    @cached_property
    def _controls(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.contract
        n, U = c.n, self.size
        lo = np.ones((n, U), dtype=np.int64)
        hi = np.zeros((n, U), dtype=np.int64)
        for k in range(n):
            mask = self.attainable_mask(k)
            for u in np.flatnonzero(mask):
                qa, qb = c.admissible(k, u * self.delta_q)
                a, b = int(round(qa / self.delta_q)), int(round(qb / self.delta_q))
                b = min(b, U - 1 - u)
                lo[k, u], hi[k, u] = a, b
        lo.setflags(write=False)
        hi.setflags(write=False)
        return lo, hi

    def control_bounds(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer control bounds (units of delta_q) per volume node at date k."""
        lo, hi = self._controls
        return lo[k], hi[k]


def build_volume_grid(contract: ContractSpec, delta_q: float = 1.0) -> VolumeGrid:
    if not delta_q > 0:
        raise ContractError("delta_q must be > 0")
    checks = [contract.q_max]
    if contract.mode == FIRM:
        checks += [contract.Q_min, contract.Q_max]
    for v in checks:
        if not _is_int(v / delta_q):
            raise ContractError(f"delta_q={delta_q} does not divide {v}")
    grid = VolumeGrid(contract, float(delta_q))
    for k in range(contract.n):
        lo, hi = grid.control_bounds(k)
        if np.any(grid.attainable_mask(k) & (lo > hi)):
            raise ContractError(f"empty admissible set at date {k}")
    return grid


def index_average(spots: np.ndarray, k: int, contract: ContractSpec) -> np.ndarray:
    """Mean of past spots over the contract's index window; last axis is time."""
    dates = contract.index_dates(k)
    if len(dates) == 0:
        raise ContractError(f"empty index window at date {k}")
    return np.asarray(spots)[..., dates.start:dates.stop].mean(axis=-1)


def unit_gain(kind: str, spot, strike: float = 0.0, index=None):
    """Payoff per unit of volume."""
    spot = np.asarray(spot, dtype=float)
    if kind == "fixed_strike":
        out = spot - strike
    elif kind == "call":
        out = np.maximum(spot - strike, 0.0)
    elif kind == "indexed_strike":
        if index is None:
            raise ContractError("indexed_strike needs an index value")
        out = spot - np.asarray(index, dtype=float)
    else:
        raise ContractError(f"unknown payoff kind {kind!r}")
    return float(out) if out.ndim == 0 else out


def payoff(kind: str, k: int, q, spots, strike: float = 0.0, contract: ContractSpec | None = None):
    """Cash flow of buying ``q`` at date k.

    ``spots`` holds S_{t_0..t_k} on its last axis (a scalar is taken as
    S_{t_k}); the indexed strike averages over ``contract.index_dates(k)``.
    """
    if np.any(np.asarray(q) < 0):
        raise ContractError("q must be >= 0")
    spots = np.asarray(spots, dtype=float)
    spot = spots if spots.ndim == 0 else spots[..., k]
    index = None
    if kind == "indexed_strike":
        if contract is None:
            raise ContractError("indexed_strike needs the contract's index window")
        if spots.ndim == 0:
            raise ContractError("indexed_strike needs the spot path")
        index = index_average(spots, k, contract)
    return np.asarray(q, dtype=float) * unit_gain(kind, spot, strike, index)


def penalty(mode: str, spot, Q_n, contract: ContractSpec):
    """Terminal penalty: 0 in firm mode, ``-S (A (Q - Q_min)_- + B (Q - Q_max)_+)`` in pen mode."""
    Q_n = np.asarray(Q_n, dtype=float)
    if np.any(Q_n < 0):
        raise ContractError("Q_n must be >= 0")
    spot = np.asarray(spot, dtype=float)
    if mode == FIRM:
        out = np.zeros(np.broadcast(spot, Q_n).shape)
    elif mode == PEN:
        short = np.maximum(contract.Q_min - Q_n, 0.0)
        excess = np.maximum(Q_n - contract.Q_max, 0.0)
        out = -spot * (contract.penalty_A * short + contract.penalty_B * excess)
    else:
        raise ContractError(f"unknown mode {mode!r}")
    return float(out) if out.ndim == 0 else out
