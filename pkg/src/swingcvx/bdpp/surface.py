"""Value surfaces and pricing results shared by both engines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..contract import ContractSpec, VolumeGrid
from ..models import ModelSpec
from ..schemes import SchemeConfig, UniformGrid


class SolverError(ValueError):
    """Unsupported engine/contract combination."""


@dataclass
class ValueSurface:
    """Backward-recursion output.

    Grid engine: ``values[k]`` and ``continuation[k]`` are (x-nodes, volume
    nodes) arrays, -inf on unattainable volumes. ``state`` is ``"factor"``
    (OU factor, spot = F0 exp(vol x - lambda^2/2)) or ``"price"`` (the
    state is the price itself).

    Regression engine: ``coefficients[k]`` is (basis size, volume nodes)
    and ``bases[k]`` rebuilds the design matrix on new paths.
    """

    engine: str
    contract: ContractSpec
    volumes: VolumeGrid
    model: ModelSpec | None
    scheme: SchemeConfig
    bang: bool = False
    state: str = "factor"
    x_grid: UniformGrid | None = None
    values: list[np.ndarray] = field(default_factory=list)
    continuation: list[np.ndarray] = field(default_factory=list)
    choices: list[np.ndarray] = field(default_factory=list)
    coefficients: list[np.ndarray] = field(default_factory=list)
    bases: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.contract.n


@dataclass(frozen=True)
class DeltaEstimate:
    delta: float
    std_error: float
    by_date: np.ndarray


@dataclass(frozen=True)
class PricingResult:
    price: float
    std_error: float
    delta: float
    delta_std_error: float = 0.0
    delta_by_date: np.ndarray | None = None
    policy_summary: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    engine: str = "grid"
