"""YAML experiment configuration.

Blocks: ``contract``, ``model``, ``solver``, ``engine``, ``sweep``,
``scenarios`` and an optional ``verification`` block. Scenarios are named
partial overrides of the other blocks. Units: alpha in 1/years, sigma in
1/sqrt(years), maturity in years (default n/365, daily exercise).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .contract import ContractError, ContractSpec
from .models import ModelError, ModelSpec
from .schemes import SchemeConfig, SchemeError, UniformGrid


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


CONTRACT_KEYS = {"n_exercise", "maturity", "q_max", "Q_min", "Q_max", "strike", "constraint",
                 "penalty_A", "penalty_B", "payoff", "index_window"}
MODEL_KEYS = {"factor_count", "alpha", "sigma", "rho", "f0"}
SOLVER_KEYS = {"m", "paths", "seed", "truncation_lambda", "quad_nodes", "x_grid"}
ENGINE_KEYS = {"engine", "basis_degree", "q_step", "bang_bang"}
SWEEP_KEYS = {"f0_min", "f0_max", "f0_step"}
TOP_KEYS = {"contract", "model", "solver", "engine", "sweep", "scenarios", "output", "seed", "verification"}

DEFAULTS = {
    "contract": {"n_exercise": 15, "q_max": 6, "Q_min": 50, "Q_max": 80, "strike": 20.0, "constraint": "firm",
                 "penalty_A": 0.0, "penalty_B": 0.0, "payoff": "fixed_strike", "index_window": None},
    "model": {"factor_count": 1, "alpha": [0.4], "sigma": [0.2], "rho": 0.0, "f0": 20.0},
    "solver": {"m": 1, "paths": 100_000, "seed": 0, "truncation_lambda": None, "quad_nodes": 32, "x_grid": None},
    "engine": {"engine": "grid", "basis_degree": 3, "q_step": 1, "bang_bang": "off"},
    "sweep": {"f0_min": 5.0, "f0_max": 35.0, "f0_step": 2.5},
}


@dataclass(frozen=True)
class EngineConfig:
    engine: str = "grid"
    basis_degree: int = 3
    q_step: float = 1.0
    bang_bang: str = "off"


@dataclass(frozen=True)
class SweepSpec:
    f0_min: float
    f0_max: float
    f0_step: float

    def values(self) -> np.ndarray:
        count = int(np.floor((self.f0_max - self.f0_min) / self.f0_step + 1e-9)) + 1
        return self.f0_min + self.f0_step * np.arange(count)


@dataclass(frozen=True)
class ExperimentConfig:
    contract: ContractSpec
    model: ModelSpec
    scheme: SchemeConfig
    engine: EngineConfig
    sweep: SweepSpec
    x_grid: UniformGrid | None
    scenarios: tuple[str, ...]
    output: Path
    seed: int
    verification: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    name: str = "base"

    def scenario(self, name: str) -> "ExperimentConfig":
        """The configuration with scenario ``name``'s overrides applied."""
        for sc in self.raw.get("scenarios") or []:
            if sc["name"] == name:
                merged = copy.deepcopy(self.raw)
                for block, over in sc.items():
                    if block == "name":
                        continue
                    merged.setdefault(block, {}).update(over)
                merged["scenarios"] = [{"name": name}]
                return _build(merged, name)
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(self.scenarios)}")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        raw.setdefault("solver", {})["seed"] = int(seed)
        return _build(raw, self.name)

    def with_engine(self, engine: str) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw.setdefault("engine", {})["engine"] = engine
        return _build(raw, self.name)


def _check_keys(block: str, given: dict, allowed: set):
    if not isinstance(given, dict):
        raise ConfigError(f"block {block!r} must be a mapping")
    extra = set(given) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {block!r}: {', '.join(sorted(extra))}")


def _curve(f0, n: int, maturity: float):
    if np.isscalar(f0):
        return float(f0)
    vals = np.asarray(f0, dtype=float)
    if vals.ndim != 1 or len(vals) != n + 1:
        raise ConfigError(f"f0 list must have one value per date t_0..t_n ({n + 1} values)")
    if np.any(vals <= 0):
        raise ConfigError("f0 values must be > 0")
    times = maturity * np.arange(n + 1) / n
    return lambda t: float(np.interp(t, times, vals))


def _bang_mode(v) -> str:
    if v is True:
        return "on"
    if v is False:
        return "off"
    if v not in ("on", "off", "verify"):
        raise ConfigError(f"bang_bang must be on, off or verify, got {v!r}")
    return v


def _build(raw: dict, name: str = "base") -> ExperimentConfig:
    _check_keys("top level", raw, TOP_KEYS)
    blocks = {}
    for block, keys in (("contract", CONTRACT_KEYS), ("model", MODEL_KEYS), ("solver", SOLVER_KEYS),
                        ("engine", ENGINE_KEYS), ("sweep", SWEEP_KEYS)):
        given = raw.get(block) or {}
        _check_keys(block, given, keys)
        blocks[block] = {**DEFAULTS[block], **given}
    c, mo, so, en, sw = (blocks[b] for b in ("contract", "model", "solver", "engine", "sweep"))
    seed = int(raw.get("seed", so["seed"]))
    try:
        n = int(c["n_exercise"])
        maturity = float(c.get("maturity") or n / 365.0)
        contract = ContractSpec(n=n, maturity=maturity, q_max=float(c["q_max"]), Q_min=float(c["Q_min"]),
                                Q_max=float(c["Q_max"]), strike=float(c["strike"]), mode=c["constraint"],
                                penalty_A=float(c["penalty_A"]), penalty_B=float(c["penalty_B"]),
                                payoff_kind=c["payoff"], index_window=c["index_window"])
        if not np.isscalar(mo["rho"]):
            raise ConfigError("rho must be a single equicorrelation scalar")
        alpha, sigma = list(np.atleast_1d(mo["alpha"])), list(np.atleast_1d(mo["sigma"]))
        if len(alpha) != int(mo["factor_count"]) or len(sigma) != int(mo["factor_count"]):
            raise ConfigError("alpha and sigma must have factor_count entries")
        model = ModelSpec(tuple(alpha), tuple(sigma), float(mo["rho"]), _curve(mo["f0"], n, maturity))
        scheme = SchemeConfig(n=n, maturity=maturity, m=int(so["m"]), truncation_lambda=so["truncation_lambda"],
                              seed=seed, path_count=int(so["paths"]), quad_nodes=int(so["quad_nodes"]))
        xg = so["x_grid"]
        x_grid = None if xg is None else UniformGrid(float(xg["min"]), float(xg["max"]), int(xg["points"]))
    except (ContractError, ModelError, SchemeError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if en["engine"] not in ("grid", "lsmc"):
        raise ConfigError(f"engine must be grid or lsmc, got {en['engine']!r}")
    engine = EngineConfig(en["engine"], int(en["basis_degree"]), float(en["q_step"]), _bang_mode(en["bang_bang"]))
    sweep = SweepSpec(float(sw["f0_min"]), float(sw["f0_max"]), float(sw["f0_step"]))
    if not (sweep.f0_step > 0 and sweep.f0_max >= sweep.f0_min > 0):
        raise ConfigError("sweep needs 0 < f0_min <= f0_max and f0_step > 0")
    scen = raw.get("scenarios") or [{"name": "base"}]
    names = []
    for sc in scen:
        if not isinstance(sc, dict) or "name" not in sc:
            raise ConfigError("each scenario needs a name")
        for block, over in sc.items():
            if block != "name" and block not in ("contract", "model", "solver", "engine", "sweep"):
                raise ConfigError(f"scenario {sc['name']!r} overrides unknown block {block!r}")
        names.append(str(sc["name"]))
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique")
    raw = copy.deepcopy(raw)
    raw["scenarios"] = scen
    return ExperimentConfig(contract, model, scheme, engine, sweep, x_grid, tuple(names),
                            Path(raw.get("output", "results")), seed, dict(raw.get("verification") or {}), raw, name)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a configuration mapping, including every scenario."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    cfg = _build(raw)
    for name in cfg.scenarios:
        if any(sc.get("name") == name and len(sc) > 1 for sc in raw.get("scenarios") or []):
            cfg.scenario(name)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return parse_config(raw or {})
