"""Experiment orchestration: pricing sweeps, penalty runs, verification suite."""

from __future__ import annotations

import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bdpp import bang_bang_vs_enumeration, price, solve_grid, solve_lsmc
from .bdpp.surface import PricingResult
from .config import ConfigError, ExperimentConfig
from .contract import FIRM, PEN, ContractSpec
from .convex_order import check_matrix_field_convexity, lipschitz_chain_bound
from .models import ModelSpec, cholesky_explicit, gamma_matrix, scalar_field, uniform_times, vol_field_multifactor
from .schemes import (DEFAULT_TRUNCATION_LAMBDA, price_diffusion, truncated_plain_gap,
                      truncated_stein_residual, truncation_threshold)


class NumericalError(ArithmeticError):
    """An engine produced inconsistent or non-finite numbers."""


class ExperimentError(RuntimeError):
    """A scenario failed; the message names the scenario."""


# --- pricing ------------------------------------------------------------------


def price_config(cfg: ExperimentConfig, f0: float | None = None, engine: str | None = None,
                 workers: int = 1) -> PricingResult:
    """Price the configured contract, optionally at a flat initial curve ``f0``."""
    engine = engine or cfg.engine.engine
    model = cfg.model if f0 is None else cfg.model.with_curve(float(f0))
    mode = cfg.engine.bang_bang
    dq = cfg.engine.q_step

    def solve(bang):
        if engine == "grid":
            return price(solve_grid(model, cfg.contract, cfg.scheme, cfg.x_grid, delta_q=dq, bang=bang))
        if engine == "lsmc":
            surf = solve_lsmc(model, cfg.contract, cfg.scheme, cfg.engine.basis_degree, delta_q=dq, bang=bang,
                              workers=workers)
            return price(surf, workers=workers)
        raise ConfigError(f"unknown engine {engine!r}")

    res = solve(mode == "on")
    if mode == "verify":
        alt = solve(True)
        if abs(alt.price - res.price) > 1e-9 * (1.0 + abs(res.price)):
            raise NumericalError(f"endpoint controls disagree with enumeration: {alt.price} vs {res.price}")
    if not np.isfinite(res.price):
        raise NumericalError("non-finite price")
    return res


@dataclass(frozen=True)
class SweepResult:
    scenario: str
    rows: list[tuple[float, float, float]]
    std_errors: list[float]
    path: Path | None

    @property
    def f0(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def prices(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def format_csv(rows) -> str:
    lines = ["f0,price,delta"]
    lines += [f"{f0:.10g},{p:.12g},{d:.12g}" for f0, p, d in rows]
    return "\n".join(lines) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _sweep_one(cfg: ExperimentConfig, engine: str | None, out: Path | None) -> SweepResult:
    rows, ses = [], []
    for f0 in cfg.sweep.values():
        r = price_config(cfg, f0, engine)
        rows.append((float(f0), r.price, r.delta))
        ses.append(r.std_error)
    path = None
    if out is not None:
        path = Path(out) / f"{cfg.name}.csv"
        write_atomic(path, format_csv(rows))
    return SweepResult(cfg.name, rows, ses, path)


def run_sweep(cfg: ExperimentConfig, engine: str | None = None, scenario: str | None = None,
              out: Path | str | None = None, workers: int = 1) -> dict[str, SweepResult]:
    """One CSV per scenario with columns f0, price, delta, rows ordered by f0."""
    names = [scenario] if scenario else list(cfg.scenarios)
    configs = [cfg.scenario(n) for n in names]

    def job(c):
        try:
            return _sweep_one(c, engine, out)
        except (ConfigError, NumericalError):
            raise
        except Exception as exc:
            raise ExperimentError(f"scenario {c.name!r}: {exc}") from exc

    if workers > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, configs))
    else:
        results = [job(c) for c in configs]
    return {r.scenario: r for r in results}


def run_penalty_experiment(cfg: ExperimentConfig, engine: str | None = None, scenario: str | None = None,
                           out: Path | str | None = None, workers: int = 1) -> dict[str, SweepResult]:
    """Sweep under the penalty constraint; every scenario must be in pen mode."""
    names = [scenario] if scenario else list(cfg.scenarios)
    for n in names:
        if cfg.scenario(n).contract.mode != PEN:
            raise ConfigError(f"scenario {n!r} is not in pen mode")
    return run_sweep(cfg, engine, scenario, out, workers)


# --- truncated Euler study ----------------------------------------------------

GAP_DEFAULTS = {"alpha": 0.4, "sigma": 0.2, "maturity": 1.0, "n": 1, "m_values": [2, 4, 8, 16],
                "x_min": -3.0, "x_max": 3.0, "x_points": 13, "paths": 100_000, "lambda": DEFAULT_TRUNCATION_LAMBDA,
                "u": 2.0}


def gap_settings(cfg: ExperimentConfig | None) -> dict:
    given = {} if cfg is None else dict(cfg.verification.get("euler_gap") or {})
    extra = set(given) - set(GAP_DEFAULTS)
    if extra:
        raise ConfigError(f"unknown euler_gap keys: {', '.join(sorted(extra))}")
    return {**GAP_DEFAULTS, **given}


def run_euler_gap(cfg: ExperimentConfig | None = None, seed: int = 0, out: Path | str | None = None,
                  paths: int | None = None):
    """Coupled truncated vs plain Euler study on the one-factor price dynamics."""
    s = gap_settings(cfg)
    model = ModelSpec((s["alpha"],), (s["sigma"],))
    diff = price_diffusion(model, float(s["maturity"]))
    xs = np.linspace(s["x_min"], s["x_max"], int(s["x_points"]))
    table = truncated_plain_gap(diff, float(s["maturity"]), int(s["n"]), s["m_values"], xs, float(s["u"]),
                                int(paths or s["paths"]), seed, float(s["lambda"]))
    if out is not None:
        lines = ["m,x,s_h,gap,ratio"]
        for i, m in enumerate(table.m_values):
            for j, x in enumerate(xs):
                lines.append(f"{m},{x:.10g},{table.thresholds[i]:.10g},{table.gaps[i, j]:.12g},"
                             f"{table.ratio[i, j]:.12g}")
        write_atomic(Path(out) / "euler_gap.csv", "\n".join(lines) + "\n")
    return table


def gap_trend_ok(table) -> tuple[bool, float, str]:
    """Strictly decreasing sup gap and linear constants, and at most linear growth in |x|."""
    sup = table.sup_gap
    cm = table.linear_constants
    dec = bool(np.all(np.diff(sup) < 0) and np.all(np.diff(cm) < 0))
    xs = np.abs(table.x_values)
    big = xs >= 0.5
    slopes = []
    for g in table.gaps:
        if np.all(g[big] > 0):
            slopes.append(np.polyfit(np.log(xs[big]), np.log(g[big]), 1)[0])
    slope = float(max(slopes)) if slopes else 0.0
    ok = dec and slope <= 1.05 and bool(np.all(np.isfinite(cm)))
    detail = f"sup gaps {np.array2string(sup, precision=4)}, c_m {np.array2string(cm, precision=4)}, growth exponent {slope:.4f}"
    return ok, float(np.max(np.diff(sup))), detail


# --- verification suite ---------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    detail: str = ""
    seconds: float = 0.0


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        lines = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            lines.append(f"[{tag}] {c.name}: worst={c.worst:.3e} ({c.seconds:.2f}s) {c.detail}".rstrip())
        lines.append(f"{len(self.checks) - len(self.failures)}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def check_cholesky(qs=range(2, 11), points: int = 20) -> CheckResult:
    worst = 0.0
    for q in qs:
        lo = -1.0 / (q - 1) + 0.01
        for rho in np.linspace(lo, 0.99, points):
            L = cholesky_explicit(rho, q)
            worst = max(worst, float(np.abs(L @ L.T - gamma_matrix(rho, q)).max()))
    return CheckResult("cholesky identity", worst <= 1e-12, worst, "max |L L^T - Gamma|")


def check_field_convexity(cfg: ExperimentConfig) -> list[CheckResult]:
    c, mo = cfg.contract, cfg.model
    times = uniform_times(c.maturity, c.n)
    fld = vol_field_multifactor(mo, c.maturity, times)
    f0 = float(mo.forward(0.0))
    xs = np.linspace(0.0, 2.0 * f0, 41)
    v = check_matrix_field_convexity(fld, xs, steps=range(c.n))
    out = [CheckResult("model field convexity", bool(v.holds), v.worst_violation, str(v.witness))]
    for spec in cfg.verification.get("scalar_fields") or []:
        xk, yk = np.asarray(spec["x"], dtype=float), np.asarray(spec["sigma"], dtype=float)
        fld = scalar_field(lambda x, xk=xk, yk=yk: float(np.interp(x, xk, yk)))
        grid = np.linspace(xk.min(), xk.max(), int(spec.get("points", 61)))
        v = check_matrix_field_convexity(fld, grid)
        out.append(CheckResult(f"scalar field convexity [{spec.get('name', 'field')}]", bool(v.holds),
                               v.worst_violation, f"witness {v.witness}"))
    return out


def second_differences(values: np.ndarray) -> np.ndarray:
    return values[2:] - 2.0 * values[1:-1] + values[:-2]


def check_convexity_in_f0(cfg: ExperimentConfig) -> CheckResult:
    f0s = cfg.sweep.values()
    prices = np.array([price_config(cfg, f0, "grid").price for f0 in f0s])
    scale = max(1.0, float(np.abs(prices).max()))
    d2 = second_differences(prices)
    worst = max(0.0, -float(d2.min())) if len(d2) else 0.0
    return CheckResult("convexity in F0", worst <= 1e-6 * scale, worst, f"{len(f0s)} sweep points")


def one_factor(model: ModelSpec, sigma: float) -> ModelSpec:
    return ModelSpec((model.alpha[0],), (float(sigma),), 0.0, model.initial_curve)


def domination_gap(contract: ContractSpec, low: ModelSpec, high: ModelSpec, scheme, x_grid=None) -> float:
    """max over (k, x-node, Q) of v_low - v_high on the price-state grid."""
    a = solve_grid(low, contract, scheme, x_grid, state="price", with_delta=False)
    b = solve_grid(high, contract, scheme, a.x_grid, state="price", with_delta=False)
    worst = -np.inf
    for k in range(contract.n + 1):
        mask = a.volumes.attainable_mask(k)
        worst = max(worst, float((a.values[k][:, mask] - b.values[k][:, mask]).max()))
    return worst


def check_domination(cfg: ExperimentConfig) -> CheckResult:
    lo_s, hi_s = cfg.verification.get("domination_sigmas", [0.2, 0.7])
    worst = domination_gap(cfg.contract, one_factor(cfg.model, lo_s), one_factor(cfg.model, hi_s), cfg.scheme)
    return CheckResult("domination criterion", worst <= 1e-8, max(worst, 0.0), f"sigma {lo_s} vs {hi_s}")


def value_convexity_violation(surface) -> float:
    """Worst negative second difference of v_k(., Q), relative to the value scale."""
    worst = 0.0
    for k in range(surface.n + 1):
        mask = surface.volumes.attainable_mask(k)
        v = surface.values[k][:, mask]
        scale = max(1.0, float(np.abs(v).max()))
        worst = max(worst, -float(second_differences(v).min()) / scale)
    return worst


def lipschitz_report(surface, sigma_lip: float, kappa_sup: float = 0.0) -> tuple[float, bool, str]:
    """Worst ratio of empirical slope to the chain bound, and the envelope inequality."""
    c, sch = surface.contract, surface.scheme
    dx = surface.x_grid.dx
    payoff_lips = [c.q_max] * c.n
    if c.mode == FIRM:
        pen_lip = 0.0
    else:
        q = surface.volumes.volumes()
        pen_lip = float(np.max(c.penalty_A * np.maximum(c.Q_min - q, 0) + c.penalty_B * np.maximum(q - c.Q_max, 0)))
    worst_ratio, env_ok = 0.0, True
    for k in range(c.n + 1):
        lb = lipschitz_chain_bound(k, sch.m, sch.h, kappa_sup, sigma_lip, payoff_lips, pen_lip)
        env_ok &= lb.envelope_holds
        mask = surface.volumes.attainable_mask(k)
        slope = float(np.abs(np.diff(surface.values[k][:, mask], axis=0)).max() / dx)
        if lb.bound == 0:
            ratio = 0.0 if slope <= 1e-12 else np.inf
        else:
            ratio = slope / lb.bound
        worst_ratio = max(worst_ratio, ratio)
    return worst_ratio, env_ok, f"max slope/bound {worst_ratio:.4f}"


def check_lipschitz(cfg: ExperimentConfig) -> CheckResult:
    model = one_factor(cfg.model, cfg.model.sigma[0])
    surf = solve_grid(model, cfg.contract, cfg.scheme, state="price", with_delta=False)
    ratio, env_ok, detail = lipschitz_report(surf, surf.extra["diffusion"].sigma_lip)
    return CheckResult("Lipschitz chain bound", ratio <= 1.0 and env_ok, ratio, detail)


def check_value_convexity(cfg: ExperimentConfig) -> CheckResult:
    model = one_factor(cfg.model, cfg.model.sigma[0])
    surf = solve_grid(model, cfg.contract, cfg.scheme, state="price", with_delta=False)
    worst = value_convexity_violation(surf)
    return CheckResult("convexity propagation", worst <= 1e-8, worst, "price-state value slices")


def small_contract(contract: ContractSpec) -> ContractSpec:
    return replace(contract, n=5, maturity=5.0 / 365.0, q_max=2.0, Q_min=4.0, Q_max=8.0)


def check_bang_bang(cfg: ExperimentConfig) -> CheckResult:
    if cfg.contract.payoff_kind == "indexed_strike":
        return CheckResult("bang-bang oracle", True, 0.0, "skipped: grid engine needs a Markov payoff")
    small = small_contract(cfg.contract)
    rep = bang_bang_vs_enumeration(small, one_factor(cfg.model, cfg.model.sigma[0]))
    return CheckResult("bang-bang oracle", rep.max_discrepancy == 0.0, rep.max_discrepancy,
                       f"n=5, q_max=2, Q in [4, 8], {small.payoff_kind}, {small.mode}; "
                       f"off-lattice gap {rep.off_lattice_max:.3g}")


def stein_residuals(x: float = 1.0, h: float = 0.01, lam: float = DEFAULT_TRUNCATION_LAMBDA,
                    vol_slope: float = 0.2) -> dict[str, float]:
    s_h = truncation_threshold(h, vol_slope, 0.0, lam)
    sig = vol_slope * x
    _, _, r_sq = truncated_stein_residual(lambda y: 2 * y, lambda y: 2 + 0 * y, x, h, sig, s_h)
    _, _, r_exp = truncated_stein_residual(lambda y: np.exp(y / 4) / 4, lambda y: np.exp(y / 4) / 16, x, h, sig, s_h)
    return {"square": r_sq, "exp": r_exp, "s_h": s_h}


def check_stein() -> CheckResult:
    r = stein_residuals()
    ok = r["square"] <= 1e-8 and r["exp"] <= 1e-6
    return CheckResult("truncated Stein identity", ok, max(r["square"], r["exp"]),
                       f"s_h={r['s_h']:.4g}, residuals {r['square']:.2e} / {r['exp']:.2e}")


def check_euler_gap(cfg: ExperimentConfig) -> CheckResult:
    table = run_euler_gap(cfg, cfg.seed)
    ok, worst, detail = gap_trend_ok(table)
    return CheckResult("truncated Euler gap", ok, worst, detail)


def run_verification_suite(cfg: ExperimentConfig) -> VerificationReport:
    """Run every check; failures are reported, not raised."""
    report = VerificationReport()
    steps = [
        lambda: [check_cholesky()],
        lambda: check_field_convexity(cfg),
        lambda: [check_convexity_in_f0(cfg)],
        lambda: [check_domination(cfg)],
        lambda: [check_value_convexity(cfg)],
        lambda: [check_euler_gap(cfg)],
        lambda: [check_stein()],
        lambda: [check_lipschitz(cfg)],
        lambda: [check_bang_bang(cfg)],
    ]
    for step in steps:
        t = time.perf_counter()
        results = step()
        dt = (time.perf_counter() - t) / max(1, len(results))
        for r in results:
            r.seconds = dt
            report.checks.append(r)
    return report
