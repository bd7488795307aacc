"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 verification failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bdpp.surface import SolverError
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import (ExperimentError, NumericalError, price_config, run_euler_gap, run_penalty_experiment,
                          run_sweep, run_verification_suite, gap_trend_ok)
from .schemes import SimulationError

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("swingcvx")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swingcvx", description="Swing contract pricing and convex-order checks")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("--seed", type=_u64, help="override the configured seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--engine", choices=("grid", "lsmc"), help="override the configured engine")
    common.add_argument("--scenario", help="run a single named scenario")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("price", parents=[common], help="single valuation")
    sw = sub.add_parser("sweep", parents=[common], help="price and delta over the F0 sweep, one CSV per scenario")
    sw.add_argument("--workers", type=int, default=1, help="scenarios priced concurrently")
    sub.add_parser("verify", parents=[common], help="run the verification suite")
    eg = sub.add_parser("euler-gap", parents=[common], help="truncated vs plain Euler study")
    eg.add_argument("--paths", type=int, help="override the number of coupled paths")
    return p


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.engine:
        cfg = cfg.with_engine(args.engine)
    if args.scenario:
        cfg = cfg.scenario(args.scenario)
    return cfg


def _cmd_price(cfg: ExperimentConfig, args) -> int:
    r = price_config(cfg)
    print(f"scenario={cfg.name} engine={r.engine} price={r.price:.10g} std_error={r.std_error:.4g} "
          f"delta={r.delta:.10g} delta_std_error={r.delta_std_error:.4g}")
    if r.policy_summary:
        dist = ", ".join(f"{q:g}:{p:.4f}" for q, p in sorted(r.policy_summary.items()))
        print(f"Q_n distribution: {dist}")
    for w in r.diagnostics.get("warnings", []):
        log.warning(w)
    return EXIT_OK


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    out = args.out or cfg.output
    pen = cfg.contract.mode == "pen" and all(cfg.scenario(n).contract.mode == "pen" for n in cfg.scenarios)
    runner = run_penalty_experiment if pen else run_sweep
    results = runner(cfg, scenario=args.scenario, out=out, workers=args.workers)
    for name, res in results.items():
        print(f"{name}: {len(res.rows)} rows -> {res.path}")
    return EXIT_OK


def _cmd_verify(cfg: ExperimentConfig, args) -> int:
    report = run_verification_suite(cfg)
    print(report.format())
    if not report.passed:
        print("failed checks: " + ", ".join(c.name for c in report.failures), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _cmd_gap(cfg: ExperimentConfig, args) -> int:
    table = run_euler_gap(cfg, cfg.seed, args.out or cfg.output, args.paths)
    for m, s_h, g, c in zip(table.m_values, table.thresholds, table.sup_gap, table.linear_constants):
        print(f"m={m:<3d} s_h={s_h:.4f} sup_gap={g:.6g} c_m={c:.6g}")
    ok, _, detail = gap_trend_ok(table)
    print(detail)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"price": _cmd_price, "sweep": _cmd_sweep, "verify": _cmd_verify, "euler-gap": _cmd_gap}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, SolverError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SimulationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ExperimentError as exc:
        cause = exc.__cause__
        if isinstance(cause, (ConfigError, SolverError)):
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
