"""Command-line front end.

Verbs: run (one scheme, one instance), sweep (Monte Carlo experiment),
oracle-check (independent correctness suites), report (render aggregate CSV),
validate-config. Exit codes: 0 success, 1 validation error, 2 sensing
infeasible instance, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SystemConfig, apply_overrides, desk_profile, \
    load_config, paper_profile
from .harness import ExperimentSpec, SWEEP_VARS, run_experiment
from .orchestrator import SCHEMES, run_scheme
from .power import SensingInfeasibleError
from .scenario import build_instance

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_INTERNAL = 3


def _add_config_args(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="flat key=value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field "
                        "(repeatable; _db/_dbm suffixes accepted)")
    parser.add_argument("--profile", choices=("desk", "paper"), default="desk",
                        help="base parameter profile (default: desk)")


def _resolve_config(args) -> SystemConfig:
    cfg = desk_profile() if args.profile == "desk" else paper_profile()
    if args.config is not None:
        cfg = load_config(args.config, base=cfg)
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iscc-sim",
        description="Joint radio/computation resource allocation simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scheme on one seeded instance")
    _add_config_args(p_run)
    p_run.add_argument("--scheme", choices=SCHEMES, default="JOINT")
    p_run.add_argument("--seed", type=int, default=None,
                       help="instance seed (default: config rng_seed)")

    p_sweep = sub.add_parser("sweep", help="Monte Carlo experiment / parameter sweep")
    _add_config_args(p_sweep)
    p_sweep.add_argument("--schemes", default="JOINT",
                         help="comma-separated scheme list")
    p_sweep.add_argument("--trials", type=int, default=50)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--sweep", choices=SWEEP_VARS, default=None,
                         help="variable to sweep")
    p_sweep.add_argument("--grid", default=None,
                         help="comma-separated sweep values (ascending)")
    p_sweep.add_argument("--out", type=Path, required=True,
                         help="output directory for CSVs and manifest")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel trial workers (-1 = all cores)")
    p_sweep.add_argument("--csi-error", type=float, default=0.0,
                         help="normalized CSI error power; decisions are made "
                         "on perturbed channels and scored on true ones")

    p_oracle = sub.add_parser("oracle-check",
                              help="run the independent correctness oracles")
    p_oracle.add_argument("--seed", type=int, default=0)

    p_report = sub.add_parser("report", help="summarize an aggregate.csv")
    p_report.add_argument("--out", type=Path, required=True,
                          help="directory holding aggregate.csv")

    p_val = sub.add_parser("validate-config", help="check a config file")
    _add_config_args(p_val)
    return parser


def _cmd_run(args) -> int:
    cfg = _resolve_config(args)
    seed = cfg.rng_seed if args.seed is None else args.seed
    instance = build_instance(cfg, seed)
    scheme_rng = np.random.SeedSequence([seed, 0xC0FFEE])
    decision, allocation, report = run_scheme(args.scheme, instance, cfg,
                                              scheme_rng=scheme_rng)
    bands = allocation.bands()
    print(f"scheme {args.scheme}  seed {seed}  K={cfg.num_vehicles} "
          f"M={cfg.num_bs} L={cfg.num_subbands}")
    print(f"objective (max latency): {report.objective:.6f} s")
    print(f"outer iterations: {report.n_outer}  converged: {report.converged}")
    print("trace: " + " ".join(f"{x:.5f}" for x in report.trace))
    print(f"sensing feasible: {report.sensing_feasible} "
          f"(applied threshold {report.applied_sinr_threshold:.4g}, "
          f"configured {cfg.sinr_threshold:.4g})")
    print("constraints: " + "  ".join(
        f"{name}={'ok' if ok else 'VIOLATED'}"
        for name, ok in report.feasibility.flags.items()))
    print(f"{'veh':>4} {'band':>4} {'rate Mb/s':>10} {'sinr dB':>9} "
          f"{'T_local ms':>10} {'T_tx ms':>9} {'T_edge ms':>9} {'T ms':>9} {'P W':>7}")
    for k in range(cfg.num_vehicles):
        sinr_db = 10 * np.log10(report.sinr[k]) if report.sinr[k] > 0 else -np.inf
        print(f"{k:>4} {bands[k]:>4} {report.rate[k] / 1e6:>10.3f} {sinr_db:>9.2f} "
              f"{report.latency_local[k] * 1e3:>10.3f} "
              f"{report.latency_offload[k] * 1e3:>9.3f} "
              f"{report.latency_edge[k] * 1e3:>9.3f} "
              f"{report.latency_total[k] * 1e3:>9.3f} {report.power[k]:>7.4f}")
    return EXIT_OK if report.sensing_feasible else EXIT_INFEASIBLE


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    seed = cfg.rng_seed if args.seed is None else args.seed
    grid = tuple(float(x) for x in args.grid.split(",")) if args.grid else ()
    spec = ExperimentSpec(
        schemes=tuple(s.strip() for s in args.schemes.split(",")),
        trials=args.trials, seed_base=seed, sweep_var=args.sweep,
        grid=grid, out_dir=args.out, n_jobs=args.jobs,
        csi_error_sq=args.csi_error)
    result = run_experiment(spec, cfg)
    n_failed = sum(1 for r in result.records if r["failed"])
    print(f"wrote {args.out}/raw.csv, aggregate.csv, manifest.json "
          f"({len(result.records)} trials, {n_failed} failed)")
    for (scheme, value), cell in result.cells.items():
        tag = f"{scheme}" + (f" @ {value}" if value is not None else "")
        print(f"  {tag}: mean max latency {cell.mean_max_latency:.6f} s, "
              f"feasible {cell.feasibility_rate:.0%}")
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    from . import oracles
    outcomes = oracles.run_all(args.seed)
    all_ok = True
    for out in outcomes:
        print(f"{'PASS' if out.passed else 'FAIL'}  {out.name}: {out.detail}")
        all_ok &= out.passed
    return EXIT_OK if all_ok else EXIT_INTERNAL


def _cmd_report(args) -> int:
    path = Path(args.out) / "aggregate.csv"
    if not path.is_file():
        raise ConfigError(f"no aggregate.csv under {args.out}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("empty aggregate")
        return EXIT_OK
    cols = ["scheme", "sweep_value", "n_trials", "mean_max_latency_s",
            "mean_latency_s", "feasibility_rate", "mean_min_sinr"]
    widths = {c: max(len(c), max(len(r[c]) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(r[c].ljust(widths[c]) for c in cols))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _resolve_config(args)
    print(f"config ok: K={cfg.num_vehicles} M={cfg.num_bs} L={cfg.num_subbands} "
          f"N={cfg.num_antennas} B={cfg.subband_bandwidth:g} Hz")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "oracle-check": _cmd_oracle_check,
        "report": _cmd_report,
        "validate-config": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SensingInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
