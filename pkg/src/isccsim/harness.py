"""Monte Carlo experiment runner with deterministic, replayable output.

Trials are independent and seeded as SeedSequence([seed_base, trial]), so
results do not depend on execution order and sweeps over parameters that do
not change the instance shape reuse the same channel draws (paired
comparisons). CSV files carry no timing or environment data, which keeps
reruns byte-identical; wall-clock lives only in the in-memory aggregates.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .config import SystemConfig
from .metrics import detection_probability
from .orchestrator import SCHEMES, evaluate_decision, run_scheme
from .scenario import build_instance, echo_amplitude, perturb_channels

SWEEP_VARS = ("eta", "mec_capacity", "sinr_threshold", "num_vehicles",
              "num_subbands", "max_power", "target_distance")
_CONFIG_FIELD = {
    "eta": "offload_ratio",
    "mec_capacity": "mec_capacity",
    "sinr_threshold": "sinr_threshold",
    "num_vehicles": "num_vehicles",
    "num_subbands": "num_subbands",
    "max_power": "max_power",
}
_INT_SWEEPS = {"num_vehicles", "num_subbands"}


@dataclass
class ExperimentSpec:
    schemes: tuple = ("JOINT",)
    trials: int = 50
    seed_base: int = 1
    sweep_var: str | None = None
    grid: tuple = ()
    out_dir: str | Path | None = None
    n_jobs: int = 1
    # imperfect-CSI hook: optimize on perturbed channels, score on true ones
    csi_error_sq: float = 0.0

    def validate(self) -> "ExperimentSpec":
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if self.csi_error_sq < 0:
            raise ValueError("csi_error_sq must be nonnegative")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if self.sweep_var is not None:
            if self.sweep_var not in SWEEP_VARS:
                raise ValueError(f"sweep variable must be one of {SWEEP_VARS}")
            if not self.grid:
                raise ValueError("sweep grid must be nonempty")
            if list(self.grid) != sorted(self.grid):
                raise ValueError("sweep grid must be sorted ascending")
        return self

    def points(self) -> list:
        return list(self.grid) if self.sweep_var else [None]


@dataclass
class CellStats:
    """Aggregates for one (scheme, sweep point)."""

    scheme: str
    sweep_value: float | None
    n_trials: int
    n_failed: int
    mean_max_latency: float
    mean_latency: float
    max_latency: float
    feasibility_rate: float
    sensing_feasible_rate: float
    mean_min_sinr: float
    mean_pd_dmin: float
    latency_cdf: np.ndarray
    sinr_cdf: np.ndarray
    mean_wall_clock: float


@dataclass
class AggregateResult:
    spec: ExperimentSpec
    config: SystemConfig
    cells: dict = field(default_factory=dict)       # (scheme, value) -> CellStats
    records: list = field(default_factory=list)     # per-vehicle raw rows

    def cell(self, scheme: str, value=None) -> CellStats:
        return self.cells[(scheme, value)]


def _config_for_point(config: SystemConfig, sweep_var: str | None, value):
    if sweep_var is None or value is None:
        return config, None
    if sweep_var == "target_distance":
        return config, float(value)
    name = _CONFIG_FIELD[sweep_var]
    cast = int if sweep_var in _INT_SWEEPS else float
    return config.replace(**{name: cast(value)}), None


def run_trial(config: SystemConfig, scheme: str, seed_base: int, trial: int,
              target_distance: float | None = None,
              csi_error_sq: float = 0.0) -> dict:
    """One (scheme, trial) cell: sample an instance, run, flatten to a record.

    With csi_error_sq > 0 the scheme optimizes against perturbed channels and
    the resulting decision is scored on the true ones.
    """
    ss = np.random.SeedSequence([seed_base, trial])
    inst_seed, scheme_seed, csi_seed = ss.spawn(3)
    try:
        instance = build_instance(config, inst_seed, target_distance=target_distance)
        if csi_error_sq > 0:
            estimated = dataclasses.replace(
                instance, channels=perturb_channels(instance.channels,
                                                    csi_error_sq, csi_seed))
            decision, allocation, _ = run_scheme(scheme, estimated, config,
                                                 scheme_rng=scheme_seed)
            report = evaluate_decision(allocation, decision, instance, config)
        else:
            _, allocation, report = run_scheme(scheme, instance, config,
                                               scheme_rng=scheme_seed)
    except Exception as exc:   # per-trial failures are recorded, never fatal
        return {"trial": trial, "scheme": scheme, "failed": True,
                "error": f"{type(exc).__name__}: {exc}"}
    pd_dmin = float(np.mean(detection_probability(report.sinr, config.false_alarm)))
    return {
        "trial": trial, "scheme": scheme, "failed": False,
        "rate": report.rate, "sinr": report.sinr,
        "latency_local": report.latency_local,
        "latency_offload": report.latency_offload,
        "latency_edge": report.latency_edge,
        "latency_total": report.latency_total,
        "power": report.power,
        "objective": report.objective,
        "all_feasible": report.feasibility.all_ok,
        "sensing_feasible": report.sensing_feasible,
        "applied_sinr_threshold": report.applied_sinr_threshold,
        "converged": report.converged,
        "n_outer": report.n_outer,
        "bands": allocation.bands(),
        "mean_pd_dmin": pd_dmin,
        "trace": list(report.trace),
        "bnb_node_evals": list(report.bnb_node_evals),
        "wall_clock": report.wall_clock,
    }


def _aggregate(records: list, scheme: str, value) -> CellStats:
    ok = [r for r in records if not r["failed"]]
    failed = len(records) - len(ok)
    if not ok:
        nan = float("nan")
        return CellStats(scheme=scheme, sweep_value=value, n_trials=len(records),
                         n_failed=failed, mean_max_latency=nan, mean_latency=nan,
                         max_latency=nan, feasibility_rate=0.0,
                         sensing_feasible_rate=0.0, mean_min_sinr=nan,
                         mean_pd_dmin=nan, latency_cdf=np.array([]),
                         sinr_cdf=np.array([]), mean_wall_clock=nan)
    latencies = np.concatenate([r["latency_total"] for r in ok])
    sinrs = np.concatenate([r["sinr"] for r in ok])
    return CellStats(
        scheme=scheme, sweep_value=value,
        n_trials=len(records), n_failed=failed,
        mean_max_latency=float(np.mean([r["objective"] for r in ok])),
        mean_latency=float(np.mean(latencies)),
        max_latency=float(np.max([r["objective"] for r in ok])),
        feasibility_rate=float(np.mean([r["all_feasible"] for r in ok])),
        sensing_feasible_rate=float(np.mean([r["sensing_feasible"] for r in ok])),
        mean_min_sinr=float(np.mean([np.min(r["sinr"]) for r in ok])),
        mean_pd_dmin=float(np.mean([r["mean_pd_dmin"] for r in ok])),
        latency_cdf=np.sort(latencies),
        sinr_cdf=np.sort(sinrs),
        mean_wall_clock=float(np.mean([r["wall_clock"] for r in ok])),
    )


def run_experiment(spec: ExperimentSpec, config: SystemConfig) -> AggregateResult:
    """Execute the full (scheme x sweep point x trial) grid."""
    spec.validate()
    config.validate()
    result = AggregateResult(spec=spec, config=config)
    jobs = []
    for value in spec.points():
        cfg_pt, target_d = _config_for_point(config, spec.sweep_var, value)
        cfg_pt.validate()
        for scheme in spec.schemes:
            for trial in range(spec.trials):
                jobs.append((value, cfg_pt, scheme, trial, target_d))
    if spec.n_jobs == 1:
        outs = [run_trial(cfg, scheme, spec.seed_base, trial, target_d,
                          csi_error_sq=spec.csi_error_sq)
                for (_, cfg, scheme, trial, target_d) in jobs]
    else:
        outs = Parallel(n_jobs=spec.n_jobs)(
            delayed(run_trial)(cfg, scheme, spec.seed_base, trial, target_d,
                               csi_error_sq=spec.csi_error_sq)
            for (_, cfg, scheme, trial, target_d) in jobs)
    by_cell: dict = {}
    for (value, _, scheme, _, _), rec in zip(jobs, outs):
        rec = dict(rec)
        rec["sweep_value"] = value
        result.records.append(rec)
        by_cell.setdefault((scheme, value), []).append(rec)
    # deterministic aggregation order: keyed by (sweep point, scheme)
    for value in spec.points():
        for scheme in spec.schemes:
            result.cells[(scheme, value)] = _aggregate(by_cell[(scheme, value)],
                                                       scheme, value)
    if spec.out_dir is not None:
        write_outputs(result, Path(spec.out_dir))
    return result


def detection_sweep(result: AggregateResult, config: SystemConfig,
                    distance_grid, scheme: str = "JOINT"):
    """Average detection probability versus target distance.

    Re-evaluates each trial's sensing SINR with the echo amplitude at every
    distance on the grid, keeping powers and allocation fixed. Returns
    (distances, mean_pd) arrays.
    """
    distances = np.asarray(list(distance_grid), dtype=float)
    curves = []
    recs = [r for r in result.records
            if r["scheme"] == scheme and not r["failed"]]
    if not recs:
        raise ValueError(f"no successful {scheme} trials in the result")
    for rec in recs:
        # gamma scales as alpha^2(d) / alpha^2(d_min); rcs cancels in the ratio
        scale = (echo_amplitude(config, 1.0, distances) /
                 echo_amplitude(config, 1.0, config.min_detect_dist)) ** 2
        gam = rec["sinr"][None, :] * scale[:, None]
        pd = np.array([[detection_probability(g, config.false_alarm) for g in row]
                       for row in gam])
        curves.append(pd.mean(axis=1))
    return distances, np.mean(curves, axis=0)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """Floats at 9 significant digits; NaN and inf spelled out."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    xf = float(x)
    if math.isnan(xf):
        return "nan"
    if math.isinf(xf):
        return "inf" if xf > 0 else "-inf"
    return format(xf, ".9g")


RAW_HEADER = ["scheme", "sweep_var", "sweep_value", "trial", "vehicle", "band",
              "rate_bps", "sinr_dmin", "latency_local_s", "latency_offload_s",
              "latency_edge_s", "latency_total_s", "power_w",
              "sensing_feasible", "all_feasible", "converged", "n_outer"]

AGG_HEADER = ["scheme", "sweep_var", "sweep_value", "n_trials", "n_failed",
              "mean_max_latency_s", "mean_latency_s", "max_latency_s",
              "feasibility_rate", "sensing_feasible_rate", "mean_min_sinr",
              "mean_pd_dmin"]


def write_outputs(result: AggregateResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_var = result.spec.sweep_var or ""

    with open(out_dir / "raw.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for rec in result.records:
            if rec["failed"]:
                continue
            k_tot = rec["rate"].shape[0]
            for k in range(k_tot):
                writer.writerow([
                    rec["scheme"], sweep_var, _fmt(rec["sweep_value"]),
                    rec["trial"], k, int(rec["bands"][k]),
                    _fmt(rec["rate"][k]), _fmt(rec["sinr"][k]),
                    _fmt(rec["latency_local"][k]), _fmt(rec["latency_offload"][k]),
                    _fmt(rec["latency_edge"][k]), _fmt(rec["latency_total"][k]),
                    _fmt(rec["power"][k]), _fmt(rec["sensing_feasible"]),
                    _fmt(rec["all_feasible"]), _fmt(rec["converged"]),
                    rec["n_outer"],
                ])

    with open(out_dir / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGG_HEADER)
        for value in result.spec.points():
            for scheme in result.spec.schemes:
                cell = result.cells[(scheme, value)]
                writer.writerow([
                    scheme, sweep_var, _fmt(value), cell.n_trials, cell.n_failed,
                    _fmt(cell.mean_max_latency), _fmt(cell.mean_latency),
                    _fmt(cell.max_latency), _fmt(cell.feasibility_rate),
                    _fmt(cell.sensing_feasible_rate), _fmt(cell.mean_min_sinr),
                    _fmt(cell.mean_pd_dmin),
                ])

    failures = [{"trial": r["trial"], "scheme": r["scheme"],
                 "sweep_value": r["sweep_value"], "error": r["error"]}
                for r in result.records if r["failed"]]
    manifest = {
        "version": __version__,
        "config": result.config.to_dict(),
        "spec": {
            "schemes": list(result.spec.schemes),
            "trials": result.spec.trials,
            "seed_base": result.spec.seed_base,
            "sweep_var": result.spec.sweep_var,
            "grid": list(result.spec.grid),
            "csi_error_sq": result.spec.csi_error_sq,
        },
        "seeding": "SeedSequence([seed_base, trial]) -> spawn(instance, scheme)",
        "failures": failures,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_detection_csv(path: Path, distances, mean_pd) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["distance_m", "mean_detection_probability"])
        for d, pd in zip(distances, mean_pd):
            writer.writerow([_fmt(d), _fmt(pd)])
