"""Alternating optimization loop and the benchmark schemes.

One outer iteration updates, in order: sub-band allocation (accepted only on
improvement), transmit power and local CPU (SCA), MEC CPU split, receive
beamformers. Every update is guarded so the reported objective trace is
nonincreasing for the latency-driven schemes.

Sensing-infeasible instances are handled best-effort: the threshold is
relaxed by bisection to the largest attainable value for the initial
allocation and the run is flagged.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .bnb import BnbTables, bnb_allocate, build_tables
from .closed_forms import matched_filters, mec_allocate, receive_beamformers
from .config import SystemConfig
from .greedy import greedy_allocate, interference_matrix
from .metrics import (Allocation, ResourceDecision, TrialReport, all_latencies,
                      all_rates, all_sensing_sinrs, all_powers, check_feasibility)
from .power import (PowerOptimizer, SensingInfeasibleError, init_feasible,
                    max_feasible_threshold)
from .scenario import ScenarioInstance

SCHEMES = ("JOINT", "CCRA", "SCRA", "RSBA", "FPCR", "MRC")


@dataclass(frozen=True)
class SchemePolicy:
    subband: str          # "bnb" | "ccra" | "fixed"
    bnb_mode: str         # "rate" | "sensing"
    power: str            # "sca" | "fixed"
    beamform: str         # "opt" | "mrc"
    enforce_sensing: bool
    # sensing-centric: the power step preserves the SINR level the
    # allocation achieved instead of letting it fall back to the threshold
    sensing_ratchet: bool = False


_POLICIES = {
    "JOINT": SchemePolicy("bnb", "rate", "sca", "opt", True),
    "CCRA": SchemePolicy("ccra", "rate", "sca", "opt", False),
    "SCRA": SchemePolicy("bnb", "sensing", "sca", "opt", True,
                         sensing_ratchet=True),
    "RSBA": SchemePolicy("fixed", "rate", "sca", "opt", True),
    "FPCR": SchemePolicy("bnb", "rate", "fixed", "opt", True),
    "MRC": SchemePolicy("bnb", "rate", "sca", "mrc", True),
}


def _objective(allocation: Allocation, p, f_l, f_m, u,
               instance: ScenarioInstance, config: SystemConfig):
    decision = ResourceDecision(tx_power=p, local_cpu=f_l, mec_cpu=f_m, beamformers=u)
    _, _, _, total = all_latencies(allocation, decision, instance.channels,
                                   instance.association, instance.data_volume, config)
    return float(np.max(total)), decision


def _partial_min_weighted_rate(bands_full: np.ndarray, tables: BnbTables) -> float:
    """Min weighted rate over currently assigned vehicles (-1 = unassigned)."""
    assigned = np.flatnonzero(bands_full >= 0)
    best = math.inf
    for k in assigned:
        interf = 0.0
        for i in assigned:
            if i != k and bands_full[i] == bands_full[k]:
                interf += tables.cross_rate[k, i, bands_full[k]]
        rate = tables.bandwidth * np.log2(
            1.0 + tables.sig[k, bands_full[k]] / (interf + tables.noise_bs))
        best = min(best, tables.weights[k] * rate)
    return float(best)


def computing_greedy(decision: ResourceDecision, instance: ScenarioInstance,
                     config: SystemConfig) -> Allocation:
    """Computing-centric allocator: vehicles in descending workload order,
    each placed on the band that maximizes the running min weighted rate."""
    tables = build_tables(decision, instance, config)
    k_tot = instance.num_vehicles
    bands = np.full(k_tot, -1, dtype=int)
    order = np.argsort(-instance.data_volume, kind="stable")
    for v in order:
        best_l, best_val = 0, -math.inf
        for l in range(config.num_subbands):
            bands[v] = l
            val = _partial_min_weighted_rate(bands, tables)
            if val > best_val:
                best_val, best_l = val, l
        bands[v] = best_l
    return Allocation.from_bands(bands, config.num_subbands)


def _min_sensing(allocation, p, instance, config) -> float:
    gam = all_sensing_sinrs(allocation, p, instance.channels, config,
                            alpha=instance.alpha_dmin)
    return float(np.min(gam)) if gam.size else math.inf


def run_scheme(tag: str, instance: ScenarioInstance, config: SystemConfig,
               scheme_rng=None):
    """Run one resource-allocation scheme on a sampled instance.

    Returns (decision, allocation, report). scheme_rng seeds the random
    allocation of RSBA; other schemes ignore it.
    """
    if tag not in _POLICIES:
        raise ValueError(f"unknown scheme {tag!r}, expected one of {SCHEMES}")
    policy = _POLICIES[tag]
    cfg = config
    inst = instance
    t0 = time.perf_counter()
    k_tot = inst.num_vehicles

    # initial allocation
    p_prov = np.full(k_tot, cfg.max_power / 2)
    if policy.subband == "fixed":
        rng = np.random.default_rng(scheme_rng)
        bands = rng.integers(0, cfg.num_subbands, size=k_tot)
        allocation = Allocation.from_bands(bands, cfg.num_subbands)
    else:
        allocation = greedy_allocate(interference_matrix(p_prov, inst.channels), cfg)

    # sensing target, relaxed when the configured threshold is unattainable
    gamma_req = 0.0
    relaxed = False
    if policy.enforce_sensing and cfg.sinr_threshold > 0:
        attainable = max_feasible_threshold(allocation, inst, cfg)
        if attainable >= cfg.sinr_threshold:
            gamma_req = cfg.sinr_threshold
        else:
            gamma_req = 0.95 * attainable
            relaxed = True

    u = matched_filters(allocation, inst.channels, inst.association)
    f_m = mec_allocate(inst.association, inst.data_volume, cfg)

    optimizer = None
    if policy.power == "fixed":
        p = np.full(k_tot, cfg.max_power / 2)
        f_l = np.full(k_tot, min(cfg.max_local_cpu,
                                 ((cfg.max_power / 2) / cfg.power_coeff) ** (1 / 3)))
    else:
        try:
            p, f_l = init_feasible(allocation, u, inst, cfg, gamma_req)
        except SensingInfeasibleError:
            # numerical edge after relaxation: drop the sensing rows entirely
            gamma_req, relaxed = 0.0, True
            p, f_l = init_feasible(allocation, u, inst, cfg, 0.0)
        optimizer = PowerOptimizer(inst, cfg)

    obj, decision = _objective(allocation, p, f_l, f_m, u, inst, cfg)
    trace = [obj]
    node_evals = []
    sca_iters = 0
    converged = False

    for _ in range(cfg.max_outer_iters):
        # sub-band update
        if policy.subband == "bnb":
            warm = greedy_allocate(interference_matrix(p, inst.channels), cfg)
            result = bnb_allocate(decision, inst, cfg, warm,
                                  gamma_req=gamma_req, mode=policy.bnb_mode)
            node_evals.append(result.node_evaluations)
            candidate = result.allocation
        elif policy.subband == "ccra":
            candidate = computing_greedy(decision, inst, cfg)
        else:
            candidate = None

        if candidate is not None:
            if policy.bnb_mode == "sensing" and policy.subband == "bnb":
                if _min_sensing(candidate, p, inst, cfg) > _min_sensing(allocation, p, inst, cfg):
                    allocation = candidate
                    if policy.beamform == "mrc":
                        u = matched_filters(allocation, inst.channels, inst.association)
                    obj, decision = _objective(allocation, p, f_l, f_m, u, inst, cfg)
            else:
                u_cand = (matched_filters(candidate, inst.channels, inst.association)
                          if policy.beamform == "mrc" else u)
                obj_cand, dec_cand = _objective(candidate, p, f_l, f_m, u_cand, inst, cfg)
                if obj_cand < obj:
                    allocation, u, obj, decision = candidate, u_cand, obj_cand, dec_cand

        # transmit power and local CPU
        if policy.power == "sca":
            gamma_run = gamma_req
            if policy.sensing_ratchet:
                gamma_run = max(gamma_req,
                                0.999 * _min_sensing(allocation, p, inst, cfg))
            optimizer.set_allocation(allocation, u, gamma_run)
            sol = optimizer.sca(p, f_l)
            sca_iters += sol.n_iterations
            obj_cand, dec_cand = _objective(allocation, sol.tx_power, sol.local_cpu,
                                            f_m, u, inst, cfg)
            if obj_cand < obj:
                p, f_l, obj, decision = sol.tx_power, sol.local_cpu, obj_cand, dec_cand

        # MEC split (workload-only, so idempotent after the first call)
        f_m = mec_allocate(inst.association, inst.data_volume, cfg)

        # receive beamforming
        if policy.beamform == "opt":
            u_cand = receive_beamformers(allocation, p, inst.channels,
                                         inst.association, cfg)
            obj_cand, dec_cand = _objective(allocation, p, f_l, f_m, u_cand, inst, cfg)
            if obj_cand < obj:
                u, obj, decision = u_cand, obj_cand, dec_cand

        trace.append(obj)
        if abs(trace[-2] - trace[-1]) <= cfg.outer_tol * max(abs(trace[-2]), 1e-12):
            converged = True
            break

    report = _build_report(allocation, decision, inst, cfg, trace,
                           gamma_req=gamma_req, relaxed=relaxed,
                           converged=converged, node_evals=node_evals,
                           sca_iters=sca_iters, wall_clock=time.perf_counter() - t0)
    return decision, allocation, report


def run_joint(instance: ScenarioInstance, config: SystemConfig):
    """The full joint design (sub-bands, power, CPU, beamforming)."""
    return run_scheme("JOINT", instance, config)


def evaluate_decision(allocation: Allocation, decision: ResourceDecision,
                      instance: ScenarioInstance, config: SystemConfig) -> TrialReport:
    """Score a fixed decision on an instance without optimizing.

    Used to measure decisions made under estimated CSI against the true
    channels; sensing_feasible reflects the achieved constraint check.
    """
    report = _build_report(allocation, decision, instance, config,
                           trace=[], gamma_req=config.sinr_threshold,
                           relaxed=False, converged=False, node_evals=[],
                           sca_iters=0, wall_clock=0.0)
    report.trace = [report.objective]
    report.n_outer = 0
    report.sensing_feasible = bool(report.feasibility.flags["sensing_sinr"])
    return report


def _build_report(allocation, decision, instance, config, trace, *,
                  gamma_req, relaxed, converged, node_evals, sca_iters,
                  wall_clock) -> TrialReport:
    t_local, t_tx, t_edge, total = all_latencies(
        allocation, decision, instance.channels, instance.association,
        instance.data_volume, config)
    rates = all_rates(allocation, decision, instance.channels,
                      instance.association, config)
    sinr = all_sensing_sinrs(allocation, decision.tx_power, instance.channels,
                             config, alpha=instance.alpha_dmin)
    feas = check_feasibility(allocation, decision, instance, config)
    return TrialReport(
        rate=rates, sinr=sinr,
        latency_local=t_local, latency_offload=t_tx, latency_edge=t_edge,
        latency_total=total, power=all_powers(decision, config),
        objective=float(np.max(total)), feasibility=feas,
        sensing_feasible=not relaxed,
        applied_sinr_threshold=gamma_req,
        trace=list(trace), converged=converged, n_outer=len(trace) - 1,
        bnb_node_evals=list(node_evals), sca_iterations=sca_iters,
        wall_clock=wall_clock)
