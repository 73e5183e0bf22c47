"""Beam-width-limited branch-and-bound over the L-ary assignment tree.

Vehicles are assigned level by level in index order. Node bounds use only
already-assigned vehicles, so they are monotone nonincreasing down any path
(interference only accumulates), which makes pruning against the greedy
warm-start bound exact. A brute-force enumerator doubles as the test oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .metrics import Allocation, ResourceDecision
from .scenario import ScenarioInstance


@dataclass
class BnbTables:
    """Gain tables that make node evaluation an O(K) incremental update."""

    sig: np.ndarray        # (K, L) p_k |u_k^H h^l_{k, m(k)}|^2
    cross_rate: np.ndarray  # (K, K, L) p_i |u_k^H h^l_{i, m(k)}|^2, k first
    cross_sens: np.ndarray  # (K, K, L) p_i |g^l_{i,k}|^2
    sens_num: np.ndarray   # (K,) N_s p_k alpha_k^2 at d_min
    weights: np.ndarray    # (K,) w_k = 1 / (eta b_k)
    noise_bs: float
    noise_radar: float
    bandwidth: float


def build_tables(decision: ResourceDecision, instance: ScenarioInstance,
                 config: SystemConfig) -> BnbTables:
    p = decision.tx_power
    u = decision.beamformers
    h = instance.channels.uplink                       # (K, M, L, N)
    serving = instance.association.serving_bs
    h_at_serving = h[:, serving, :, :]                 # (i, k, l, n)
    proj = np.einsum("ikln,kn->ikl", h_at_serving, np.conj(u))
    cross_rate = (np.abs(proj) ** 2).transpose(1, 0, 2) * p[None, :, None]
    k_tot = p.shape[0]
    idx = np.arange(k_tot)
    sig = cross_rate[idx, idx, :].copy()
    cross_rate[idx, idx, :] = 0.0
    cross_sens = (np.abs(instance.channels.cross) ** 2 * p[:, None, None]).transpose(1, 0, 2)
    sens_num = config.accum_symbols * p * instance.alpha_dmin**2
    weights = 1.0 / (config.offload_ratio * instance.data_volume)
    return BnbTables(sig=sig, cross_rate=cross_rate, cross_sens=cross_sens,
                     sens_num=sens_num, weights=weights,
                     noise_bs=config.noise_power_bs,
                     noise_radar=config.noise_power_radar,
                     bandwidth=config.subband_bandwidth)


def node_bound(bands: np.ndarray, tables: BnbTables) -> float:
    """Minimum weighted rate over assigned vehicles of a partial assignment.

    Reference implementation used for cross-checking the incremental beam
    state; bands holds one sub-band index per assigned vehicle (prefix order).
    Interference accumulates in ascending vehicle order, matching the beam
    search arithmetic exactly.
    """
    bands = np.asarray(bands, dtype=int)
    depth = bands.shape[0]
    best = math.inf
    for k in range(depth):
        interf = 0.0
        for i in range(depth):
            if i != k and bands[i] == bands[k]:
                interf += tables.cross_rate[k, i, bands[k]]
        rate = tables.bandwidth * np.log2(1.0 + tables.sig[k, bands[k]] / (interf + tables.noise_bs))
        best = min(best, tables.weights[k] * rate)
    return float(best)


def node_min_sinr(bands: np.ndarray, tables: BnbTables) -> float:
    """Minimum sensing SINR over assigned vehicles (partial interference)."""
    bands = np.asarray(bands, dtype=int)
    depth = bands.shape[0]
    best = math.inf
    for k in range(depth):
        interf = 0.0
        for i in range(depth):
            if i != k and bands[i] == bands[k]:
                interf += tables.cross_sens[k, i, bands[k]]
        best = min(best, tables.sens_num[k] / (interf + tables.noise_radar))
    return float(best)


def partial_sensing_feasible(bands: np.ndarray, tables: BnbTables,
                             gamma_req: float) -> bool:
    """True iff all assigned vehicles meet the sensing threshold when only
    assigned vehicles interfere. Optimistic, hence safe for pruning."""
    if gamma_req <= 0:
        return True
    return node_min_sinr(bands, tables) >= gamma_req


@dataclass
class BnbResult:
    allocation: Allocation
    objective: float          # min weighted rate (or min SINR in sensing mode)
    node_evaluations: int
    fallback: bool            # True when no feasible leaf survived
    warm_objective: float


def _warm_objective_permuted(warm: Allocation, tables: BnbTables, mode: str,
                             perm: np.ndarray | None) -> float:
    bands = warm.bands()
    if (bands < 0).any():
        return -math.inf
    if perm is not None:
        bands = bands[perm]
    if mode == "rate":
        return node_bound(bands, tables)
    return node_min_sinr(bands, tables)


def _interference_order(tables: BnbTables) -> np.ndarray:
    """Vehicles sorted by total caused-plus-received interference, descending."""
    received = tables.cross_sens.sum(axis=(1, 2))
    caused = tables.cross_sens.sum(axis=(0, 2))
    score = received + caused
    return np.argsort(-score, kind="stable")


def _permute_tables(tables: BnbTables, perm: np.ndarray) -> BnbTables:
    ix = np.ix_(perm, perm)
    return BnbTables(sig=tables.sig[perm],
                     cross_rate=tables.cross_rate[ix],
                     cross_sens=tables.cross_sens[ix],
                     sens_num=tables.sens_num[perm],
                     weights=tables.weights[perm],
                     noise_bs=tables.noise_bs,
                     noise_radar=tables.noise_radar,
                     bandwidth=tables.bandwidth)


def bnb_allocate(decision: ResourceDecision, instance: ScenarioInstance,
                 config: SystemConfig, warm_start: Allocation,
                 gamma_req: float | None = None,
                 mode: str = "rate",
                 beam_width: int | None = None,
                 order: str = "natural") -> BnbResult:
    """Breadth-first beam search maximizing the worst weighted offload rate
    (mode="rate") or the worst sensing SINR (mode="sensing").

    Nodes failing the partial sensing check or falling below the warm-start
    bound are pruned; at most beam_width nodes survive per level. When every
    leaf is pruned the warm start is returned with the fallback flag set.
    Levels assign vehicles in index order by default; order="interference"
    expands the strongest interferers first, which tends to prune earlier at
    narrow beam widths.
    """
    if mode not in ("rate", "sensing"):
        raise ValueError(f"unknown bnb mode {mode!r}")
    if order not in ("natural", "interference"):
        raise ValueError(f"unknown vehicle order {order!r}")
    gamma_req = config.sinr_threshold if gamma_req is None else gamma_req
    s_len = config.beam_width if beam_width is None else beam_width
    k_tot = instance.num_vehicles
    n_bands = config.num_subbands
    tables = build_tables(decision, instance, config)
    perm = None
    if order == "interference":
        perm = _interference_order(tables)
        tables = _permute_tables(tables, perm)
    bound_upper = _warm_objective_permuted(warm_start, tables, mode, perm)

    # frontier state: assignments, per-vehicle interference accumulators,
    # and the per-assigned-vehicle metric values
    assign = np.zeros((1, 0), dtype=np.int8)
    int_rate = np.zeros((1, k_tot))
    int_sens = np.zeros((1, k_tot))
    metric = np.full((1, k_tot), np.inf)   # w B log2(1+sinr) or sensing sinr
    sinr_sens = np.full((1, k_tot), np.inf)
    node_evals = 0

    for v in range(k_tot):
        n_nodes = assign.shape[0]
        # expand: children[(node, band)] laid out band-major per node
        child_assign = np.repeat(assign, n_bands, axis=0)
        new_col = np.tile(np.arange(n_bands, dtype=np.int8), n_nodes)[:, None]
        child_assign = np.concatenate([child_assign, new_col], axis=1)
        child_ir = np.repeat(int_rate, n_bands, axis=0)
        child_is = np.repeat(int_sens, n_bands, axis=0)
        child_metric = np.repeat(metric, n_bands, axis=0)
        child_ssens = np.repeat(sinr_sens, n_bands, axis=0)

        bands_new = child_assign[:, -1].astype(int)
        if v > 0:
            prev = child_assign[:, :-1].astype(int)
            coband = prev == bands_new[:, None]            # (C, v)
            # interference added to already-assigned co-band vehicles
            xr = tables.cross_rate[:v, v, :]               # (v, L)
            xs = tables.cross_sens[:v, v, :]
            child_ir[:, :v] += coband * xr[np.arange(v)[None, :], bands_new[:, None]]
            child_is[:, :v] += coband * xs[np.arange(v)[None, :], bands_new[:, None]]
            # interference seen by the new vehicle from assigned co-band ones
            xr_new = tables.cross_rate[v, :v, :]           # (v, L)
            xs_new = tables.cross_sens[v, :v, :]
            ir_new = (coband * xr_new[np.arange(v)[None, :], bands_new[:, None]]).sum(axis=1)
            is_new = (coband * xs_new[np.arange(v)[None, :], bands_new[:, None]]).sum(axis=1)
            child_ir[:, v] = ir_new
            child_is[:, v] = is_new
            # refresh metrics of co-band incumbents
            sig_prev = tables.sig[np.arange(v)[None, :], prev]  # (C, v)
            rate_prev = tables.bandwidth * np.log2(1.0 + sig_prev / (child_ir[:, :v] + tables.noise_bs))
            child_metric[:, :v] = np.where(
                coband, tables.weights[:v] * rate_prev, child_metric[:, :v])
            gam_prev = tables.sens_num[:v] / (child_is[:, :v] + tables.noise_radar)
            child_ssens[:, :v] = np.where(coband, gam_prev, child_ssens[:, :v])
        else:
            child_ir[:, v] = 0.0
            child_is[:, v] = 0.0

        sig_new = tables.sig[v, bands_new]
        rate_new = tables.bandwidth * np.log2(1.0 + sig_new / (child_ir[:, v] + tables.noise_bs))
        child_metric[:, v] = tables.weights[v] * rate_new
        child_ssens[:, v] = tables.sens_num[v] / (child_is[:, v] + tables.noise_radar)
        node_evals += child_assign.shape[0]

        min_sens = child_ssens[:, : v + 1].min(axis=1)
        if mode == "rate":
            bounds = child_metric[:, : v + 1].min(axis=1)
        else:
            bounds = min_sens
        keep = bounds >= bound_upper
        if gamma_req > 0:
            keep &= min_sens >= gamma_req
        if not keep.any():
            return BnbResult(allocation=warm_start, objective=bound_upper,
                             node_evaluations=node_evals, fallback=True,
                             warm_objective=bound_upper)
        idx = np.flatnonzero(keep)
        if idx.size > s_len:
            # stable top-S_len by bound; creation order breaks ties, which is
            # lexicographic in the assignment
            order = np.argsort(-bounds[idx], kind="stable")[:s_len]
            idx = idx[order]
        assign = child_assign[idx]
        int_rate = child_ir[idx]
        int_sens = child_is[idx]
        metric = child_metric[idx]
        sinr_sens = child_ssens[idx]

    final_bounds = (metric.min(axis=1) if mode == "rate" else sinr_sens.min(axis=1))
    best = int(np.argmax(final_bounds))
    ties = np.flatnonzero(final_bounds == final_bounds[best])
    if ties.size > 1:  # deterministic: lexicographically smallest assignment
        rows = sorted(ties, key=lambda r: tuple(assign[r]))
        best = rows[0]
    best_bands = assign[best].astype(int)
    if perm is not None:
        unpermuted = np.empty_like(best_bands)
        unpermuted[perm] = best_bands
        best_bands = unpermuted
    alloc = Allocation.from_bands(best_bands, n_bands)
    return BnbResult(allocation=alloc, objective=float(final_bounds[best]),
                     node_evaluations=node_evals, fallback=False,
                     warm_objective=bound_upper)


def brute_force_allocate(decision: ResourceDecision, instance: ScenarioInstance,
                         config: SystemConfig,
                         gamma_req: float | None = None,
                         mode: str = "rate",
                         max_leaves: int = 10**6) -> BnbResult:
    """Exact enumeration over all L^K complete allocations.

    Maximizes the same objective as bnb_allocate subject to the sensing
    constraint; ties resolve to the lexicographically smallest assignment.
    """
    gamma_req = config.sinr_threshold if gamma_req is None else gamma_req
    k_tot = instance.num_vehicles
    n_bands = config.num_subbands
    if n_bands**k_tot > max_leaves:
        raise ValueError(f"instance too large for enumeration: {n_bands}^{k_tot}")
    tables = build_tables(decision, instance, config)
    best_obj = -math.inf
    best_bands = None
    n_eval = 0
    for bands in itertools.product(range(n_bands), repeat=k_tot):
        n_eval += 1
        arr = np.asarray(bands, dtype=int)
        if gamma_req > 0 and node_min_sinr(arr, tables) < gamma_req:
            continue
        obj = node_bound(arr, tables) if mode == "rate" else node_min_sinr(arr, tables)
        if obj > best_obj:
            best_obj = obj
            best_bands = arr
    if best_bands is None:
        warm_obj = -math.inf
        return BnbResult(allocation=Allocation.from_bands(np.zeros(k_tot, int), n_bands),
                         objective=warm_obj, node_evaluations=n_eval,
                         fallback=True, warm_objective=warm_obj)
    return BnbResult(allocation=Allocation.from_bands(best_bands, n_bands),
                     objective=float(best_obj), node_evaluations=n_eval,
                     fallback=False, warm_objective=float("nan"))
