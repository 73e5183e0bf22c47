"""Self-contained correctness oracles runnable from the CLI.

Each check pits a production code path against an independent reference:
exhaustive enumeration for the sub-band search, bisection for the MEC split,
eigendecomposition plus random probing for the beamformer, a grid search for
the power/CPU split, and a sampled energy detector for the detection math.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bnb import bnb_allocate, brute_force_allocate
from .closed_forms import matched_filters, mec_allocate, receive_beamformer
from .config import SystemConfig
from .greedy import greedy_allocate, interference_matrix
from .metrics import Allocation, ResourceDecision, detection_probability, fa_threshold
from .power import PowerOptimizer, init_feasible
from .scenario import build_instance


@dataclass
class OracleOutcome:
    name: str
    passed: bool
    detail: str


def toy_config(k=5, m=1, l=3, n=4, **overrides) -> SystemConfig:
    cfg = SystemConfig(num_vehicles=k, num_bs=m, num_subbands=l, num_antennas=n,
                       beam_width=l**k)
    return cfg.replace(**overrides) if overrides else cfg


def check_bnb_exact(seed=0, n_instances=3) -> OracleOutcome:
    """Beam search with full width must equal exhaustive enumeration."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(n_instances):
        cfg = toy_config(k=5, m=1, l=3, sinr_threshold=0.0)
        inst = build_instance(cfg, int(rng.integers(1 << 31)))
        p = rng.uniform(0.05, 1.0, cfg.num_vehicles)
        alloc0 = greedy_allocate(interference_matrix(p, inst.channels), cfg)
        u = matched_filters(alloc0, inst.channels, inst.association)
        decision = ResourceDecision(tx_power=p, local_cpu=np.ones(5),
                                    mec_cpu=np.ones(5), beamformers=u)
        res = bnb_allocate(decision, inst, cfg, alloc0, gamma_req=0.0)
        ref = brute_force_allocate(decision, inst, cfg, gamma_req=0.0)
        if res.objective != ref.objective:
            worst = max(worst, abs(res.objective - ref.objective))
    ok = worst == 0.0
    return OracleOutcome("bnb_vs_bruteforce", ok,
                         f"{n_instances} instances, max objective gap {worst:g}")


def check_mec_split(seed=0, n_sets=5) -> OracleOutcome:
    """Closed-form split vs bisection on the common edge latency."""
    rng = np.random.default_rng(seed)
    cfg = toy_config()
    worst = 0.0
    for _ in range(n_sets):
        inst = build_instance(cfg, int(rng.integers(1 << 31)))
        b = rng.uniform(0.2e6, 3e6, cfg.num_vehicles)
        shares = mec_allocate(inst.association, b, cfg)
        work = cfg.offload_ratio * b * cfg.mec_intensity
        for served in inst.association.served_sets:
            if len(served) == 0:
                continue
            lo, hi = 0.0, 10.0
            for _ in range(200):
                tau = 0.5 * (lo + hi)
                if (work[served] / tau).sum() <= cfg.mec_capacity:
                    hi = tau
                else:
                    lo = tau
            ref = work[served] / hi
            worst = max(worst, float(np.max(np.abs(ref - shares[served]) / ref)))
    ok = worst < 1e-6
    return OracleOutcome("mec_split_vs_bisection", ok,
                         f"{n_sets} workload sets, max relative gap {worst:.2e}")


def check_beamformer(seed=0, n_instances=10, n_probe=2000) -> OracleOutcome:
    """Combiner must beat random probes and match the generalized
    eigendecomposition's best Rayleigh quotient."""
    rng = np.random.default_rng(seed)
    cfg = toy_config(k=5, l=2, beam_width=16)
    worst_eig, beaten = 0.0, True
    for _ in range(n_instances):
        inst = build_instance(cfg, int(rng.integers(1 << 31)))
        p = rng.uniform(0.05, 1.0, cfg.num_vehicles)
        alloc = greedy_allocate(interference_matrix(p, inst.channels), cfg)
        bands = alloc.bands()
        k = int(rng.integers(cfg.num_vehicles))
        u, _ = receive_beamformer(k, alloc, p, inst.channels, inst.association, cfg)
        m, l = inst.association.serving_bs[k], bands[k]
        h = inst.channels.uplink[k, m, l]
        cov = cfg.noise_power_bs * np.eye(cfg.num_antennas, dtype=complex)
        for i in np.flatnonzero(bands == l):
            if i != k:
                hi = inst.channels.uplink[i, m, l]
                cov += p[i] * np.outer(hi, hi.conj())

        def quotient(v):
            return float((p[k] * abs(np.vdot(v, h)) ** 2 /
                          np.real(np.vdot(v, cov @ v))).real)

        q_star = quotient(u)
        vals = scipy.linalg.eigh(p[k] * np.outer(h, h.conj()), cov,
                                 eigvals_only=True)
        worst_eig = max(worst_eig, abs(q_star - vals[-1]) / vals[-1])
        probes = (rng.standard_normal((n_probe, cfg.num_antennas)) +
                  1j * rng.standard_normal((n_probe, cfg.num_antennas)))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        if any(quotient(v) > q_star * (1 + 1e-12) for v in probes):
            beaten = False
    ok = worst_eig < 1e-8 and beaten
    return OracleOutcome("beamformer_rayleigh", ok,
                         f"{n_instances} instances, eig gap {worst_eig:.2e}, "
                         f"never beaten by probes: {beaten}")


def check_sca_single_vehicle(seed=0) -> OracleOutcome:
    """Single-vehicle SCA vs a fine grid over the power/CPU budget split."""
    cfg = SystemConfig(num_vehicles=1, num_bs=1, num_subbands=1,
                       sinr_threshold=0.0)
    inst = build_instance(cfg, seed)
    alloc = Allocation.from_bands([0], 1)
    u = matched_filters(alloc, inst.channels, inst.association)
    opt = PowerOptimizer(inst, cfg)
    opt.set_allocation(alloc, u, 0.0)
    p0, f0 = init_feasible(alloc, u, inst, cfg, 0.0)
    sol = opt.sca(p0, f0)

    gain = abs(np.vdot(u[0], inst.channels.uplink[0, 0, 0])) ** 2
    b = inst.data_volume[0]

    def objective(p):
        f = min(cfg.max_local_cpu, ((cfg.max_power - p) / cfg.power_coeff) ** (1 / 3))
        rate = cfg.subband_bandwidth * math.log2(1 + gain * p / cfg.noise_power_bs)
        return (b * cfg.local_intensity / f + cfg.offload_ratio * b / rate)

    grid = np.linspace(1e-6, cfg.max_power * (1 - 1e-9), 20000)
    ref = min(objective(p) for p in grid)
    gap = (sol.objective - ref) / ref
    budget = sol.tx_power[0] + cfg.power_coeff * sol.local_cpu[0] ** 3
    ok = gap < 0.01 and abs(budget - cfg.max_power) < 1e-5
    return OracleOutcome("sca_vs_grid", ok,
                         f"objective gap {gap:.2e}, budget use {budget:.8f} W")


def check_detection(seed=0, n_draws=200_000) -> OracleOutcome:
    """Detection probability vs a sampled matched-filter energy detector."""
    rng = np.random.default_rng(seed)
    p_fa = 1e-4
    psi = fa_threshold(p_fa)
    psi_ok = abs(psi - 18.420680743952367) < 1e-10
    worst = 0.0
    for gamma in (4.0, 25.0, 100.0):
        # detector statistic ~ noncentral chi-square(2, gamma) by construction
        x = rng.standard_normal(n_draws) + math.sqrt(gamma)
        y = rng.standard_normal(n_draws)
        stat = x**2 + y**2
        emp = float(np.mean(stat > psi))
        worst = max(worst, abs(emp - detection_probability(gamma, p_fa)))
    edge_ok = abs(detection_probability(0.0, p_fa) - p_fa) < 1e-12
    ok = psi_ok and worst < 0.01 and edge_ok
    return OracleOutcome("detection_vs_simulation", ok,
                         f"max |MC - analytic| {worst:.4f}, "
                         f"P_D(0)=P_FA: {edge_ok}, psi exact: {psi_ok}")


def run_all(seed=0) -> list:
    return [
        check_bnb_exact(seed),
        check_mec_split(seed),
        check_beamformer(seed),
        check_sca_single_vehicle(seed),
        check_detection(seed),
    ]
