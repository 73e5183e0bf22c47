"""Closed-form performance evaluation: rates, sensing SINR, detection
probability, latencies, power, and constraint checking.

Everything here is pure and operates in linear units. A vehicle left without
a sub-band gets rate 0 and sensing SINR 0 rather than an exception; callers
inspect the feasibility report for that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .config import SystemConfig
from .scenario import Association, ChannelSet, ScenarioInstance

UNIT_NORM_TOL = 1e-12


# ---------------------------------------------------------------------------
# allocation and decision containers
# ---------------------------------------------------------------------------

@dataclass
class Allocation:
    """Binary L x K sub-band assignment, column sums <= 1."""

    matrix: np.ndarray

    @classmethod
    def from_bands(cls, bands, num_subbands: int) -> "Allocation":
        """Build from a per-vehicle band index vector (-1 = unassigned)."""
        bands = np.asarray(bands, dtype=int)
        if (bands >= num_subbands).any():
            raise ValueError("band index out of range")
        mat = np.zeros((num_subbands, bands.shape[0]), dtype=np.int8)
        for k, l in enumerate(bands):
            if l >= 0:
                mat[l, k] = 1
        return cls(mat)

    def validate(self) -> "Allocation":
        mat = np.asarray(self.matrix)
        if mat.ndim != 2:
            raise ValueError("allocation matrix must be 2-D (L x K)")
        if not np.isin(mat, (0, 1)).all():
            raise ValueError("allocation entries must be binary")
        if (mat.sum(axis=0) > 1).any():
            raise ValueError("each vehicle may use at most one sub-band")
        return self

    def bands(self) -> np.ndarray:
        """Per-vehicle band index, -1 where unassigned."""
        mat = self.matrix
        assigned = mat.sum(axis=0) > 0
        out = np.full(mat.shape[1], -1, dtype=int)
        out[assigned] = np.argmax(mat[:, assigned], axis=0)
        return out

    @property
    def complete(self) -> bool:
        return bool((self.matrix.sum(axis=0) == 1).all())

    @property
    def num_subbands(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_vehicles(self) -> int:
        return self.matrix.shape[1]


@dataclass
class ResourceDecision:
    tx_power: np.ndarray     # (K,) W
    local_cpu: np.ndarray    # (K,) cycles/s
    mec_cpu: np.ndarray      # (K,) cycles/s at the serving MEC
    beamformers: np.ndarray  # (K, N) complex, unit norm


@dataclass
class FeasibilityReport:
    """Per-constraint verdicts with worst-case margins (>= 0 means satisfied)."""

    flags: dict
    margins: dict

    @property
    def all_ok(self) -> bool:
        return all(self.flags.values())

    def violated(self) -> list:
        return [name for name, ok in self.flags.items() if not ok]


@dataclass
class TrialReport:
    rate: np.ndarray            # (K,) bit/s
    sinr: np.ndarray            # (K,) sensing SINR at d_min, linear
    latency_local: np.ndarray   # (K,) s
    latency_offload: np.ndarray
    latency_edge: np.ndarray
    latency_total: np.ndarray
    power: np.ndarray           # (K,) W
    objective: float            # max_k latency_total
    feasibility: FeasibilityReport
    sensing_feasible: bool
    applied_sinr_threshold: float
    trace: list = field(default_factory=list)
    converged: bool = False
    n_outer: int = 0
    bnb_node_evals: list = field(default_factory=list)
    sca_iterations: int = 0
    wall_clock: float = 0.0


# ---------------------------------------------------------------------------
# rates and sensing SINR
# ---------------------------------------------------------------------------

def offload_rate(k: int, allocation: Allocation, decision: ResourceDecision,
                 channels: ChannelSet, association: Association,
                 config: SystemConfig) -> float:
    """Uplink rate of vehicle k in bit/s after receive combining.

    Co-channel interference includes every vehicle sharing the sub-band,
    regardless of which BS serves it.
    """
    bands = allocation.bands()
    l = bands[k]
    if l < 0:
        return 0.0
    m = association.serving_bs[k]
    u = decision.beamformers[k]
    h = channels.uplink[k, m, l]
    sig = decision.tx_power[k] * abs(np.vdot(u, h)) ** 2
    den = config.noise_power_bs * float(np.real(np.vdot(u, u)))
    for i in np.flatnonzero(bands == l):
        if i == k:
            continue
        hi = channels.uplink[i, m, l]
        den += decision.tx_power[i] * abs(np.vdot(u, hi)) ** 2
    return config.subband_bandwidth * math.log2(1.0 + sig / den)


def all_rates(allocation: Allocation, decision: ResourceDecision,
              channels: ChannelSet, association: Association,
              config: SystemConfig) -> np.ndarray:
    k_tot = allocation.num_vehicles
    return np.array([offload_rate(k, allocation, decision, channels, association, config)
                     for k in range(k_tot)])


def sensing_sinr(k: int, allocation: Allocation, powers: np.ndarray,
                 channels: ChannelSet, config: SystemConfig,
                 alpha: float | None = None) -> float:
    """Sensing SINR (noncentrality) of vehicle k's detector.

    alpha defaults to the echo amplitude at the drawn target distance; pass
    the d_min value when evaluating the detection constraint.
    """
    bands = allocation.bands()
    l = bands[k]
    if l < 0:
        return 0.0
    a = channels.sensing_amp[k] if alpha is None else alpha
    den = config.noise_power_radar
    for i in np.flatnonzero(bands == l):
        if i == k:
            continue
        den += powers[i] * abs(channels.cross[i, k, l]) ** 2
    return config.accum_symbols * powers[k] * a**2 / den


def all_sensing_sinrs(allocation: Allocation, powers: np.ndarray,
                      channels: ChannelSet, config: SystemConfig,
                      alpha: np.ndarray | None = None) -> np.ndarray:
    k_tot = allocation.num_vehicles
    return np.array([
        sensing_sinr(k, allocation, powers, channels, config,
                     alpha=None if alpha is None else alpha[k])
        for k in range(k_tot)])


# ---------------------------------------------------------------------------
# detection probability
# ---------------------------------------------------------------------------

def fa_threshold(p_fa: float) -> float:
    """Detector threshold for a given false-alarm rate.

    Closed-form inverse of the central chi-square(2) CDF: -2 ln(P_FA).
    """
    if not 0.0 < p_fa <= 1.0:
        raise ValueError(f"false-alarm probability must be in (0, 1], got {p_fa}")
    return -2.0 * math.log(p_fa)


def marcum_q1(a: float, b: float, tol: float = 1e-13) -> float:
    """First-order Marcum Q: upper tail of noncentral chi-square(2, a^2) at b^2.

    Evaluated by the Poisson-mixture series with two-sided recurrences around
    the Poisson mode; absolute error well below 1e-10.
    """
    if a < 0 or b < 0:
        raise ValueError("marcum_q1 arguments must be nonnegative")
    lam2 = 0.5 * a * a   # Poisson mean of the mixture index
    x2 = 0.5 * b * b
    if x2 == 0.0:
        return 1.0
    if lam2 == 0.0:
        return math.exp(-x2)
    # deep in the detection region the tail mass below b^2 is negligible
    if a - b > 14.0 and a > 30.0:
        return 1.0
    n0 = int(lam2)
    log_pois = -lam2 + n0 * math.log(lam2) - math.lgamma(n0 + 1)
    pois0 = math.exp(log_pois)
    inner0 = float(gammaincc(n0 + 1, x2))   # P(Poisson(x2) <= n0)
    term0 = math.exp(-x2 + n0 * math.log(x2) - math.lgamma(n0 + 1))

    total = pois0 * inner0
    covered = pois0
    # upward sweep
    pois, inner, term = pois0, inner0, term0
    n = n0
    while covered < 1.0 - tol and (1.0 - covered) * 1.0 > tol:
        n += 1
        pois *= lam2 / n
        term *= x2 / n
        inner = min(inner + term, 1.0)
        total += pois * inner
        covered += pois
        if pois < tol and n > lam2 + 10 * math.sqrt(lam2) + 10:
            break
    # downward sweep
    pois, inner, term = pois0, inner0, term0
    n = n0
    while n > 0:
        inner -= term
        term *= n / x2
        pois *= n / lam2
        n -= 1
        if inner <= 0.0:
            break
        total += pois * inner
        covered += pois
        if pois < tol and n < lam2 - 10 * math.sqrt(lam2) - 10:
            break
    return min(total, 1.0)


def detection_probability(gamma, p_fa: float) -> float | np.ndarray:
    """Asymptotic detection probability Q1(sqrt(gamma), sqrt(psi))."""
    psi = fa_threshold(p_fa)
    if np.ndim(gamma) == 0:
        g = float(gamma)
        if g < 0:
            raise ValueError("sensing SINR must be nonnegative")
        return marcum_q1(math.sqrt(g), math.sqrt(psi))
    return np.array([detection_probability(g, p_fa) for g in np.asarray(gamma).ravel()]
                    ).reshape(np.shape(gamma))


# ---------------------------------------------------------------------------
# latency and power
# ---------------------------------------------------------------------------

def latencies(k: int, allocation: Allocation, decision: ResourceDecision,
              channels: ChannelSet, association: Association,
              tasks: np.ndarray, config: SystemConfig):
    """(local, offload, edge, total) latency of vehicle k in seconds."""
    b = tasks[k]
    rate = offload_rate(k, allocation, decision, channels, association, config)
    f_l = decision.local_cpu[k]
    f_m = decision.mec_cpu[k]
    t_local = b * config.local_intensity / f_l if f_l > 0 else math.inf
    t_tx = config.offload_ratio * b / rate if rate > 0 else math.inf
    t_edge = config.offload_ratio * b * config.mec_intensity / f_m if f_m > 0 else math.inf
    return t_local, t_tx, t_edge, t_local + t_tx + t_edge


def all_latencies(allocation: Allocation, decision: ResourceDecision,
                  channels: ChannelSet, association: Association,
                  tasks: np.ndarray, config: SystemConfig):
    """Vectorized latency table: arrays (t_local, t_tx, t_edge, total)."""
    rates = all_rates(allocation, decision, channels, association, config)
    with np.errstate(divide="ignore"):
        t_local = np.where(decision.local_cpu > 0,
                           tasks * config.local_intensity / decision.local_cpu, np.inf)
        t_tx = np.where(rates > 0, config.offload_ratio * tasks / rates, np.inf)
        t_edge = np.where(decision.mec_cpu > 0,
                          config.offload_ratio * tasks * config.mec_intensity / decision.mec_cpu,
                          np.inf)
    return t_local, t_tx, t_edge, t_local + t_tx + t_edge


def total_power(k: int, decision: ResourceDecision, config: SystemConfig) -> float:
    """Transmit plus local-compute power: p + kappa f_L^3."""
    return float(decision.tx_power[k] + config.power_coeff * decision.local_cpu[k] ** 3)


def all_powers(decision: ResourceDecision, config: SystemConfig) -> np.ndarray:
    return decision.tx_power + config.power_coeff * decision.local_cpu**3


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

def check_feasibility(allocation: Allocation, decision: ResourceDecision,
                      instance: ScenarioInstance, config: SystemConfig,
                      tol: float = 1e-9) -> FeasibilityReport:
    """Evaluate constraints (sensing SINR, allocation validity, MEC capacity,
    CPU bounds, power budget, unit beamformers) and report margins."""
    flags, margins = {}, {}
    mat = np.asarray(allocation.matrix)

    gam = all_sensing_sinrs(allocation, decision.tx_power, instance.channels,
                            config, alpha=instance.alpha_dmin)
    margins["sensing_sinr"] = float(np.min(gam - config.sinr_threshold))
    flags["sensing_sinr"] = margins["sensing_sinr"] >= -tol * config.sinr_threshold

    binary_ok = np.isin(mat, (0, 1)).all()
    flags["allocation_binary"] = bool(binary_ok)
    margins["allocation_binary"] = 0.0 if binary_ok else -1.0
    colsum = mat.sum(axis=0)
    margins["allocation_single_band"] = float(1 - colsum.max()) if colsum.size else 0.0
    flags["allocation_single_band"] = bool((colsum <= 1).all())

    mec_margin = math.inf
    for served in instance.association.served_sets:
        if len(served) == 0:
            continue
        mec_margin = min(mec_margin, config.mec_capacity - decision.mec_cpu[served].sum())
    margins["mec_capacity"] = float(mec_margin)
    flags["mec_capacity"] = mec_margin >= -tol * config.mec_capacity

    margins["local_cpu"] = float(min(decision.local_cpu.min(),
                                     config.max_local_cpu - decision.local_cpu.max()))
    flags["local_cpu"] = margins["local_cpu"] >= -tol * config.max_local_cpu

    budget = config.max_power - all_powers(decision, config)
    margins["power_budget"] = float(budget.min())
    flags["power_budget"] = margins["power_budget"] >= -tol * config.max_power

    norms = np.linalg.norm(decision.beamformers, axis=1)
    margins["unit_beamformer"] = float(UNIT_NORM_TOL - np.abs(norms - 1.0).max())
    flags["unit_beamformer"] = margins["unit_beamformer"] >= -UNIT_NORM_TOL

    return FeasibilityReport(flags=flags, margins=margins)
