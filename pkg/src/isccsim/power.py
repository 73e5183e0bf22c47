"""Joint transmit-power and local-CPU optimization via successive convex
approximation.

The nonconvex rate constraint is handled with the standard exponential-cone
lifting: per-vehicle signal/interference slacks in log domain, with the two
coupling inequalities linearized at anchor points that are refreshed each
iteration. The convex subproblem is small and dense, solved through cvxpy
with parameter caching so repeated solves skip canonicalization.

The sensing constraint is kept inside the subproblem as linear rows in p so
the alternating loop never leaves the feasible set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .config import SystemConfig
from .metrics import Allocation
from .scenario import ScenarioInstance

LN2 = math.log(2.0)
F_LOWER_FRAC = 1e-6      # lower bound on f_L as a fraction of F_l
MAX_SCA_ITERS = 50
SINR_FLOOR = 1e-12
GAIN_FLOOR = 1e-30
SENSING_MARGIN = 1e-6    # keeps solver tolerance from undercutting the threshold


class SensingInfeasibleError(RuntimeError):
    """No transmit power vector satisfies the sensing and budget constraints."""


@dataclass
class ScaAnchors:
    v2_bar: np.ndarray
    v3_bar: np.ndarray


@dataclass
class ScaSolution:
    tx_power: np.ndarray
    local_cpu: np.ndarray
    mu1: float
    mu2: float
    rate_per_hz: np.ndarray   # r_k, bit/s/Hz on the assigned band
    c1: np.ndarray            # received signal power bound, W
    c2: np.ndarray            # interference-plus-noise bound, W
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    objective: float
    trace: list = field(default_factory=list)
    n_iterations: int = 0
    stalled: bool = False

    @property
    def anchors(self) -> ScaAnchors:
        return ScaAnchors(v2_bar=self.v2.copy(), v3_bar=self.v3.copy())


# ---------------------------------------------------------------------------
# sensing feasibility as a linear system in p
# ---------------------------------------------------------------------------

def _sensing_coeffs(allocation: Allocation, instance: ScenarioInstance,
                    config: SystemConfig, gamma_req: float):
    """Rows of p_k >= C p + c equivalent to the sensing constraint at d_min."""
    bands = allocation.bands()
    k_tot = bands.shape[0]
    own = config.accum_symbols * instance.alpha_dmin**2   # times p_k
    big_c = np.zeros((k_tot, k_tot))
    small_c = np.zeros(k_tot)
    for k in range(k_tot):
        l = bands[k]
        if l < 0 or gamma_req <= 0:
            continue
        co = np.flatnonzero(bands == l)
        gains = np.abs(instance.channels.cross[co, k, l]) ** 2
        big_c[k, co] = gamma_req * gains / own[k]
        big_c[k, k] = 0.0
        small_c[k] = gamma_req * config.noise_power_radar / own[k]
    return big_c, small_c


def minimal_sensing_powers(allocation: Allocation, instance: ScenarioInstance,
                           config: SystemConfig, gamma_req: float) -> np.ndarray | None:
    """Componentwise-minimal p meeting the sensing rows, or None if the
    interference fixed point diverges."""
    k_tot = instance.num_vehicles
    if gamma_req <= 0:
        return np.zeros(k_tot)
    big_c, small_c = _sensing_coeffs(allocation, instance, config, gamma_req)
    radius = np.max(np.abs(np.linalg.eigvals(big_c)))
    if radius >= 1.0:
        return None
    pstar = np.linalg.solve(np.eye(k_tot) - big_c, small_c)
    if (pstar < 0).any():
        return None
    return pstar


def max_feasible_threshold(allocation: Allocation, instance: ScenarioInstance,
                           config: SystemConfig, p_cap: float | None = None,
                           tol: float = 1e-3) -> float:
    """Largest sensing threshold (up to the configured one) admitting a
    power vector within the budget, found by bisection."""
    p_cap = 0.999 * config.max_power if p_cap is None else p_cap

    def feasible(gamma):
        pstar = minimal_sensing_powers(allocation, instance, config, gamma)
        return pstar is not None and (pstar <= p_cap).all()

    hi = config.sinr_threshold
    if hi <= 0 or feasible(hi):
        return hi
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1.0):
            break
    return lo


def _sensing_satisfied(p, allocation, instance, config, gamma_req, slack=1e-9):
    if gamma_req <= 0:
        return True
    big_c, small_c = _sensing_coeffs(allocation, instance, config, gamma_req)
    return bool((p >= big_c @ p + small_c - slack * (1 + np.abs(p))).all())


def init_feasible(allocation: Allocation, beamformers: np.ndarray,
                  instance: ScenarioInstance, config: SystemConfig,
                  gamma_req: float | None = None):
    """Feasible starting point (p0, f0) for the SCA loop.

    Raises SensingInfeasibleError when no power vector can satisfy the
    sensing rows within the power budget.
    """
    gamma_req = config.sinr_threshold if gamma_req is None else gamma_req
    cap = 0.999 * config.max_power
    pstar = minimal_sensing_powers(allocation, instance, config, gamma_req)
    if pstar is None or (pstar > cap).any():
        raise SensingInfeasibleError(
            "sensing threshold unreachable within the power budget")
    # prefer some decode headroom, but never break the sensing rows
    p0 = np.clip(np.maximum(1.1 * pstar, 0.25 * config.max_power), None, cap)
    if not _sensing_satisfied(p0, allocation, instance, config, gamma_req):
        theta = min(1.1, float(np.min(cap / np.maximum(pstar, 1e-300))))
        p0 = theta * pstar
    f_cap = ((config.max_power - p0) / config.power_coeff) ** (1.0 / 3.0)
    f0 = np.minimum(config.max_local_cpu, f_cap * (1 - 1e-9))
    f0 = np.maximum(f0, F_LOWER_FRAC * config.max_local_cpu)
    return p0, f0


# ---------------------------------------------------------------------------
# the convex subproblem, cached per vehicle count
# ---------------------------------------------------------------------------

class PowerOptimizer:
    """SCA driver bound to one scenario instance.

    The cvxpy problem is parametrized (DPP) so that anchor refreshes and
    allocation/beamformer changes only update parameter values.
    """

    def __init__(self, instance: ScenarioInstance, config: SystemConfig):
        self.instance = instance
        self.config = config
        k = instance.num_vehicles
        self.k = k
        b = instance.data_volume
        self._tl_coef = b * config.local_intensity / config.max_local_cpu
        self._ttx_coef = config.offload_ratio * b / config.subband_bandwidth
        self._kappa_n = config.power_coeff * config.max_local_cpu**3

        self.p = cp.Variable(k, nonneg=True)
        self.fn = cp.Variable(k)
        self.r = cp.Variable(k)
        self.c1h = cp.Variable(k)
        self.c2h = cp.Variable(k)
        self.v1 = cp.Variable(k)
        self.v2 = cp.Variable(k)
        self.v3 = cp.Variable(k)
        self.mu1 = cp.Variable()
        self.mu2 = cp.Variable()

        self.wn = cp.Parameter((k, k), nonneg=True)
        self.nsc = cp.Parameter(k, nonneg=True)
        self.csens_mat = cp.Parameter((k, k), nonneg=True)
        self.csens_vec = cp.Parameter(k, nonneg=True)
        self.v2_bar = cp.Parameter(k)
        self.inv_e2 = cp.Parameter(k, nonneg=True)
        self.ls3 = cp.Parameter(k)
        self.inv_s3 = cp.Parameter(k, nonneg=True)
        self.v3_bar = cp.Parameter(k)

        cons = [
            cp.multiply(self._tl_coef, cp.inv_pos(self.fn)) <= self.mu1,
            cp.multiply(self._ttx_coef, cp.inv_pos(self.r)) <= self.mu2,
            cp.exp(self.v1) <= self.c1h,
            self.v1 - self.v2 >= self.v3,
            self.c1h <= self.p,
            self.wn @ self.p + self.nsc <= self.c2h,
            cp.multiply(self.inv_e2, self.c2h) <= self.v2 - self.v2_bar + 1.0,
            cp.exp(LN2 * self.r - self.ls3) - self.inv_s3 <= self.v3 - self.v3_bar + 1.0,
            self.p >= self.csens_mat @ self.p + self.csens_vec,
            self.fn >= F_LOWER_FRAC,
            self.fn <= 1.0,
            self.p + self._kappa_n * cp.power(self.fn, 3) <= config.max_power,
        ]
        self.problem = cp.Problem(cp.Minimize(self.mu1 + self.mu2), cons)
        self._gain = None

    def set_allocation(self, allocation: Allocation, beamformers: np.ndarray,
                       gamma_req: float) -> None:
        """Refresh the channel-dependent parameters for a (complete)
        allocation and combiner set."""
        cfg = self.config
        inst = self.instance
        bands = allocation.bands()
        if (bands < 0).any():
            raise ValueError("SCA requires a complete allocation")
        k_tot = self.k
        gain = np.empty(k_tot)
        cross = np.zeros((k_tot, k_tot))
        for k in range(k_tot):
            l = bands[k]
            m = inst.association.serving_bs[k]
            u = beamformers[k]
            gain[k] = max(abs(np.vdot(u, inst.channels.uplink[k, m, l])) ** 2, GAIN_FLOOR)
            for i in np.flatnonzero(bands == l):
                if i != k:
                    cross[k, i] = abs(np.vdot(u, inst.channels.uplink[i, m, l])) ** 2
        self._gain = gain
        self.wn.value = cross / gain[:, None]
        self.nsc.value = cfg.noise_power_bs / gain
        big_c, small_c = _sensing_coeffs(allocation, inst, cfg, gamma_req)
        self.csens_mat.value = (1.0 + SENSING_MARGIN) * big_c
        self.csens_vec.value = (1.0 + SENSING_MARGIN) * small_c

    def anchors_from_point(self, p: np.ndarray) -> ScaAnchors:
        """Anchor values that make the Taylor cuts tight at (p, actual SINR)."""
        c2h = self.wn.value @ p + self.nsc.value
        sinr = np.maximum(p / c2h, SINR_FLOOR)
        return ScaAnchors(v2_bar=np.log(c2h), v3_bar=np.log(sinr))

    def _apply_anchors(self, anchors: ScaAnchors) -> None:
        self.v2_bar.value = anchors.v2_bar
        self.inv_e2.value = np.exp(-anchors.v2_bar)
        self.ls3.value = anchors.v3_bar
        self.inv_s3.value = np.exp(-anchors.v3_bar)
        self.v3_bar.value = anchors.v3_bar

    def solve_subproblem(self, anchors: ScaAnchors) -> "ScaSolution | None":
        """One convex subproblem solve at fixed anchors; None on failure."""
        self._apply_anchors(anchors)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # residuals are re-verified
                self.problem.solve(solver=cp.CLARABEL, max_iter=200)
        except cp.error.SolverError:
            return None
        if self.problem.status not in ("optimal", "optimal_inaccurate"):
            return None
        return self._pack()

    def _pack(self) -> ScaSolution:
        gain = self._gain
        c1 = self.c1h.value * gain
        c2 = self.c2h.value * gain
        p = np.minimum(np.maximum(self.p.value, 0.0), self.config.max_power)
        fn = np.clip(self.fn.value, F_LOWER_FRAC, 1.0)
        # project any solver-tolerance budget overshoot onto f, never p:
        # trimming p would erode the sensing margin, trimming f only costs
        # a negligible sliver of local-compute latency
        over = p + self._kappa_n * fn**3 > self.config.max_power
        if over.any():
            fn_fit = np.cbrt(np.maximum(self.config.max_power - p, 0.0) / self._kappa_n)
            fn = np.where(over, np.clip(fn_fit, F_LOWER_FRAC, 1.0), fn)
        return ScaSolution(
            tx_power=p,
            local_cpu=fn * self.config.max_local_cpu,
            mu1=float(self.mu1.value), mu2=float(self.mu2.value),
            rate_per_hz=self.r.value.copy(),
            c1=c1, c2=c2,
            v1=np.log(np.maximum(c1, 1e-300)),
            v2=np.log(np.maximum(c2, 1e-300)),
            v3=self.v3.value.copy(),
            objective=float(self.mu1.value + self.mu2.value),
        )

    def true_offload_latency(self, p: np.ndarray) -> np.ndarray:
        """eta b / R with the exact rate on the assigned band (surrogate check)."""
        c2h = self.wn.value @ p + self.nsc.value
        rate = self.config.subband_bandwidth * np.log2(1.0 + p / c2h)
        with np.errstate(divide="ignore"):
            return np.where(rate > 0,
                            self.config.offload_ratio * self.instance.data_volume / rate,
                            np.inf)

    def sca(self, p0: np.ndarray, f0: np.ndarray,
            max_iters: int = MAX_SCA_ITERS) -> ScaSolution:
        """Run the SCA loop from a feasible point; returns the best iterate."""
        cfg = self.config
        anchors = self.anchors_from_point(p0)
        best = None
        prev_obj = math.inf
        trace = []
        stalled = False
        extra_tightenings = 0
        for it in range(max_iters):
            sol = self.solve_subproblem(anchors)
            if sol is None:
                stalled = True
                break
            trace.append(sol.objective)
            if best is None or sol.objective <= best.objective:
                best = sol
            # Algorithm step: anchors move to the subproblem's optimum
            raw_v2 = self.v2.value
            raw_v3 = self.v3.value
            anchors = ScaAnchors(v2_bar=raw_v2.copy(), v3_bar=raw_v3.copy())
            if abs(prev_obj - sol.objective) <= cfg.sca_tol * max(abs(sol.objective), 1e-12):
                # converged by objective; confirm the surrogate still covers
                # the true offload latency before stopping
                resid = np.max(self.true_offload_latency(sol.tx_power)) - sol.mu2
                if resid <= 1e-6 * max(sol.mu2, 1e-12) or extra_tightenings >= 3:
                    break
                extra_tightenings += 1
            prev_obj = sol.objective
        if best is None:
            # subproblem never solved: surface the starting point as a stall
            f_cap = np.minimum(f0, cfg.max_local_cpu)
            best = ScaSolution(
                tx_power=p0.copy(), local_cpu=f_cap,
                mu1=float(np.max(self._tl_coef / np.maximum(f_cap / cfg.max_local_cpu, F_LOWER_FRAC))),
                mu2=float(np.max(self.true_offload_latency(p0))),
                rate_per_hz=np.zeros(self.k), c1=np.zeros(self.k), c2=np.zeros(self.k),
                v1=np.zeros(self.k), v2=np.zeros(self.k), v3=np.zeros(self.k),
                objective=math.inf, stalled=True)
        best.trace = trace
        best.n_iterations = len(trace)
        best.stalled = stalled
        return best


def sca_optimize(allocation: Allocation, beamformers: np.ndarray,
                 instance: ScenarioInstance, config: SystemConfig,
                 gamma_req: float | None = None,
                 start: tuple | None = None,
                 optimizer: PowerOptimizer | None = None) -> ScaSolution:
    """Convenience wrapper: build (or reuse) the optimizer and run SCA.

    start may carry a known-feasible (p, f); otherwise init_feasible runs
    first and may raise SensingInfeasibleError.
    """
    gamma_req = config.sinr_threshold if gamma_req is None else gamma_req
    opt = optimizer if optimizer is not None else PowerOptimizer(instance, config)
    opt.set_allocation(allocation, beamformers, gamma_req)
    if start is None:
        p0, f0 = init_feasible(allocation, beamformers, instance, config, gamma_req)
    else:
        p0, f0 = start
    return opt.sca(np.asarray(p0, dtype=float), np.asarray(f0, dtype=float))
