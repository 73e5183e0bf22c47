"""Closed-form optimizers: proportional MEC CPU split and the
interference-whitened receive beamformer.
"""

from __future__ import annotations

import numpy as np

from .config import SystemConfig
from .metrics import Allocation
from .scenario import Association, ChannelSet


def mec_allocate(association: Association, data_volume: np.ndarray,
                 config: SystemConfig) -> np.ndarray:
    """Latency-equalizing MEC CPU split per serving BS.

    Each vehicle gets capacity proportional to its offloaded workload
    eta * b_k * e_M, so all edge latencies within one BS coincide and the
    full capacity is used. The last share is set by subtraction so the sum
    is exact.
    """
    k_tot = data_volume.shape[0]
    out = np.zeros(k_tot)
    for served in association.served_sets:
        if len(served) == 0:
            continue
        work = config.offload_ratio * data_volume[served] * config.mec_intensity
        if (work <= 0).any():
            raise ValueError("workloads must be positive")
        shares = work / work.sum() * config.mec_capacity
        shares[-1] = config.mec_capacity - shares[:-1].sum()
        out[served] = shares
    return out


def _phase_normalize(u: np.ndarray) -> np.ndarray:
    """Unit norm with the first nonzero entry made real-positive."""
    u = u / np.linalg.norm(u)
    for x in u:
        if abs(x) > 1e-12:
            u = u * (x.conjugate() / abs(x))
            break
    return u


def receive_beamformer(k: int, allocation: Allocation, powers: np.ndarray,
                       channels: ChannelSet, association: Association,
                       config: SystemConfig):
    """Optimal unit-norm combiner for vehicle k on its assigned band.

    Maximizes the post-combining SINR; since the signal covariance is rank
    one this is D^{-1} h normalized, the principal generalized eigenvector.
    Returns (vector, assigned_flag); unassigned vehicles fall back to the
    matched filter on band 0.
    """
    bands = allocation.bands()
    m = association.serving_bs[k]
    l = bands[k]
    if l < 0:
        h = channels.uplink[k, m, 0]
        return _phase_normalize(h), False
    h = channels.uplink[k, m, l]
    n = h.shape[0]
    cov = config.noise_power_bs * np.eye(n, dtype=complex)
    for i in np.flatnonzero(bands == l):
        if i == k:
            continue
        hi = channels.uplink[i, m, l]
        cov += powers[i] * np.outer(hi, hi.conj())
    u = np.linalg.solve(cov, h)
    return _phase_normalize(u), True


def receive_beamformers(allocation: Allocation, powers: np.ndarray,
                        channels: ChannelSet, association: Association,
                        config: SystemConfig) -> np.ndarray:
    k_tot = allocation.num_vehicles
    n = channels.uplink.shape[3]
    out = np.empty((k_tot, n), dtype=complex)
    for k in range(k_tot):
        out[k], _ = receive_beamformer(k, allocation, powers, channels,
                                       association, config)
    return out


def matched_filters(allocation: Allocation, channels: ChannelSet,
                    association: Association) -> np.ndarray:
    """MRC combiners: h / ||h|| on each vehicle's assigned band (band 0 when
    unassigned)."""
    bands = allocation.bands()
    k_tot = allocation.num_vehicles
    n = channels.uplink.shape[3]
    out = np.empty((k_tot, n), dtype=complex)
    for k in range(k_tot):
        l = bands[k] if bands[k] >= 0 else 0
        h = channels.uplink[k, association.serving_bs[k], l]
        out[k] = _phase_normalize(h)
    return out
