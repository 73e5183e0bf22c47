"""Deterministic, seeded network instance generation.

Geometry: BSs sit on corners of a 400 m square; vehicles are dropped
uniformly on 4 horizontal + 4 vertical equidistant lanes inside the
[-200, 600]^2 m area. Uplink channels are Rayleigh with d^-2 large-scale
loss; vehicle-to-vehicle interference channels use a configurable (steeper)
exponent. Echo amplitudes follow the two-way radar budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

AREA_LO = -200.0
AREA_HI = 600.0
CELL = 400.0
N_LANES_PER_AXIS = 4

# Corner order picked so that M=2 gives opposite corners of the square.
BS_CORNERS = np.array([
    [0.0, 0.0],
    [CELL, CELL],
    [0.0, CELL],
    [CELL, 0.0],
])


class DegenerateGeometryError(ValueError):
    """Raised when two nodes coincide and a pathloss would be singular."""


@dataclass(frozen=True)
class Topology:
    bs_positions: np.ndarray       # (M, 2) m
    vehicle_positions: np.ndarray  # (K, 2) m
    target_distances: np.ndarray   # (K,) m


@dataclass(frozen=True)
class Association:
    serving_bs: np.ndarray         # (K,) BS index per vehicle
    served_sets: list              # list of M int arrays


@dataclass(frozen=True)
class ChannelSet:
    uplink: np.ndarray       # (K, M, L, N) complex, vehicle -> BS
    cross: np.ndarray        # (K, K, L) complex, cross[i, k, l]: vehicle i -> vehicle k
    sensing_amp: np.ndarray  # (K,) echo amplitude alpha_k at the drawn target distance
    rcs: np.ndarray          # (K,) m^2


@dataclass(frozen=True)
class ScenarioInstance:
    """One fully sampled network: everything a solver run needs."""

    topology: Topology
    association: Association
    channels: ChannelSet
    data_volume: np.ndarray   # (K,) task size b_k in bits
    alpha_dmin: np.ndarray    # (K,) echo amplitude evaluated at d_min

    @property
    def num_vehicles(self) -> int:
        return self.data_volume.shape[0]


def lane_offsets() -> np.ndarray:
    """Equidistant lane coordinates inside the area (4 per axis)."""
    spacing = (AREA_HI - AREA_LO) / (N_LANES_PER_AXIS + 1)
    return AREA_LO + spacing * np.arange(1, N_LANES_PER_AXIS + 1)


def echo_amplitude(config: SystemConfig, rcs, distance):
    """Two-way echo amplitude alpha for a target of given RCS at a distance."""
    rcs = np.asarray(rcs, dtype=float)
    distance = np.asarray(distance, dtype=float)
    tx = config.ref_pathloss * config.tx_gain / (4.0 * np.pi * distance**2)
    rx = rcs * config.rx_aperture / (4.0 * np.pi * distance**2)
    return np.sqrt(tx * rx)


def generate_topology(config: SystemConfig, seed, target_distance: float | None = None) -> Topology:
    """Sample BS and vehicle geometry.

    target_distance pins d_t for every vehicle (used by sweeps); otherwise
    d_t is drawn uniformly in [d_min/2, 2 d_min].
    """
    rng = np.random.default_rng(seed)
    bs = BS_CORNERS[: config.num_bs].copy()
    offsets = lane_offsets()
    k = config.num_vehicles
    lane = rng.integers(0, 2 * N_LANES_PER_AXIS, size=k)
    along = rng.uniform(AREA_LO, AREA_HI, size=k)
    pos = np.empty((k, 2))
    horizontal = lane < N_LANES_PER_AXIS
    pos[horizontal, 0] = along[horizontal]
    pos[horizontal, 1] = offsets[lane[horizontal]]
    pos[~horizontal, 0] = offsets[lane[~horizontal] - N_LANES_PER_AXIS]
    pos[~horizontal, 1] = along[~horizontal]
    if target_distance is not None:
        d_t = np.full(k, float(target_distance))
    else:
        d_t = rng.uniform(config.min_detect_dist / 2, 2 * config.min_detect_dist, size=k)
    return Topology(bs_positions=bs, vehicle_positions=pos, target_distances=d_t)


def associate(topology: Topology, config: SystemConfig) -> Association:
    """Balanced nearest-BS assignment.

    Vehicles with the largest gap between nearest and second-nearest BS are
    assigned first (they lose the most if displaced); each BS takes at most
    ceil(K/M), with a final rebalancing pass so set sizes differ by <= 1.
    """
    k = topology.vehicle_positions.shape[0]
    m = topology.bs_positions.shape[0]
    dists = np.linalg.norm(
        topology.vehicle_positions[:, None, :] - topology.bs_positions[None, :, :], axis=2)
    serving = np.full(k, -1, dtype=int)
    if m == 1:
        serving[:] = 0
    else:
        quota = -(-k // m)  # ceil
        counts = np.zeros(m, dtype=int)
        order_d = np.sort(dists, axis=1)
        gap = order_d[:, 1] - order_d[:, 0]
        # stable sort: ties broken by vehicle index
        for v in sorted(range(k), key=lambda i: (-gap[i], i)):
            for bs_idx in np.argsort(dists[v], kind="stable"):
                if counts[bs_idx] < quota:
                    serving[v] = bs_idx
                    counts[bs_idx] += 1
                    break
        # ceil-quota greedy can leave sizes differing by 2 when M does not
        # divide K; move the cheapest vehicles until balanced
        while counts.max() - counts.min() > 1:
            src = int(np.argmax(counts))
            dst = int(np.argmin(counts))
            members = np.flatnonzero(serving == src)
            penalty = dists[members, dst] - dists[members, src]
            mover = members[int(np.argmin(penalty))]
            serving[mover] = dst
            counts[src] -= 1
            counts[dst] += 1
    served = [np.flatnonzero(serving == j) for j in range(m)]
    return Association(serving_bs=serving, served_sets=served)


def sample_channels(config: SystemConfig, topology: Topology,
                    association: Association, seed) -> ChannelSet:
    """Draw one fading realization, independent across sub-bands."""
    rng = np.random.default_rng(seed)
    k = topology.vehicle_positions.shape[0]
    m = topology.bs_positions.shape[0]
    l, n = config.num_subbands, config.num_antennas

    d_kb = np.linalg.norm(
        topology.vehicle_positions[:, None, :] - topology.bs_positions[None, :, :], axis=2)
    if np.any(d_kb <= 0):
        raise DegenerateGeometryError("vehicle placed exactly on a BS")
    diff = topology.vehicle_positions[:, None, :] - topology.vehicle_positions[None, :, :]
    d_vv = np.linalg.norm(diff, axis=2)
    off_diag = ~np.eye(k, dtype=bool)
    if np.any(d_vv[off_diag] <= 0):
        raise DegenerateGeometryError("two vehicles at identical positions")

    fade_h = (rng.standard_normal((k, m, l, n)) + 1j * rng.standard_normal((k, m, l, n))) / np.sqrt(2)
    fade_g = (rng.standard_normal((k, k, l)) + 1j * rng.standard_normal((k, k, l))) / np.sqrt(2)
    rcs = rng.uniform(config.rcs_min, config.rcs_max, size=k)

    amp_h = np.sqrt(config.ref_pathloss) / d_kb  # d^-2 power law
    uplink = amp_h[:, :, None, None] * fade_h
    d_safe = d_vv.copy()
    np.fill_diagonal(d_safe, 1.0)
    amp_g = np.sqrt(config.ref_pathloss * d_safe ** (-config.v2v_pathloss_exp))
    cross = amp_g[:, :, None] * fade_g
    idx = np.arange(k)
    cross[idx, idx, :] = 0.0

    alpha = echo_amplitude(config, rcs, topology.target_distances)
    return ChannelSet(uplink=uplink, cross=cross, sensing_amp=alpha, rcs=rcs)


def perturb_channels(channels: ChannelSet, epsilon_sq: float, seed) -> ChannelSet:
    """Imperfect-CSI hook: entrywise multiplicative Gaussian error.

    Each channel coefficient becomes h * (1 + eps * g) with g standard
    circular Gaussian and eps^2 the normalized error power. Echo amplitudes
    are deterministic link-budget quantities and stay untouched.
    """
    if epsilon_sq < 0:
        raise ValueError("epsilon_sq must be nonnegative")
    if epsilon_sq == 0:
        return channels
    rng = np.random.default_rng(seed)
    eps = np.sqrt(epsilon_sq)

    def _mult_noise(shape):
        return 1.0 + eps * (rng.standard_normal(shape)
                            + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    uplink = channels.uplink * _mult_noise(channels.uplink.shape)
    cross = channels.cross * _mult_noise(channels.cross.shape)
    k = cross.shape[0]
    cross[np.arange(k), np.arange(k), :] = 0.0
    return ChannelSet(uplink=uplink, cross=cross,
                      sensing_amp=channels.sensing_amp.copy(),
                      rcs=channels.rcs.copy())


def build_instance(config: SystemConfig, seed,
                   target_distance: float | None = None) -> ScenarioInstance:
    """Generate a full scenario instance from one seed (int or SeedSequence)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    topo_seed, chan_seed = ss.spawn(2)
    topology = generate_topology(config, topo_seed, target_distance=target_distance)
    assoc = associate(topology, config)
    channels = sample_channels(config, topology, assoc, chan_seed)
    b = np.full(config.num_vehicles, config.data_volume())
    alpha_dmin = echo_amplitude(config, channels.rcs, config.min_detect_dist)
    return ScenarioInstance(topology=topology, association=assoc, channels=channels,
                            data_volume=b, alpha_dmin=alpha_dmin)
