import numpy as np
import pytest

from isccsim.config import SystemConfig
from isccsim.metrics import Allocation, ResourceDecision
from isccsim.scenario import (Association, ChannelSet, ScenarioInstance,
                              Topology, build_instance)


def toy_config(k=5, m=1, l=3, n=4, **overrides) -> SystemConfig:
    """Small config for unit tests; skips the L < K/M guard on purpose."""
    base = dict(num_vehicles=k, num_bs=m, num_subbands=l, num_antennas=n,
                beam_width=l**k, sinr_threshold=0.0)
    base.update(overrides)
    return SystemConfig(**base)


def toy_instance(cfg: SystemConfig, seed=0) -> ScenarioInstance:
    return build_instance(cfg, seed)


def manual_instance(cfg: SystemConfig, uplink, cross, sensing_amp=None,
                    target_distances=None) -> ScenarioInstance:
    """Instance with hand-built channels (positions only used for records)."""
    k = cfg.num_vehicles
    uplink = np.asarray(uplink, dtype=complex)
    cross = np.asarray(cross, dtype=complex)
    amp = (np.ones(k) if sensing_amp is None else np.asarray(sensing_amp, float))
    d_t = (np.full(k, cfg.min_detect_dist) if target_distances is None
           else np.asarray(target_distances, float))
    topo = Topology(bs_positions=np.zeros((cfg.num_bs, 2)),
                    vehicle_positions=np.arange(2.0 * k).reshape(k, 2),
                    target_distances=d_t)
    serving = np.zeros(k, dtype=int)
    assoc = Association(serving_bs=serving,
                        served_sets=[np.arange(k)] + [np.array([], int)] * (cfg.num_bs - 1))
    chans = ChannelSet(uplink=uplink, cross=cross, sensing_amp=amp,
                       rcs=np.ones(k))
    b = np.full(k, cfg.data_volume())
    alpha_dmin = amp * (d_t / cfg.min_detect_dist) ** 2
    return ScenarioInstance(topology=topo, association=assoc, channels=chans,
                            data_volume=b, alpha_dmin=alpha_dmin)


def simple_decision(cfg: SystemConfig, instance: ScenarioInstance,
                    allocation: Allocation, power=0.5) -> ResourceDecision:
    """Matched-filter decision with uniform power and CPU shares."""
    from isccsim.closed_forms import matched_filters, mec_allocate
    k = cfg.num_vehicles
    p = np.full(k, power, dtype=float)
    u = matched_filters(allocation, instance.channels, instance.association)
    f_m = mec_allocate(instance.association, instance.data_volume, cfg)
    f_l = np.full(k, min(cfg.max_local_cpu,
                         ((cfg.max_power / 2) / cfg.power_coeff) ** (1 / 3)))
    return ResourceDecision(tx_power=p, local_cpu=f_l, mec_cpu=f_m, beamformers=u)


@pytest.fixture
def desk_cfg():
    from isccsim.config import desk_profile
    return desk_profile()
