import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isccsim.metrics import (Allocation, ResourceDecision, all_latencies,
                             all_sensing_sinrs, check_feasibility,
                             detection_probability, fa_threshold, latencies,
                             marcum_q1, offload_rate, sensing_sinr,
                             total_power)

from conftest import manual_instance, simple_decision, toy_config, toy_instance


# ---------------------------------------------------------------------------
# allocation container
# ---------------------------------------------------------------------------

def test_allocation_from_bands_roundtrip():
    alloc = Allocation.from_bands([2, 0, -1, 1], 3).validate()
    assert list(alloc.bands()) == [2, 0, -1, 1]
    assert not alloc.complete
    assert Allocation.from_bands([0, 1], 2).complete


def test_allocation_rejects_double_assignment():
    mat = np.zeros((2, 2), dtype=np.int8)
    mat[:, 0] = 1
    with pytest.raises(ValueError):
        Allocation(mat).validate()


def test_allocation_rejects_nonbinary():
    with pytest.raises(ValueError):
        Allocation(np.array([[2, 0]])).validate()


# ---------------------------------------------------------------------------
# offload rate
# ---------------------------------------------------------------------------

def _single_vehicle_instance(hnorm_sq, cfg):
    h = np.zeros((1, 1, 1, cfg.num_antennas), dtype=complex)
    h[0, 0, 0] = np.sqrt(hnorm_sq / cfg.num_antennas)
    cross = np.zeros((1, 1, 1), dtype=complex)
    return manual_instance(cfg, h, cross)


def test_rate_single_vehicle_unit_snr():
    # p ||h||^2 / sigma^2 = 1 with matched filter -> R = B log2(2) = B
    cfg = toy_config(k=1, l=1, n=4)
    inst = _single_vehicle_instance(cfg.noise_power_bs, cfg)
    h = inst.channels.uplink[0, 0, 0]
    u = (h / np.linalg.norm(h))[None, :]
    dec = ResourceDecision(tx_power=np.array([1.0]), local_cpu=np.array([1e9]),
                           mec_cpu=np.array([1e9]), beamformers=u)
    alloc = Allocation.from_bands([0], 1)
    rate = offload_rate(0, alloc, dec, inst.channels, inst.association, cfg)
    assert rate == pytest.approx(1e7, rel=1e-12)


def test_rate_zero_when_unassigned():
    cfg = toy_config(k=1, l=1)
    inst = _single_vehicle_instance(1e-10, cfg)
    dec = simple_decision(cfg, inst, Allocation.from_bands([0], 1))
    alloc = Allocation.from_bands([-1], 1)
    assert offload_rate(0, alloc, dec, inst.channels, inst.association, cfg) == 0.0


def _scalar_rate_oracle(k, bands, p, u, h, serving, sigma2, bandwidth):
    """Independent re-evaluation with plain Python complex arithmetic."""
    l = bands[k]
    m = serving[k]
    dot = sum(complex(u[k][a]).conjugate() * complex(h[k][m][l][a])
              for a in range(len(u[k])))
    sig = p[k] * abs(dot) ** 2
    den = sigma2 * sum(abs(complex(x)) ** 2 for x in u[k])
    for i in range(len(p)):
        if i != k and bands[i] == l:
            doti = sum(complex(u[k][a]).conjugate() * complex(h[i][m][l][a])
                       for a in range(len(u[k])))
            den += p[i] * abs(doti) ** 2
    return bandwidth * math.log2(1 + sig / den)


def test_rate_matches_scalar_oracle_two_vehicles_shared_band():
    cfg = toy_config(k=2, m=1, l=1, n=4)
    rng = np.random.default_rng(0)
    h = (rng.standard_normal((2, 1, 1, 4)) + 1j * rng.standard_normal((2, 1, 1, 4))) * 1e-5
    inst = manual_instance(cfg, h, np.zeros((2, 2, 1), dtype=complex))
    alloc = Allocation.from_bands([0, 0], 1)
    u = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    p = np.array([0.7, 0.4])
    dec = ResourceDecision(tx_power=p, local_cpu=np.ones(2), mec_cpu=np.ones(2),
                           beamformers=u)
    for k in (0, 1):
        mine = offload_rate(k, alloc, dec, inst.channels, inst.association, cfg)
        ref = _scalar_rate_oracle(k, [0, 0], p, u, h, [0, 0],
                                  cfg.noise_power_bs, cfg.subband_bandwidth)
        assert mine == pytest.approx(ref, rel=1e-12)


def test_rate_interference_crosses_bs_boundaries():
    # interferer served elsewhere still degrades the rate on a shared band
    cfg = toy_config(k=4, m=2, l=2, n=4)
    inst = toy_instance(cfg, seed=1)
    alloc = Allocation.from_bands([0, 0, 1, 1], 2)
    dec = simple_decision(cfg, inst, alloc)
    serving = inst.association.serving_bs
    k = 0
    partner = 1
    assert serving.shape[0] == 4
    r_with = offload_rate(k, alloc, dec, inst.channels, inst.association, cfg)
    quiet = dec.tx_power.copy()
    quiet[partner] = 0.0
    dec2 = ResourceDecision(quiet, dec.local_cpu, dec.mec_cpu, dec.beamformers)
    r_without = offload_rate(k, alloc, dec2, inst.channels, inst.association, cfg)
    assert r_without > r_with


def test_rate_phase_invariance_and_interference_monotonicity():
    cfg = toy_config(k=3, m=1, l=2, n=4)
    inst = toy_instance(cfg, seed=2)
    alloc = Allocation.from_bands([0, 0, 1], 2)
    dec = simple_decision(cfg, inst, alloc)
    base = offload_rate(0, alloc, dec, inst.channels, inst.association, cfg)
    # unit-modulus scaling of the combiner changes nothing
    u2 = dec.beamformers.copy()
    u2[0] *= np.exp(1j * 1.234)
    dec_rot = ResourceDecision(dec.tx_power, dec.local_cpu, dec.mec_cpu, u2)
    assert offload_rate(0, alloc, dec_rot, inst.channels, inst.association,
                        cfg) == pytest.approx(base, rel=1e-12)
    # raising an interferer's power never helps
    hot = dec.tx_power.copy()
    hot[1] *= 3.0
    dec_hot = ResourceDecision(hot, dec.local_cpu, dec.mec_cpu, dec.beamformers)
    assert offload_rate(0, alloc, dec_hot, inst.channels, inst.association, cfg) <= base


def test_exactly_one_band_term_for_complete_allocation():
    cfg = toy_config(k=4, m=1, l=3)
    inst = toy_instance(cfg, seed=3)
    alloc = Allocation.from_bands([0, 1, 2, 1], 3)
    assert alloc.complete
    assert (np.asarray(alloc.matrix).sum(axis=0) == 1).all()


# ---------------------------------------------------------------------------
# sensing SINR
# ---------------------------------------------------------------------------

def test_sensing_sinr_no_interference_closed_form():
    # N_s p alpha^2 / sigma_r^2 with the example numbers gives 10 dB
    cfg = toy_config(k=1, l=1, accum_symbols=500, noise_power_radar=1e-13)
    inst = manual_instance(cfg, np.zeros((1, 1, 1, 4), dtype=complex),
                           np.zeros((1, 1, 1), dtype=complex),
                           sensing_amp=[math.sqrt(2e-15)])
    alloc = Allocation.from_bands([0], 1)
    gam = sensing_sinr(0, alloc, np.array([1.0]), inst.channels, cfg)
    assert gam == pytest.approx(10.0, rel=1e-12)


def test_sensing_sinr_zero_power():
    cfg = toy_config(k=2, l=1)
    inst = toy_instance(cfg, seed=0)
    alloc = Allocation.from_bands([0, 0], 1)
    assert sensing_sinr(0, alloc, np.zeros(2), inst.channels, cfg) == 0.0


def test_sensing_sinr_matches_hand_expansion():
    # 3 vehicles, 2 bands: expand the sum by hand
    cfg = toy_config(k=3, m=1, l=2, accum_symbols=100, noise_power_radar=2e-13)
    rng = np.random.default_rng(4)
    cross = (rng.standard_normal((3, 3, 2)) + 1j * rng.standard_normal((3, 3, 2))) * 1e-5
    for i in range(3):
        cross[i, i, :] = 0
    amp = np.array([1e-6, 2e-6, 3e-6])
    inst = manual_instance(cfg, np.zeros((3, 1, 2, 4), dtype=complex), cross,
                           sensing_amp=amp)
    alloc = Allocation.from_bands([0, 0, 1], 2)
    p = np.array([0.5, 0.2, 0.9])
    gam0 = sensing_sinr(0, alloc, p, inst.channels, cfg)
    expected0 = (100 * 0.5 * amp[0] ** 2 /
                 (0.2 * abs(cross[1, 0, 0]) ** 2 + 2e-13))
    assert gam0 == pytest.approx(expected0, rel=1e-12)
    gam2 = sensing_sinr(2, alloc, p, inst.channels, cfg)
    assert gam2 == pytest.approx(100 * 0.9 * amp[2] ** 2 / 2e-13, rel=1e-12)


def test_sensing_sinr_band_relabel_invariance():
    cfg = toy_config(k=4, m=1, l=3)
    inst = toy_instance(cfg, seed=5)
    p = np.random.default_rng(0).uniform(0.1, 1.0, 4)
    bands = np.array([0, 1, 2, 0])
    perm = np.array([2, 0, 1])  # relabel bands
    alloc = Allocation.from_bands(bands, 3)
    relabeled = Allocation.from_bands(perm[bands], 3)
    # permute channel band axis consistently
    inst2_cross = inst.channels.cross[:, :, np.argsort(perm)]
    inst2 = manual_instance(cfg, inst.channels.uplink, inst2_cross,
                            sensing_amp=inst.channels.sensing_amp)
    for k in range(4):
        a = sensing_sinr(k, alloc, p, inst.channels, cfg)
        b = sensing_sinr(k, relabeled, p, inst2.channels, cfg)
        assert a == pytest.approx(b, rel=1e-12)


def test_sensing_alpha_override_for_dmin():
    cfg = toy_config(k=1, l=1)
    inst = toy_instance(cfg, seed=6)
    alloc = Allocation.from_bands([0], 1)
    p = np.array([0.5])
    at_target = sensing_sinr(0, alloc, p, inst.channels, cfg)
    at_dmin = sensing_sinr(0, alloc, p, inst.channels, cfg,
                           alpha=inst.alpha_dmin[0])
    ratio = (inst.alpha_dmin[0] / inst.channels.sensing_amp[0]) ** 2
    assert at_dmin == pytest.approx(at_target * ratio, rel=1e-12)


# ---------------------------------------------------------------------------
# detection math
# ---------------------------------------------------------------------------

def test_fa_threshold_values():
    assert fa_threshold(1.0) == 0.0
    assert fa_threshold(math.exp(-2)) == pytest.approx(4.0, rel=1e-14)
    # numeric inversion oracle of 1 - exp(-psi/2) at P_FA = 1e-4
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.exp(-mid / 2) > 1e-4:
            lo = mid
        else:
            hi = mid
    assert fa_threshold(1e-4) == pytest.approx(hi, abs=1e-10)
    assert fa_threshold(1e-4) == pytest.approx(18.42068, abs=1e-4)


def test_fa_threshold_domain():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            fa_threshold(bad)


def test_detection_probability_at_zero_sinr_equals_pfa():
    for pfa in (1e-6, 1e-4, 1e-2, 0.3):
        assert detection_probability(0.0, pfa) == pytest.approx(pfa, rel=1e-12)


def test_detection_probability_limits():
    assert detection_probability(1e8, 1e-4) == pytest.approx(1.0, abs=1e-12)
    assert detection_probability(2e3, 1e-4) == pytest.approx(1.0, abs=1e-10)


def test_detection_probability_vs_energy_detector_simulation():
    """Sampled matched-filter detector: r[w] = a s[w] + n[w], statistic
    2|sum s* r|^2 / (sigma^2 N_s p) ~ noncentral chi-square(2, gamma)."""
    rng = np.random.default_rng(99)
    n_draws, n_s, p, sigma2 = 120_000, 64, 1.3, 0.7
    pfa = 1e-4
    psi = fa_threshold(pfa)
    for gamma in (4.0, 25.0, 100.0):
        a = math.sqrt(gamma * sigma2 / (2 * n_s * p))
        phases = rng.uniform(0, 2 * np.pi, (n_draws, n_s))
        s = math.sqrt(p) * np.exp(1j * phases)
        noise = math.sqrt(sigma2 / 2) * (rng.standard_normal((n_draws, n_s))
                                         + 1j * rng.standard_normal((n_draws, n_s)))
        r = a * s + noise
        z = (s.conj() * r).sum(axis=1)
        stat = 2 * np.abs(z) ** 2 / (sigma2 * n_s * p)
        emp = float(np.mean(stat > psi))
        assert emp == pytest.approx(detection_probability(gamma, pfa), abs=0.01)


def test_detection_probability_monotone_in_sinr():
    grid = np.linspace(0.0, 1000.0, 200)
    pd = detection_probability(grid, 1e-4)
    assert (np.diff(pd) >= -1e-12).all()
    assert pd[0] == pytest.approx(1e-4, rel=1e-9)
    assert pd[-1] > 0.999999


def test_marcum_vs_scipy_crosscheck():
    from scipy.stats import ncx2
    for gamma in (0.3, 2.0, 17.0, 80.0, 333.0):
        for psi in (0.5, 4.0, 18.4, 40.0):
            mine = marcum_q1(math.sqrt(gamma), math.sqrt(psi))
            assert mine == pytest.approx(ncx2.sf(psi, 2, gamma), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(g1=st.floats(0, 500), g2=st.floats(0, 500),
       pfa=st.floats(1e-8, 0.99))
def test_detection_monotone_property(g1, g2, pfa):
    lo, hi = sorted((g1, g2))
    assert detection_probability(lo, pfa) <= detection_probability(hi, pfa) + 1e-12


@settings(max_examples=60, deadline=None)
@given(pfa=st.floats(1e-12, 1.0, exclude_max=False))
def test_fa_threshold_inverts_central_tail(pfa):
    psi = fa_threshold(pfa)
    assert psi >= 0
    assert math.exp(-psi / 2) == pytest.approx(pfa, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(gamma=st.floats(0, 2000), pfa=st.floats(1e-10, 0.999))
def test_detection_probability_is_a_probability(gamma, pfa):
    pd = detection_probability(gamma, pfa)
    assert 0.0 <= pd <= 1.0
    assert pd >= pfa - 1e-12  # never below the false-alarm floor


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(min_value=-1, max_value=3), min_size=1, max_size=10))
def test_allocation_band_roundtrip_property(bands):
    alloc = Allocation.from_bands(bands, 4).validate()
    assert list(alloc.bands()) == bands
    assert alloc.complete == all(b >= 0 for b in bands)


# ---------------------------------------------------------------------------
# latency and power
# ---------------------------------------------------------------------------

def _latency_fixture():
    cfg = toy_config(k=1, m=1, l=1, n=4, offload_ratio=0.1,
                     local_intensity=50.0, mec_intensity=400.0)
    inst = _single_vehicle_instance(cfg.noise_power_bs, cfg)
    h = inst.channels.uplink[0, 0, 0]
    u = (h / np.linalg.norm(h))[None, :]
    dec = ResourceDecision(tx_power=np.array([1.0]),
                           local_cpu=np.array([1e9]),
                           mec_cpu=np.array([1e10]), beamformers=u)
    return cfg, inst, Allocation.from_bands([0], 1), dec


def test_latency_components_worked_example():
    cfg, inst, alloc, dec = _latency_fixture()
    t_l, t_tx, t_edge, total = latencies(0, alloc, dec, inst.channels,
                                         inst.association, inst.data_volume, cfg)
    assert t_l == pytest.approx(0.05, rel=1e-12)       # 1e6 * 50 / 1e9
    assert t_tx == pytest.approx(0.01, rel=1e-9)       # 0.1 * 1e6 / 1e7
    assert t_edge == pytest.approx(0.004, rel=1e-12)   # 0.1 * 1e6 * 400 / 1e10
    assert total == pytest.approx(0.064, rel=1e-9)


def test_latency_scaling_in_local_cpu():
    cfg, inst, alloc, dec = _latency_fixture()
    t_l1, _, _, _ = latencies(0, alloc, dec, inst.channels, inst.association,
                              inst.data_volume, cfg)
    dec2 = ResourceDecision(dec.tx_power, dec.local_cpu * 2, dec.mec_cpu,
                            dec.beamformers)
    t_l2, _, _, _ = latencies(0, alloc, dec2, inst.channels, inst.association,
                              inst.data_volume, cfg)
    assert t_l2 == pytest.approx(t_l1 / 2, rel=1e-12)


def test_latency_total_is_component_sum():
    cfg = toy_config(k=4, m=2, l=2)
    inst = toy_instance(cfg, seed=7)
    alloc = Allocation.from_bands([0, 1, 0, 1], 2)
    dec = simple_decision(cfg, inst, alloc)
    t_l, t_tx, t_edge, total = all_latencies(alloc, dec, inst.channels,
                                             inst.association,
                                             inst.data_volume, cfg)
    assert np.allclose(total, t_l + t_tx + t_edge, rtol=1e-12)


def test_zero_cpu_gives_infinite_latency():
    cfg, inst, alloc, dec = _latency_fixture()
    dec0 = ResourceDecision(dec.tx_power, np.array([0.0]), dec.mec_cpu,
                            dec.beamformers)
    t_l, _, _, total = latencies(0, alloc, dec0, inst.channels,
                                 inst.association, inst.data_volume, cfg)
    assert math.isinf(t_l) and math.isinf(total)


def test_total_power_examples():
    # kappa f^3: 1e-26 * (1e8)^3 = 0.01 W and 1e-26 * (1e9)^3 = 10 W
    cfg = toy_config(k=1, l=1, power_coeff=1e-26)
    dec = ResourceDecision(tx_power=np.array([0.0]), local_cpu=np.array([1e8]),
                           mec_cpu=np.array([1e9]),
                           beamformers=np.ones((1, 4)) / 2)
    assert total_power(0, dec, cfg) == pytest.approx(0.01, rel=1e-12)
    dec_max = ResourceDecision(np.array([0.0]), np.array([1e9]),
                               np.array([1e9]), dec.beamformers)
    assert total_power(0, dec_max, cfg) == pytest.approx(10.0, rel=1e-12)
    dec_zero = ResourceDecision(np.array([0.0]), np.array([0.0]),
                                np.array([1e9]), dec.beamformers)
    assert total_power(0, dec_zero, cfg) == 0.0
    # exact budget boundary: p + kappa f^3 = P_max
    dec_full = ResourceDecision(np.array([0.99]), np.array([1e8]),
                                np.array([1e9]), dec.beamformers)
    assert total_power(0, dec_full, cfg) == pytest.approx(cfg.max_power, rel=1e-12)


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

def test_feasibility_zero_power_violates_sensing():
    cfg = toy_config(k=3, m=1, l=2, sinr_threshold=10.0)
    inst = toy_instance(cfg, seed=8)
    alloc = Allocation.from_bands([0, 1, 0], 2)
    dec = simple_decision(cfg, inst, alloc, power=0.0)
    rep = check_feasibility(alloc, dec, inst, cfg)
    assert not rep.flags["sensing_sinr"]
    assert "sensing_sinr" in rep.violated()


def test_feasibility_exact_mec_split_zero_margin():
    cfg = toy_config(k=3, m=1, l=2)
    inst = toy_instance(cfg, seed=9)
    alloc = Allocation.from_bands([0, 1, 0], 2)
    dec = simple_decision(cfg, inst, alloc, power=0.01)
    assert np.sum(dec.mec_cpu) == pytest.approx(cfg.mec_capacity, rel=1e-15)
    rep = check_feasibility(alloc, dec, inst, cfg)
    assert rep.flags["mec_capacity"]
    assert abs(rep.margins["mec_capacity"]) < 1e-3 * cfg.mec_capacity


def test_feasibility_flags_match_direct_reevaluation():
    cfg = toy_config(k=4, m=2, l=2, sinr_threshold=1.0)
    rng = np.random.default_rng(11)
    inst = toy_instance(cfg, seed=10)
    alloc = Allocation.from_bands(rng.integers(0, 2, 4), 2)
    u = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    dec = ResourceDecision(tx_power=rng.uniform(0, 1.2, 4),
                           local_cpu=rng.uniform(0, 1.5e9, 4),
                           mec_cpu=rng.uniform(0, 2e10, 4),
                           beamformers=u)
    rep = check_feasibility(alloc, dec, inst, cfg)
    gam = all_sensing_sinrs(alloc, dec.tx_power, inst.channels, cfg,
                            alpha=inst.alpha_dmin)
    assert rep.flags["sensing_sinr"] == bool((gam >= cfg.sinr_threshold * (1 - 1e-9)).all())
    assert rep.flags["local_cpu"] == bool(
        (dec.local_cpu >= -1e-9).all()
        and (dec.local_cpu <= cfg.max_local_cpu * (1 + 1e-9)).all())
    budget_ok = (dec.tx_power + cfg.power_coeff * dec.local_cpu**3
                 <= cfg.max_power * (1 + 1e-9)).all()
    assert rep.flags["power_budget"] == bool(budget_ok)
    mec_ok = all(dec.mec_cpu[s].sum() <= cfg.mec_capacity * (1 + 1e-9)
                 for s in inst.association.served_sets if len(s))
    assert rep.flags["mec_capacity"] == bool(mec_ok)
