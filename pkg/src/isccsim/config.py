"""Scenario constants, validation, and config-file parsing.

All physical quantities are stored in linear SI units (W, Hz, cycles/s, m).
dB / dBm values are accepted only at the I/O boundary through ``_db`` /
``_dbm`` suffixed keys and converted to linear on parse.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0) * 1e-3


def watt_to_dbm(value_w: float) -> float:
    return 10.0 * math.log10(value_w * 1e3)


@dataclass
class SystemConfig:
    """All scenario constants.

    Defaults reproduce the reference simulation setup: 4 BSs with 4 antennas
    each at the corners of a 400 m square, 48 single-antenna vehicles on a
    lane grid, 5 orthogonal sub-bands of 10 MHz.
    """

    num_antennas: int = 4           # N, antennas per BS
    num_bs: int = 4                 # M
    num_vehicles: int = 48          # K
    num_subbands: int = 5           # L
    subband_bandwidth: float = 10e6           # B, Hz
    noise_power_bs: float = 1e-13             # sigma_u^2, W (-100 dBm)
    noise_power_radar: float = 1e-13          # sigma_r^2, W
    ref_pathloss: float = 1e-3                # rho_0 at 1 m (-30 dB)
    max_power: float = 1.0                    # P_max, W (30 dBm)
    max_local_cpu: float = 1e9                # F_l, cycles/s
    mec_capacity: float = 30e9                # F_m per BS, cycles/s
    power_coeff: float = 1e-26                # kappa, W s^3 / cycles^3
    local_intensity: float = 50.0             # e_L, cycles/bit
    mec_intensity: float = 400.0              # e_M, cycles/bit
    offload_ratio: float = 0.1                # eta in (0, 1]
    radar_const: float = 1.0                  # zeta
    sample_rate: float = 1e5                  # f_s, samples/s
    quant_bits: float = 10.0                  # q, bits/sample
    accum_symbols: int = 500                  # N_s
    sinr_threshold: float = 100.0             # Gamma_d, linear (20 dB)
    min_detect_dist: float = 40.0             # d_min, m
    false_alarm: float = 1e-4                 # P_FA
    beam_width: int = 16                      # S_len, BnB layer cap
    tx_gain: float = 1.0                      # G_t
    rx_aperture: float = 1.0                  # A_r, m^2
    rcs_min: float = 0.8                      # xi lower bound, m^2
    rcs_max: float = 1.0                      # xi upper bound, m^2
    v2v_pathloss_exp: float = 4.0             # vehicle-to-vehicle exponent
    sca_tol: float = 1e-4
    outer_tol: float = 1e-3
    max_outer_iters: int = 15
    rng_seed: int = 1

    def data_volume(self) -> float:
        """Sensing task size in bits: zeta * f_s * q."""
        return self.radar_const * self.sample_rate * self.quant_bits

    def validate(self) -> "SystemConfig":
        """Check invariants, raising ConfigError with every violation listed."""
        problems = []
        for name in ("num_antennas", "num_bs", "num_vehicles", "num_subbands",
                     "accum_symbols", "beam_width", "max_outer_iters"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if not 1 <= self.num_bs <= 4:
            problems.append("num_bs must be between 1 and 4 (corner grid layout)")
        if self.num_bs >= 1 and self.num_vehicles >= 1:
            if self.num_subbands * self.num_bs >= self.num_vehicles:
                problems.append(
                    "num_subbands must be < num_vehicles / num_bs "
                    f"(got L={self.num_subbands}, K={self.num_vehicles}, M={self.num_bs})")
        for name in ("subband_bandwidth", "noise_power_bs", "noise_power_radar",
                     "ref_pathloss", "max_power", "max_local_cpu", "mec_capacity",
                     "power_coeff", "local_intensity", "mec_intensity",
                     "radar_const", "sample_rate", "quant_bits", "min_detect_dist",
                     "tx_gain", "rx_aperture", "sca_tol", "outer_tol"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be strictly positive")
        if not 0 < self.offload_ratio <= 1:
            problems.append("offload_ratio must be in (0, 1]")
        if not 0 < self.false_alarm < 1:
            problems.append("false_alarm must be in (0, 1)")
        if self.sinr_threshold < 0:
            problems.append("sinr_threshold must be >= 0")
        if not 0 < self.rcs_min <= self.rcs_max:
            problems.append("rcs bounds must satisfy 0 < rcs_min <= rcs_max")
        if self.v2v_pathloss_exp <= 0:
            problems.append("v2v_pathloss_exp must be positive")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def replace(self, **kwargs) -> "SystemConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def desk_profile(**overrides) -> SystemConfig:
    """Small profile for interactive runs: K=12, M=2, L=3."""
    cfg = SystemConfig(num_vehicles=12, num_bs=2, num_subbands=3)
    return cfg.replace(**overrides) if overrides else cfg


def paper_profile(**overrides) -> SystemConfig:
    """Full-scale profile (K=48, M=4, L=5)."""
    cfg = SystemConfig()
    return cfg.replace(**overrides) if overrides else cfg


_FIELD_TYPES = {f.name: f.type for f in fields(SystemConfig)}
_INT_FIELDS = {f.name for f in fields(SystemConfig) if f.type == "int"}


def _coerce(key: str, raw: str):
    """Parse one config value, handling _db/_dbm suffixed keys."""
    base = key
    if key.endswith("_dbm"):
        base = key[: -len("_dbm")]
        convert = dbm_to_watt
    elif key.endswith("_db"):
        base = key[: -len("_db")]
        convert = db_to_linear
    else:
        convert = None
    if base not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key: {key!r}")
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for {key!r}: {raw!r}") from exc
    if convert is not None:
        if base in _INT_FIELDS:
            raise ConfigError(f"dB form not accepted for integer field {base!r}")
        return base, convert(value)
    if base in _INT_FIELDS:
        if value != int(value):
            raise ConfigError(f"{key!r} must be an integer, got {raw!r}")
        return base, int(value)
    return base, value


def parse_config_text(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse flat ``key = value`` lines with ``#`` comments."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        name, value = _coerce(key, raw)
        values[name] = value
    cfg = base if base is not None else SystemConfig()
    return cfg.replace(**values)


def load_config(path: str | Path, base: SystemConfig | None = None) -> SystemConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), base=base)


def apply_overrides(cfg: SystemConfig, overrides: list[str]) -> SystemConfig:
    """Apply ``key=value`` strings on top of an existing config."""
    values = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        name, value = _coerce(key, raw)
        values[name] = value
    return cfg.replace(**values)
