"""Scenario configuration, unit conversions and the ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

SWEEP_VARIABLES = ("P_s", "d", "N_RF", "nmse")
SCHEME_IDS = (
    "fully_digital",
    "eigen",
    "codebook",
    "existing_hybrid",
    "eigen_no_elimination",
    "robust",
    "non_robust",
)


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


@dataclass
class SystemConfig:
    """Every parameter of one simulated scenario.

    Defaults are the full-size scenario
    (128 subcarriers of 1 GHz from 300 GHz, -75 dBm noise, CP of 16,
    CFO ratio 0.3, Fresnel coefficient 0.15, 20 dBi antennas with 20 deg
    beamwidth, 3 NLOS rays, 3-bit codebooks, 7.8 ps sampling).
    Use :func:`desk_config` for the reduced CI-sized scenario.
    """

    n_subcarriers: int = 128
    bandwidth_hz: float = 1e9
    f_start_hz: float = 300e9
    p_s_dbm: float = 10.0
    noise_power_dbm: float = -75.0
    distance_m: float = 5.0
    n_rf: int = 4
    m_t: int = 8
    n_t: int = 8
    m_r: int = 8
    n_r: int = 8
    element_spacing: float = 0.5
    epsilon_cfo: float = 0.3
    cp_length: int = 16
    sampling_time_s: float = 7.8e-12
    rolloff: float = 1.0
    codebook_bits_az: int = 3
    codebook_bits_el: int = 3
    n_clusters: int = 3
    rays_per_cluster: int = 1
    gmm_sigma1_deg: float = 2.0
    gmm_sigma2_deg: float = 6.0
    gmm_weight1: float = 0.7
    antenna_gain_tx_dbi: float = 20.0
    antenna_gain_rx_dbi: float = 20.0
    beamwidth_deg: float = 20.0
    beamwidth_gate: bool = False
    reflection_coefficient: float = 0.15
    excess_length_min: float = 0.1
    excess_length_max: float = 0.5
    absorption_k: float = 0.005
    absorption_file: str = ""
    nmse: float = 0.002
    interference_threshold: float = 1e-8
    outage_probability: float = 0.05
    n_candidates: int = 100
    robust_full_window: bool = False
    shared_combiner: bool = True
    n_realizations: int = 100
    master_seed: int = 2024

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive_ints = ("n_subcarriers", "n_rf", "m_t", "n_t", "m_r", "n_r",
                         "cp_length", "codebook_bits_az", "codebook_bits_el",
                         "n_candidates", "n_realizations")
        for name in positive_ints:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        positive = ("bandwidth_hz", "f_start_hz", "distance_m", "sampling_time_s",
                    "element_spacing", "interference_threshold", "beamwidth_deg")
        for name in positive:
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.n_clusters < 0 or self.rays_per_cluster < 0:
            raise ValueError("cluster counts must be non-negative")
        if not abs(self.epsilon_cfo) < 1:
            raise ValueError("epsilon_cfo must satisfy |epsilon| < 1")
        if not 0 <= self.nmse < 1:
            raise ValueError("nmse must lie in [0, 1)")
        if not 0 < self.outage_probability < 1:
            raise ValueError("outage_probability must lie in (0, 1)")
        if not 0 <= self.gmm_weight1 <= 1:
            raise ValueError("gmm_weight1 must lie in [0, 1]")
        if not 0 <= self.excess_length_min <= self.excess_length_max:
            raise ValueError("need 0 <= excess_length_min <= excess_length_max")
        if self.absorption_k < 0:
            raise ValueError("absorption_k must be non-negative")
        if self.master_seed < 0:
            raise ValueError("master_seed must be a non-negative integer")

    # derived quantities
    @property
    def n_bs(self) -> int:
        return self.n_rf * self.m_t * self.n_t

    @property
    def n_ue(self) -> int:
        return self.m_r * self.n_r

    @property
    def subarray_size(self) -> int:
        return self.m_t * self.n_t

    @property
    def psi(self) -> float:
        """Noise-to-signal ratio K sigma_n^2 / P_s (linear)."""
        return float(self.n_subcarriers * dbm_to_watt(self.noise_power_dbm)
                     / dbm_to_watt(self.p_s_dbm))

    @property
    def center_frequencies(self) -> np.ndarray:
        k = np.arange(1, self.n_subcarriers + 1)
        return self.f_start_hz + (k - 0.5) * self.bandwidth_hz

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SweepSpec:
    variable: str
    values: list
    schemes: list = field(default_factory=lambda: ["fully_digital", "eigen", "codebook"])

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.schemes:
            raise ValueError("sweep needs at least one scheme")
        unknown = [s for s in self.schemes if s not in SCHEME_IDS]
        if unknown:
            raise ValueError(f"unknown scheme id(s): {unknown}")


def desk_config(**overrides) -> SystemConfig:
    """CI-scale scenario: K=16, 4x4 subarrays, N_RF=4, 4x4 UE, 100 realizations."""
    base = dict(n_subcarriers=16, m_t=4, n_t=4, m_r=4, n_r=4, n_rf=4,
                n_realizations=100)
    base.update(overrides)
    k = base["n_subcarriers"]
    bw = base.get("bandwidth_hz", 1e9)
    # keep the sampling period consistent with K subcarriers of bandwidth B
    base.setdefault("sampling_time_s", 1.0 / (k * bw))
    return SystemConfig(**base)


def full_config(**overrides) -> SystemConfig:
    return SystemConfig(**overrides)


SCALES = ("desk", "full", "paper")  # "paper" is an alias of "full"


def preset(scale: str, **overrides) -> SystemConfig:
    if scale == "desk":
        return desk_config(**overrides)
    if scale in ("full", "paper"):
        return full_config(**overrides)
    raise ValueError(f"unknown scale {scale!r}")


_SWEEP_KEYS = {"sweep_variable", "sweep_values", "sweep_schemes"}


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    if typ is bool or typ == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: cannot parse boolean {raw!r}")
    if typ is int or typ == "int":
        value = float(raw)
        if value != int(value):
            raise ValueError(f"{name}: expected integer, got {raw!r}")
        return int(value)
    if typ is float or typ == "float":
        return float(raw)
    return raw


def parse_config_text(text: str, base: SystemConfig | None = None):
    """Parse ``key = value`` lines into (SystemConfig, SweepSpec | None).

    Keys are SystemConfig field names; the three ``sweep_*`` keys describe a
    sweep. Anything else is rejected.
    """
    base = base or SystemConfig()
    types = {f.name: f.type for f in fields(SystemConfig)}
    updates = {}
    sweep = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key in _SWEEP_KEYS:
            sweep[key] = value
        elif key in types:
            updates[key] = _coerce(key, value, types[key])
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    cfg = dataclasses.replace(base, **updates)
    spec = None
    if sweep:
        if "sweep_variable" not in sweep or "sweep_values" not in sweep:
            raise ValueError("sweep_variable and sweep_values must both be given")
        values = [float(v) for v in sweep["sweep_values"].split(",") if v.strip()]
        schemes = [s.strip() for s in sweep.get("sweep_schemes", "").split(",") if s.strip()]
        spec = SweepSpec(sweep["sweep_variable"], values,
                         schemes or ["fully_digital", "eigen", "codebook"])
    return cfg, spec


def load_config(path, base: SystemConfig | None = None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, base)


def format_config(cfg: SystemConfig) -> str:
    lines = []
    for f in fields(SystemConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def seed_from_env(default: int) -> int:
    """Master seed, overridden by the ``SEED`` environment variable."""
    raw = os.environ.get("SEED")
    if raw is None or raw == "":
        return default
    seed = int(raw)
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("SEED must be an unsigned 64-bit integer")
    return seed


def realization_rng(master_seed: int, index: int, *stream) -> np.random.Generator:
    """Independent stream for (master seed, realization index[, sub-stream])."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index), *stream]))
