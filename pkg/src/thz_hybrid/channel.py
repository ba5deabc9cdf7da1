"""Frequency-selective 3D THz channel: path loss, UPA responses, pulse taps.

The channel at subcarrier ``k`` is a sum of rank-one ray contributions::

    H[k] = sum_p  alpha_p(f_k) * g_p * P_r(k, tau_p) * a_r(p) a_t(p)^H

with ``alpha_p`` combining spreading and molecular-absorption loss, ``g_p``
the (amplitude) antenna gain, ``P_r`` the DFT of the sampled pulse and
unit-norm array responses ``a_r``, ``a_t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import SPEED_OF_LIGHT, SystemConfig, db_to_linear


@dataclass(frozen=True)
class UpaGeometry:
    rows: int
    cols: int
    element_spacing: float = 0.5

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("UPA needs rows >= 1 and cols >= 1")
        if self.element_spacing <= 0:
            raise ValueError("element spacing must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols


class AbsorptionModel:
    """Piecewise-linear molecular absorption coefficient k_abs(f) in 1/m."""

    def __init__(self, frequencies, k_abs):
        freqs = np.asarray(frequencies, dtype=float)
        vals = np.asarray(k_abs, dtype=float)
        if freqs.ndim != 1 or freqs.shape != vals.shape or freqs.size < 2:
            raise ValueError("absorption table needs >= 2 matching (f, k_abs) samples")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("absorption frequencies must be strictly increasing")
        if np.any(vals < 0):
            raise ValueError("absorption coefficients must be non-negative")
        self.frequencies = freqs
        self.k_abs = vals

    @classmethod
    def constant(cls, k_abs: float, f_min: float = 300e9, f_max: float = 450e9):
        return cls([f_min, f_max], [k_abs, k_abs])

    @classmethod
    def from_file(cls, path):
        """Read ``frequency_hz,k_abs_per_m`` lines ('#' starts a comment)."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read absorption table {path}: {exc}") from exc
        return cls.from_text(text, source=str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<string>"):
        freqs, vals = [], []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{source}:{lineno}: expected 'frequency_hz,k_abs_per_m'")
            freqs.append(float(parts[0]))
            vals.append(float(parts[1]))
        return cls(freqs, vals)

    @classmethod
    def bundled(cls):
        """Small illustrative table for the 300-450 GHz window shipped with the package."""
        text = resources.files("thz_hybrid").joinpath("data/absorption_300_450.csv").read_text()
        return cls.from_text(text, source="absorption_300_450.csv")

    def covers(self, f) -> bool:
        f = np.asarray(f, dtype=float)
        return bool(np.all((f >= self.frequencies[0]) & (f <= self.frequencies[-1])))

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        if not self.covers(f):
            raise ValueError(
                f"frequency outside absorption table coverage "
                f"[{self.frequencies[0]:g}, {self.frequencies[-1]:g}] Hz")
        return np.interp(f, self.frequencies, self.k_abs)


def absorption_for(cfg: SystemConfig) -> AbsorptionModel:
    if cfg.absorption_file:
        return AbsorptionModel.from_file(cfg.absorption_file)
    f_lo = min(300e9, cfg.f_start_hz)
    f_hi = max(450e9, cfg.f_start_hz + cfg.n_subcarriers * cfg.bandwidth_hz)
    return AbsorptionModel.constant(cfg.absorption_k, f_lo, f_hi)


def path_gain(f, d, absorption: AbsorptionModel):
    """Linear power gain (c / (4 pi f d))^2 * exp(-k_abs(f) d)."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ValueError("distance must be positive")
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr <= 0):
        raise ValueError("frequency must be positive")
    spreading = (SPEED_OF_LIGHT / (4.0 * np.pi * f_arr * d_arr)) ** 2
    return spreading * np.exp(-absorption(f_arr) * d_arr)


def _direction_cosines(azimuth, elevation):
    # phase per element (m, n): 2 pi a (m cos(az) sin(el) + n sin(az) sin(el))
    return np.cos(azimuth) * np.sin(elevation), np.sin(azimuth) * np.sin(elevation)


def steering_vector(geometry: UpaGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Unit-norm UPA response; element (m, n) sits at index ``m * cols + n``."""
    u, w = _direction_cosines(azimuth, elevation)
    k = 2.0 * np.pi * geometry.element_spacing
    row = np.exp(1j * k * u * np.arange(geometry.rows))
    col = np.exp(1j * k * w * np.arange(geometry.cols))
    return np.kron(row, col) / np.sqrt(geometry.size)


def steering_matrix(geometry: UpaGeometry, azimuths, elevations) -> np.ndarray:
    """Stack of steering vectors as columns, shape (rows*cols, n_angles)."""
    az = np.atleast_1d(np.asarray(azimuths, dtype=float))
    el = np.atleast_1d(np.asarray(elevations, dtype=float))
    u, w = _direction_cosines(az, el)
    k = 2.0 * np.pi * geometry.element_spacing
    m = np.arange(geometry.rows)[:, None, None]
    n = np.arange(geometry.cols)[None, :, None]
    phase = k * (m * u[None, None, :] + n * w[None, None, :])
    return np.exp(1j * phase).reshape(geometry.size, -1) / np.sqrt(geometry.size)


def _dirichlet(x, count: int):
    """sum_{m=0}^{count-1} exp(j m x), evaluated in closed form."""
    # reduce to (-pi, pi] first so the removable singularity sits only at 0
    xr = np.remainder(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    half = xr / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.sin(count * half) / np.sin(half)
    ratio = np.where(half == 0.0, float(count), ratio)
    return np.exp(1j * (count - 1) * half) * ratio


def equivalent_array_gain(geometry: UpaGeometry, target, actual) -> complex:
    """Beamforming gain of a beam steered to ``target`` seen from ``actual``.

    Equals ``sqrt(M N) * a(target)^H a(actual)``; the modulus peaks at
    ``sqrt(M N)`` when both directions coincide.
    """
    u0, w0 = _direction_cosines(*target)
    u1, w1 = _direction_cosines(*actual)
    k = 2.0 * np.pi * geometry.element_spacing
    value = (_dirichlet(k * (u1 - u0), geometry.rows)
             * _dirichlet(k * (w1 - w0), geometry.cols)
             / np.sqrt(geometry.size))
    return complex(value)


@dataclass(frozen=True)
class PathComponent:
    kind: str
    complex_gain: complex
    delay: float
    path_length: float
    aod_azimuth: float
    aod_elevation: float
    aoa_azimuth: float
    aoa_elevation: float
    cluster_id: int = 0
    antenna_gain: float = 1.0

    def amplitude(self, f, absorption: AbsorptionModel):
        """Complex ray gain at frequency ``f`` (antenna gain included)."""
        f = np.asarray(f, dtype=float)
        loss = np.sqrt(path_gain(f, self.path_length, absorption))
        return (self.antenna_gain * self.complex_gain * loss
                * np.exp(-2j * np.pi * f * self.delay))


@dataclass(frozen=True)
class ChannelRealization:
    """K channel matrices plus the rays that generated them.

    ``per_subcarrier`` has shape (K, N_U, N_BS). The BS is ``n_rf`` subarrays
    stacked along the row axis, so columns ``n*S:(n+1)*S`` belong to chain n.
    """

    per_subcarrier: np.ndarray
    paths: tuple = ()
    center_frequencies: np.ndarray = field(default_factory=lambda: np.zeros(0))
    distance: float = 1.0
    n_rf: int = 1

    def __post_init__(self):
        h = np.asarray(self.per_subcarrier)
        if h.ndim != 3 or h.shape[0] < 1:
            raise ValueError("per_subcarrier must have shape (K, N_U, N_BS) with K >= 1")
        if h.shape[2] % self.n_rf:
            raise ValueError("N_BS must be a multiple of n_rf")
        h.setflags(write=False)

    @property
    def n_subcarriers(self) -> int:
        return self.per_subcarrier.shape[0]

    @property
    def n_ue(self) -> int:
        return self.per_subcarrier.shape[1]

    @property
    def n_bs(self) -> int:
        return self.per_subcarrier.shape[2]

    @property
    def subarray_size(self) -> int:
        return self.n_bs // self.n_rf

    def subarray(self, n: int) -> np.ndarray:
        """H_n[k] for all k, shape (K, N_U, S)."""
        s = self.subarray_size
        return self.per_subcarrier[:, :, n * s:(n + 1) * s]

    def with_matrices(self, matrices) -> "ChannelRealization":
        return ChannelRealization(np.array(matrices, dtype=complex), self.paths,
                                  self.center_frequencies, self.distance, self.n_rf)


def bs_geometry(cfg: SystemConfig) -> UpaGeometry:
    return UpaGeometry(cfg.n_rf * cfg.m_t, cfg.n_t, cfg.element_spacing)


def ue_geometry(cfg: SystemConfig) -> UpaGeometry:
    return UpaGeometry(cfg.m_r, cfg.n_r, cfg.element_spacing)


def subarray_geometry(cfg: SystemConfig) -> UpaGeometry:
    return UpaGeometry(cfg.m_t, cfg.n_t, cfg.element_spacing)


def _wrap_azimuth(theta):
    return (np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi


def _gmm_shift(rng: np.random.Generator, cfg: SystemConfig, size):
    sigma = np.deg2rad(np.where(rng.random(size) < cfg.gmm_weight1,
                                cfg.gmm_sigma1_deg, cfg.gmm_sigma2_deg))
    return rng.standard_normal(size) * sigma


def _unit_direction(az, el):
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def _inside_cone(az, el, az0, el0, beamwidth_deg) -> bool:
    cosang = float(np.clip(_unit_direction(az, el) @ _unit_direction(az0, el0), -1.0, 1.0))
    return np.degrees(np.arccos(cosang)) <= beamwidth_deg / 2.0 + 1e-12


def generate_paths(cfg: SystemConfig, rng: np.random.Generator) -> list[PathComponent]:
    """Draw one LOS ray and ``n_clusters * rays_per_cluster`` NLOS rays.

    NLOS rays travel ``d (1 + u)`` with ``u ~ U[excess_length_min,
    excess_length_max]``, are scaled by the reflection coefficient and get a
    uniform phase. Their timing offset relative to the LOS arrival is drawn
    uniformly inside the cyclic prefix, ``[0, (Q - 2) T_s]``.
    """
    d = cfg.distance_m
    los_delay = d / SPEED_OF_LIGHT
    g_lin = np.sqrt(db_to_linear(cfg.antenna_gain_tx_dbi) * db_to_linear(cfg.antenna_gain_rx_dbi))

    los_aod = (rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2))
    los_aoa = (rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2))
    paths = [PathComponent("LOS", 1.0 + 0j, los_delay, d, los_aod[0], los_aod[1],
                           los_aoa[0], los_aoa[1], 0, float(g_lin))]

    max_excess = max(cfg.cp_length - 2, 0) * cfg.sampling_time_s
    for i in range(cfg.n_clusters):
        mean_aod = (rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2))
        mean_aoa = (rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2))
        for _ in range(cfg.rays_per_cluster):
            shifts = _gmm_shift(rng, cfg, 4)
            aod_az = float(_wrap_azimuth(mean_aod[0] + shifts[0]))
            aod_el = float(np.clip(mean_aod[1] + shifts[1], -np.pi / 2, np.pi / 2))
            aoa_az = float(_wrap_azimuth(mean_aoa[0] + shifts[2]))
            aoa_el = float(np.clip(mean_aoa[1] + shifts[3], -np.pi / 2, np.pi / 2))
            excess = rng.uniform(cfg.excess_length_min, cfg.excess_length_max)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            offset = rng.uniform(0.0, max_excess)
            gain = g_lin
            if cfg.beamwidth_gate and not (
                    _inside_cone(aod_az, aod_el, *los_aod, cfg.beamwidth_deg)
                    and _inside_cone(aoa_az, aoa_el, *los_aoa, cfg.beamwidth_deg)):
                gain = 0.0
            paths.append(PathComponent(
                "NLOS", cfg.reflection_coefficient * np.exp(1j * phase),
                los_delay + offset, d * (1.0 + excess),
                aod_az, aod_el, aoa_az, aoa_el, i + 1, float(gain)))
    return paths


def raised_cosine(t, symbol_time: float, rolloff: float = 1.0, span: float | None = None):
    """Raised-cosine pulse, optionally truncated to ``|t| <= span * T / 2``."""
    x = np.asarray(t, dtype=float) / symbol_time
    p = np.sinc(x)
    if rolloff > 0:
        denom = 1.0 - (2.0 * rolloff * x) ** 2
        singular = np.isclose(np.abs(x), 1.0 / (2.0 * rolloff), rtol=0, atol=1e-12)
        with np.errstate(divide="ignore", invalid="ignore"):
            shaped = p * np.cos(np.pi * rolloff * x) / denom
        limit = np.pi / 4.0 * np.sinc(1.0 / (2.0 * rolloff))
        p = np.where(singular, limit, shaped)
    if span is not None:
        p = np.where(np.abs(x) <= span / 2.0, p, 0.0)
    return p


def default_pulse(cfg: SystemConfig) -> Callable:
    def pulse(t):
        return raised_cosine(t, cfg.sampling_time_s, cfg.rolloff, span=cfg.cp_length)
    return pulse


def pulse_spectrum(k, tau, cfg: SystemConfig, pulse: Callable | None = None):
    """P_r(k, tau) = sum_{q=1}^{Q} p_r(q T_s - tau) exp(-j 2 pi k q / K)."""
    pulse = pulse or default_pulse(cfg)
    q = np.arange(1, cfg.cp_length + 1)
    k_arr = np.asarray(k, dtype=float)
    samples = pulse(q * cfg.sampling_time_s - tau)
    phases = np.exp(-2j * np.pi * np.multiply.outer(k_arr, q) / cfg.n_subcarriers)
    return phases @ samples


def sync_delay(path: PathComponent, los_delay: float, cfg: SystemConfig) -> float:
    """Delay as seen by the receiver sampler: LOS lands on tap q = 1."""
    return path.delay - los_delay + cfg.sampling_time_s


def realize_channel(cfg: SystemConfig, rng: np.random.Generator,
                    absorption: AbsorptionModel | None = None,
                    paths: Sequence[PathComponent] | None = None) -> ChannelRealization:
    absorption = absorption or absorption_for(cfg)
    if paths is None:
        paths = generate_paths(cfg, rng)
    freqs = cfg.center_frequencies
    k_idx = np.arange(1, cfg.n_subcarriers + 1)
    geo_t, geo_r = bs_geometry(cfg), ue_geometry(cfg)
    los_delay = paths[0].delay

    at = steering_matrix(geo_t, [p.aod_azimuth for p in paths], [p.aod_elevation for p in paths])
    ar = steering_matrix(geo_r, [p.aoa_azimuth for p in paths], [p.aoa_elevation for p in paths])
    # coeff[k, p] = alpha_p(f_k) g_p P_r(k, tau_p)
    coeff = np.empty((cfg.n_subcarriers, len(paths)), dtype=complex)
    for j, p in enumerate(paths):
        coeff[:, j] = p.amplitude(freqs, absorption) * pulse_spectrum(
            k_idx, sync_delay(p, los_delay, cfg), cfg)
    h = np.einsum("kp,up,bp->kub", coeff, ar, at.conj())
    return ChannelRealization(h, tuple(paths), freqs, cfg.distance_m, cfg.n_rf)


def reconstruct_channel(cfg: SystemConfig, realization: ChannelRealization,
                        absorption: AbsorptionModel | None = None) -> np.ndarray:
    """Re-sum the per-ray outer products one subcarrier and one ray at a time."""
    absorption = absorption or absorption_for(cfg)
    geo_t, geo_r = bs_geometry(cfg), ue_geometry(cfg)
    los_delay = realization.paths[0].delay
    out = np.zeros_like(realization.per_subcarrier)
    for k in range(1, cfg.n_subcarriers + 1):
        f_k = realization.center_frequencies[k - 1]
        for p in realization.paths:
            a_r = steering_vector(geo_r, p.aoa_azimuth, p.aoa_elevation)
            a_t = steering_vector(geo_t, p.aod_azimuth, p.aod_elevation)
            tau = sync_delay(p, los_delay, cfg)
            taps = sum(default_pulse(cfg)(q * cfg.sampling_time_s - tau)
                       * np.exp(-2j * np.pi * k * q / cfg.n_subcarriers)
                       for q in range(1, cfg.cp_length + 1))
            out[k - 1] += p.amplitude(f_k, absorption) * taps * np.outer(a_r, a_t.conj())
    return out
