"""Codebook-based two-stage wideband hybrid beamforming.

Analog stage: normalized beamsteering codebook search (receive beam first,
then one transmit beam per RF chain). Digital stage: regularized channel
inversion over the 3-tap combined effective channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamformer import HybridBeamformer, block_diagonal, normalize_power
from .channel import (AbsorptionModel, ChannelRealization, UpaGeometry, absorption_for,
                      path_gain, steering_matrix, subarray_geometry, ue_geometry)
from .config import SystemConfig
from .multicarrier import IbiSequence, SchemeResult, ibi_coefficients, sinr_per_subcarrier


@dataclass(frozen=True)
class BeamsteeringCodebook:
    azimuths: np.ndarray
    elevations: np.ndarray
    vectors: np.ndarray  # (elements, entries)
    bits_azimuth: int
    bits_elevation: int

    def __len__(self):
        return self.vectors.shape[1]

    def entry(self, index: int):
        return self.azimuths[index], self.elevations[index], self.vectors[:, index]


def build_codebook(geometry: UpaGeometry, bits_az: int, bits_el: int) -> BeamsteeringCodebook:
    """Uniform grid of 2**bits_az azimuths in [-pi, pi) by 2**bits_el elevations in [-pi/2, pi/2)."""
    if bits_az < 1 or bits_el < 1:
        raise ValueError("codebook needs at least one bit per dimension")
    n_az, n_el = 2 ** bits_az, 2 ** bits_el
    az = -np.pi + 2.0 * np.pi * np.arange(n_az) / n_az
    el = -np.pi / 2 + np.pi * np.arange(n_el) / n_el
    az_grid, el_grid = (g.ravel() for g in np.meshgrid(az, el, indexing="ij"))
    vectors = steering_matrix(geometry, az_grid, el_grid)
    return BeamsteeringCodebook(az_grid, el_grid, vectors, bits_az, bits_el)


def normalization_factor(f, d, absorption: AbsorptionModel):
    """Per-subcarrier LOS gain used to equalize the search objective."""
    return path_gain(f, d, absorption)


def first_argmax(values, rtol: float = 1e-12, axis: int = -1):
    """Lowest index whose value is within ``rtol`` (relative) of the maximum.

    Codewords that coincide (every azimuth at zero elevation, for example)
    give objectives that differ only by rounding; they count as ties.
    """
    values = np.asarray(values, dtype=float)
    top = np.max(values, axis=axis, keepdims=True)
    near = values >= top - rtol * np.abs(top)
    return np.argmax(near, axis=axis)


def receive_objective(channel: ChannelRealization, codebook: BeamsteeringCodebook,
                      norm: np.ndarray) -> np.ndarray:
    """sum_n sum_k ||a_r^H H_n[k]||^2 / F_k for every receive codeword."""
    h = channel.per_subcarrier
    proj = codebook.vectors.conj().T @ h  # (K, entries, N_BS)
    power = np.sum(proj.real ** 2 + proj.imag ** 2, axis=2)
    return np.sum(power / norm[:, None], axis=0)


def search_receive_beam(channel: ChannelRealization, codebook: BeamsteeringCodebook,
                        norm: np.ndarray):
    """Return (index, (azimuth, elevation), v); ties go to the lowest index."""
    if len(codebook) == 0:
        raise ValueError("empty receive codebook")
    objective = receive_objective(channel, codebook, norm)
    idx = int(first_argmax(objective))
    az, el, vec = codebook.entry(idx)
    return idx, (float(az), float(el)), vec.copy()


def transmit_objective(channel: ChannelRealization, v: np.ndarray,
                       codebook: BeamsteeringCodebook, norm: np.ndarray) -> np.ndarray:
    """(N_RF, entries) array of sum_k |v^H H_n[k] a_t|^2 / F_k."""
    rows = np.einsum("u,kub->kb", v.conj(), channel.per_subcarrier)
    s = channel.subarray_size
    out = np.empty((channel.n_rf, len(codebook)))
    for n in range(channel.n_rf):
        g = rows[:, n * s:(n + 1) * s] @ codebook.vectors
        out[n] = np.sum(np.abs(g) ** 2 / norm[:, None], axis=0)
    return out


def search_transmit_beams(channel: ChannelRealization, v: np.ndarray,
                          codebook: BeamsteeringCodebook, norm: np.ndarray):
    """Independent per-chain codeword choice; returns (indices, w) with w of shape (N_RF, S)."""
    if len(codebook) == 0:
        raise ValueError("empty transmit codebook")
    objective = transmit_objective(channel, v, codebook, norm)
    indices = first_argmax(objective, axis=1)
    return indices, codebook.vectors[:, indices].T.copy()


def effective_channel(channel, v: np.ndarray, W: np.ndarray) -> np.ndarray:
    """h_hat[k] = v^H H[k] W as rows of a (K, N_RF) array."""
    h = np.asarray(getattr(channel, "per_subcarrier", channel))
    if h.shape[1] != v.shape[0] or h.shape[2] != W.shape[0]:
        raise ValueError("analog beamformer dimensions do not match the channel")
    return np.einsum("u,kub->kb", v.conj(), h) @ W


def combined_channel(effective: np.ndarray, ibi: IbiSequence, k: int,
                     half_width: int | None = 1):
    """Rows S_{l-k} h_hat[l] for the subcarriers l in the window around k (0-based).

    Returns the stacked matrix and the row holding subcarrier k itself.
    Edge subcarriers simply lose the missing neighbours.
    """
    K = effective.shape[0]
    if half_width is None:
        lam = np.arange(K)
    else:
        lam = np.arange(max(0, k - half_width), min(K, k + half_width + 1))
    rows = ibi[lam - k][:, None] * effective[lam]
    return rows, int(np.flatnonzero(lam == k)[0])


def rci_digital(effective: np.ndarray, ibi: IbiSequence, psi: float,
                half_width: int | None = 1, beta: float | None = None) -> np.ndarray:
    """Regularized channel inversion, one column per subcarrier (not power-normalized).

    f[k] = [(Hc^H Hc + beta I)^-1 Hc^H]_{:,k}; ``beta`` defaults to psi, the
    optimum when W^H W = I and the power constraint forces ||f|| = 1.
    """
    if psi <= 0:
        raise ValueError("psi must be positive")
    beta = psi if beta is None else beta
    K, n = effective.shape
    out = np.empty((K, n), dtype=complex)
    for k in range(K):
        hc, row = combined_channel(effective, ibi, k, half_width)
        gram = hc.conj().T @ hc + beta * np.eye(n)
        out[k] = np.linalg.solve(gram, hc.conj().T)[:, row]
    return out


def codebooks_for(cfg: SystemConfig):
    return (build_codebook(ue_geometry(cfg), cfg.codebook_bits_az, cfg.codebook_bits_el),
            build_codebook(subarray_geometry(cfg), cfg.codebook_bits_az, cfg.codebook_bits_el))


def run_codebook_scheme(channel: ChannelRealization, cfg: SystemConfig,
                        ibi: IbiSequence | None = None, v: np.ndarray | None = None,
                        codebooks=None, absorption: AbsorptionModel | None = None,
                        realization_id: int = 0):
    """Normalized codebook search for the analog stage followed by 3-tap RCI digital beamforming.

    Pass ``v`` to replace the searched receive beam with a shared combiner.
    """
    ibi = ibi or ibi_coefficients(cfg.n_subcarriers, cfg.epsilon_cfo)
    cb_v, cb_w = codebooks or codebooks_for(cfg)
    absorption = absorption or absorption_for(cfg)
    norm = normalization_factor(channel.center_frequencies, channel.distance, absorption)
    if v is None:
        _, _, v = search_receive_beam(channel, cb_v, norm)
    _, w = search_transmit_beams(channel, v, cb_w, norm)
    W = block_diagonal(w)
    h_eff = effective_channel(channel, v, W)
    f_bb = normalize_power(W, rci_digital(h_eff, ibi, cfg.psi))
    bf = HybridBeamformer(v, w, f_bb)
    sinr = sinr_per_subcarrier(channel, bf, ibi, cfg.psi)
    return bf, SchemeResult.from_sinr(sinr, cfg.bandwidth_hz, "codebook", realization_id)
