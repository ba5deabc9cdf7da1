"""CFO-induced inter-band interference, per-subcarrier SINR and average rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IbiSequence:
    """Leakage coefficients S_i for i = 1-K, ..., K-1 (stored at i + K - 1)."""

    coefficients: np.ndarray
    epsilon: float
    K: int

    def __getitem__(self, i):
        i = np.asarray(i)
        if np.any(np.abs(i) > self.K - 1):
            raise IndexError("IBI index outside 1-K..K-1")
        return self.coefficients[i + self.K - 1]

    @property
    def indices(self) -> np.ndarray:
        return np.arange(1 - self.K, self.K)

    def power(self, i):
        return np.abs(self[i]) ** 2


def ibi_coefficients(K: int, epsilon: float) -> IbiSequence:
    """S_i = sin(pi(i+e)) / (K sin(pi(i+e)/K)) * exp(j pi (1 - 1/K)(i+e))."""
    if K < 1:
        raise ValueError("need K >= 1 subcarriers")
    if not abs(epsilon) < 1:
        raise ValueError("CFO ratio must satisfy |epsilon| < 1")
    x = np.arange(1 - K, K) + float(epsilon)
    # sinc(x)/sinc(x/K) equals the kernel above and is exact at x = 0
    magnitude = np.sinc(x) / np.sinc(x / K)
    coeffs = magnitude * np.exp(1j * np.pi * (1.0 - 1.0 / K) * x)
    if epsilon == 0:
        # sin(pi i) is not exactly zero in floating point
        coeffs = np.where(x == 0, 1.0 + 0j, 0j)
    return IbiSequence(coeffs, float(epsilon), int(K))


@dataclass(frozen=True)
class TruncatedIbi:
    s_minus: complex
    s_zero: complex
    s_plus: complex
    discarded_energy: float

    @property
    def taps(self) -> np.ndarray:
        return np.array([self.s_minus, self.s_zero, self.s_plus])


def truncate_ibi(ibi: IbiSequence, anchor: int | None = None) -> TruncatedIbi:
    """Keep {S_-1, S_0, S_1}; report the energy left out of the K-window.

    The discarded energy is measured over the window seen by subcarrier
    ``anchor`` (1-based); by default the centre subcarrier.
    """
    if ibi.K < 3:
        raise ValueError("3-tap truncation needs K >= 3")
    k = (ibi.K + 1) // 2 if anchor is None else anchor
    window = np.arange(1 - k, ibi.K - k + 1)
    kept = float(np.sum(np.abs(ibi[np.array([-1, 0, 1])]) ** 2))
    total = float(np.sum(np.abs(ibi[window]) ** 2))
    return TruncatedIbi(ibi[-1], ibi[0], ibi[1], total - kept)


def window_weights(ibi: IbiSequence, half_width: int | None = None) -> np.ndarray:
    """|S_{lambda-k}|^2 as a (K, K) matrix indexed [lambda, k].

    ``half_width`` limits the interferers to |lambda - k| <= half_width
    (1 gives the 3-tap model); ``None`` keeps every subcarrier.
    """
    K = ibi.K
    diff = np.arange(K)[:, None] - np.arange(K)[None, :]
    weights = np.abs(ibi[diff]) ** 2
    if half_width is not None:
        weights = np.where(np.abs(diff) <= half_width, weights, 0.0)
    return weights


def cross_gains(h_eff_rows: np.ndarray, f_bb: np.ndarray) -> np.ndarray:
    """G[lambda, k] = h_row[lambda] . f_bb[k] for (K, N) rows and (K, N) precoders."""
    return h_eff_rows @ f_bb.T


def sinr_from_gains(gains: np.ndarray, ibi: IbiSequence, psi: float,
                    half_width: int | None = None) -> np.ndarray:
    """SINR per subcarrier from the cross-gain matrix G[lambda, k]."""
    if psi <= 0:
        raise ValueError("psi must be positive")
    K = gains.shape[0]
    if gains.shape != (K, K):
        raise ValueError("cross-gain matrix must be (K, K)")
    power = np.abs(gains) ** 2
    if K == 1:
        return np.abs(ibi_zero(ibi)) ** 2 * power[0] / psi
    weights = window_weights(ibi, half_width)
    signal = np.diag(weights) * np.diag(power)
    interference = np.sum(weights * power, axis=0) - signal
    return signal / (interference + psi)


def ibi_zero(ibi: IbiSequence | None) -> complex:
    return 1.0 if ibi is None else ibi[0]


def sinr_per_subcarrier(channel, bf, ibi: IbiSequence | None, psi: float,
                        half_width: int | None = None) -> np.ndarray:
    """gamma_k with IBI from every other subcarrier (or a window of them).

    ``channel`` is a ChannelRealization or a (K, N_U, N_BS) array; ``bf`` a
    HybridBeamformer. ``ibi=None`` means no CFO (S_0 = 1, no leakage).
    """
    if psi <= 0:
        raise ValueError("psi must be positive")
    h = np.asarray(getattr(channel, "per_subcarrier", channel))
    K = h.shape[0]
    W = bf.W
    if h.shape[1] != bf.v.shape[0] or h.shape[2] != W.shape[0]:
        raise ValueError(f"beamformer dimensions {bf.v.shape[0]}x{W.shape[0]} do not "
                         f"match channel {h.shape[1]}x{h.shape[2]}")
    if bf.f_bb.shape[0] != K:
        raise ValueError("need one digital beamformer per subcarrier")
    rows = np.einsum("u,kub->kb", bf.v.conj(), h) @ W
    gains = cross_gains(rows, bf.f_bb)
    if ibi is None:
        return np.abs(np.diag(gains)) ** 2 / psi
    if ibi.K != K:
        raise ValueError("IBI sequence length does not match the channel")
    return sinr_from_gains(gains, ibi, psi, half_width)


def average_rate(sinr, bandwidth: float) -> float:
    """(1/K) sum_k B log2(1 + gamma_k)."""
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR values must be non-negative")
    return float(bandwidth * np.mean(np.log2(1.0 + sinr)))


@dataclass(frozen=True)
class SchemeResult:
    per_subcarrier_sinr: np.ndarray
    avg_rate: float
    scheme_id: str
    realization_id: int = 0
    bandwidth: float = 1e9

    @classmethod
    def from_sinr(cls, sinr, bandwidth, scheme_id, realization_id=0):
        sinr = np.asarray(sinr, dtype=float)
        return cls(sinr, average_rate(sinr, bandwidth), scheme_id, realization_id, bandwidth)

    @property
    def spectral_efficiency(self) -> float:
        return self.avg_rate / self.bandwidth

    @property
    def mean_sinr_db(self) -> float:
        mean = float(np.mean(self.per_subcarrier_sinr))
        return float("-inf") if mean <= 0 else 10.0 * np.log10(mean)
