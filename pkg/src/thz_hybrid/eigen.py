"""Statistical-eigen hybrid beamforming with two digital stages.

Analog beams are phase projections of the dominant eigenvectors of the
subcarrier-averaged covariances. A per-subcarrier compensation matrix
orthonormalizes the analog output, and an RCI stage removes the IBI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamformer import HybridBeamformer, block_diagonal, constant_modulus, normalize_power
from .codebook import combined_channel
from .config import SystemConfig
from .multicarrier import IbiSequence, SchemeResult, ibi_coefficients, sinr_per_subcarrier


@dataclass(frozen=True)
class SubarrayCovariance:
    per_chain: np.ndarray  # (N_RF, S, S)
    receive: np.ndarray    # (N_U, N_U)


def average_covariances(channel) -> SubarrayCovariance:
    """(1/K) sum_k H_n^H[k] H_n[k] per chain and (1/K) sum_k H[k] H^H[k]."""
    h = channel.per_subcarrier
    K, n_u, n_bs = h.shape
    s = channel.subarray_size
    # stack subcarriers so each average is a single matrix product
    stacked = h.reshape(K * n_u, channel.n_rf, s).transpose(1, 0, 2)  # (N_RF, K N_U, S)
    per_chain = stacked.conj().transpose(0, 2, 1) @ stacked / K
    wide = h.transpose(1, 0, 2).reshape(n_u, K * n_bs)
    receive = wide @ wide.conj().T / K
    # exact Hermitian symmetry
    per_chain = 0.5 * (per_chain + per_chain.conj().transpose(0, 2, 1))
    receive = 0.5 * (receive + receive.conj().T)
    return SubarrayCovariance(per_chain, receive)


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    """Rotate so the first nonzero entry is real positive."""
    nz = np.flatnonzero(np.abs(u) > 1e-12)
    if nz.size == 0:
        return u
    return u * np.exp(-1j * np.angle(u[nz[0]]))


def dominant_phase_vector(cov: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Constant-modulus vector with the phases of the top eigenvector of ``cov``.

    A repeated top eigenvalue is resolved by trying each eigenvector of the
    top eigenspace and keeping the projection with the largest quadratic
    form (first index on ties). A zero matrix gives the all-phase-0 vector.
    """
    n = cov.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    top = vals[-1]
    if not top > 0:
        return np.ones(n, dtype=complex) / np.sqrt(n)
    group = np.flatnonzero(vals >= top - rtol * abs(top))[::-1]
    best, best_val = None, -np.inf
    for idx in group:
        w = constant_modulus(_canonical_phase(vecs[:, idx]))
        val = float(np.real(w.conj() @ cov @ w))
        if val > best_val + 1e-15 * abs(top):
            best, best_val = w, val
    return best


def eigen_analog(cov: SubarrayCovariance):
    """Returns (v, w) with w of shape (N_RF, S)."""
    v = dominant_phase_vector(cov.receive)
    w = np.stack([dominant_phase_vector(r) for r in cov.per_chain])
    return v, w


def inverse_sqrt(gram: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Hermitian inverse square root; raises if the matrix is rank-deficient."""
    vals, vecs = np.linalg.eigh(gram)
    lmax = vals[-1]
    if not lmax > 0 or vals[0] <= floor * lmax:
        raise ValueError("analog beamformer is rank-deficient (W^H W is singular)")
    return (vecs / np.sqrt(vals)) @ vecs.conj().T


def compensation_digital(channel, W: np.ndarray) -> np.ndarray:
    """F_c[k] = (W^H W)^{-1/2} V[k][:, :N_RF] from the SVD of H[k] W (W^H W)^{-1/2}.

    The result has shape (K, N_RF, N_RF) and W F_c[k] has orthonormal columns.
    """
    h = np.asarray(getattr(channel, "per_subcarrier", channel))
    n_rf = W.shape[1]
    root = inverse_sqrt(W.conj().T @ W)
    _, _, vh = np.linalg.svd(h @ (W @ root), full_matrices=True)
    return root @ vh.conj().transpose(0, 2, 1)[:, :, :n_rf]


def eigen_rci(rows: np.ndarray, comp: np.ndarray, ibi: IbiSequence, psi: float,
              half_width: int | None = 1) -> np.ndarray:
    """Inner RCI stage; returns f_i[k] of shape (K, N_RF).

    ``rows[l] = v^H H[l] W``. The digital vector of subcarrier k reaches
    subcarrier l through ``rows[l] F_c[k]``, so the combined channel of k is
    built with the compensation matrix of k on every tap.
    """
    K, n = rows.shape[0], comp.shape[2]
    out = np.empty((K, n), dtype=complex)
    for k in range(K):
        hc, row = combined_channel(rows @ comp[k], ibi, k, half_width)
        gram = hc.conj().T @ hc + psi * np.eye(n)
        out[k] = np.linalg.solve(gram, hc.conj().T)[:, row]
    return out


def run_eigen_scheme(channel, cfg: SystemConfig, ibi: IbiSequence | None = None,
                     v: np.ndarray | None = None, digital: str = "rci",
                     realization_id: int = 0, scheme_id: str = "eigen"):
    """Eigen analog design, compensation, then RCI ('rci') or matched filter ('mf')."""
    if digital not in ("rci", "mf"):
        raise ValueError("digital stage must be 'rci' or 'mf'")
    ibi = ibi or ibi_coefficients(cfg.n_subcarriers, cfg.epsilon_cfo)
    cov = average_covariances(channel)
    v_eig, w = eigen_analog(cov)
    v = v_eig if v is None else v
    W = block_diagonal(w)
    comp = compensation_digital(channel, W)
    rows = np.einsum("u,kub->kb", v.conj(), channel.per_subcarrier) @ W
    if digital == "rci":
        f_i = eigen_rci(rows, comp, ibi, cfg.psi)
    else:
        f_i = np.einsum("kb,kbn->kn", rows, comp).conj()
    f_bb = normalize_power(W, np.einsum("kmn,kn->km", comp, f_i))
    bf = HybridBeamformer(v, w, f_bb, comp)
    sinr = sinr_per_subcarrier(channel, bf, ibi, cfg.psi)
    return bf, SchemeResult.from_sinr(sinr, cfg.bandwidth_hz, scheme_id, realization_id)


def shared_combiner(channel) -> np.ndarray:
    """Eigen-designed receive combiner, shared by the hybrid baselines."""
    return dominant_phase_vector(average_covariances(channel).receive)


def trace_sinr(r_hat: np.ndarray, ibi: IbiSequence, psi: float) -> np.ndarray:
    """tr{|S_0|^2 R[k] (sum_{l != k} |S_{l-k}|^2 R[l] + psi I)^-1} for each k."""
    K, n = r_hat.shape[0], r_hat.shape[1]
    s0 = np.abs(ibi[0]) ** 2
    out = np.empty(K)
    for k in range(K):
        acc = psi * np.eye(n, dtype=complex)
        for lam in range(K):
            if lam != k:
                acc = acc + ibi.power(lam - k) * r_hat[lam]
        out[k] = float(np.real(np.trace(s0 * r_hat[k] @ np.linalg.inv(acc))))
    return out


def common_basis_channels(rng: np.random.Generator, K: int, n_ue: int, n_bs: int,
                          rank: int, same_spectrum: bool = False) -> np.ndarray:
    """H[k] = U diag(s[k]) V^H with U, V shared across subcarriers."""
    def unitary(n):
        q, r = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        return q * (np.diag(r) / np.abs(np.diag(r)))
    u, vmat = unitary(n_ue)[:, :rank], unitary(n_bs)[:, :rank]
    if same_spectrum:
        s = np.tile(rng.uniform(0.5, 2.0, rank), (K, 1))
    else:
        s = rng.uniform(0.5, 2.0, (K, rank))
    return np.einsum("ur,kr,br->kub", u, s, vmat.conj())


def compare_eigen_to_digital(channels: np.ndarray, ibi: IbiSequence, psi: float, n_rf: int):
    """Trace-form SINRs of the unconstrained statistical-eigen hybrid design
    and of fully digital beamforming on the same channels.

    The hybrid analog stage is the top ``n_rf`` eigenvectors of the averaged
    covariance (no constant-modulus projection); returns (hybrid, digital).
    """
    h = np.asarray(channels)
    r = np.einsum("kub,kuc->kbc", h.conj(), h)
    r_bar = r.mean(axis=0)
    _, vecs = np.linalg.eigh(0.5 * (r_bar + r_bar.conj().T))
    w_u = vecs[:, ::-1][:, :n_rf]
    r_hb = np.einsum("bi,kbc,cj->kij", w_u.conj(), r, w_u)
    return trace_sinr(r_hb, ibi, psi), trace_sinr(r, ibi, psi)
