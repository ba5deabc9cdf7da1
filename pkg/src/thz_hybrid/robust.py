"""Probabilistically robust hybrid beamforming under imperfect CSI.

The interference-outage constraint Pr{Z_k >= T_k} <= p_k is tightened with
Markov's inequality into a linear constraint on M = f f^H. The resulting
program (linear objective, one linear constraint, PSD cone) has a rank-1
optimum given by a generalized eigenvector, so it is solved in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .beamformer import HybridBeamformer, block_diagonal, normalize_power
from .config import SystemConfig, dbm_to_watt, realization_rng
from .eigen import dominant_phase_vector, shared_combiner
from .multicarrier import IbiSequence, SchemeResult, ibi_coefficients, sinr_per_subcarrier


@dataclass(frozen=True)
class ImperfectCsi:
    estimated: np.ndarray  # (K, N_U, N_BS)
    nmse: float
    true_ref: object = None

    @property
    def realized_nmse(self) -> float:
        if self.true_ref is None:
            raise ValueError("no ground-truth channel attached")
        h = self.true_ref.per_subcarrier
        return float(np.sum(np.abs(h - self.estimated) ** 2) / np.sum(np.abs(h) ** 2))

    def as_channel(self):
        """The estimate wrapped like the true realization (same geometry metadata)."""
        return self.true_ref.with_matrices(self.estimated)


def inject_estimation_error(channel, nmse: float, rng: np.random.Generator) -> ImperfectCsi:
    """H_e[k] = H[k] + E[k], Gaussian E rescaled so the realized NMSE is exact."""
    if not 0 <= nmse < 1:
        raise ValueError("NMSE must lie in [0, 1)")
    h = channel.per_subcarrier
    if nmse == 0:
        return ImperfectCsi(np.array(h), 0.0, channel)
    e = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    target = nmse * np.sum(np.abs(h) ** 2)
    e *= np.sqrt(target / np.sum(np.abs(e) ** 2))
    return ImperfectCsi(h + e, float(nmse), channel)


def extended_channel(matrices: np.ndarray, k: int, ibi: IbiSequence,
                     half_width: int | None = None) -> np.ndarray:
    """Row-stack S_{l-k} H[l] over l != k (0-based k); optional window |l-k| <= half_width."""
    h = np.asarray(getattr(matrices, "estimated", matrices))
    K, n_u, n_bs = h.shape
    lam = [l for l in range(K) if l != k and (half_width is None or abs(l - k) <= half_width)]
    if not lam:
        return np.zeros((0, n_bs), dtype=complex)
    lam = np.array(lam)
    return (ibi[lam - k][:, None, None] * h[lam]).reshape(-1, n_bs)


def markov_budget(threshold: float, probability: float, nmse: float) -> float:
    """p T / (1 - sqrt(eps))."""
    if not threshold > 0:
        raise ValueError("interference threshold must be positive")
    if not 0 < probability < 1:
        raise ValueError("outage probability must lie in (0, 1)")
    if not 0 <= nmse < 1:
        raise ValueError("NMSE must lie in [0, 1)")
    return probability * threshold / (1.0 - np.sqrt(nmse))


@dataclass(frozen=True)
class RobustProblem:
    signal_matrix: np.ndarray
    interference_matrix: np.ndarray
    budget: float

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        for name in ("signal_matrix", "interference_matrix"):
            m = getattr(self, name)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.allclose(m, m.conj().T, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise ValueError(f"{name} must be Hermitian")

    def objective(self, M) -> float:
        return float(np.real(np.trace(self.signal_matrix @ M)))

    def interference(self, M) -> float:
        return float(np.real(np.trace(self.interference_matrix @ M)))


def subcarrier_power(cfg: SystemConfig) -> float:
    """Transmit power per subcarrier P_s / K in watts."""
    return float(dbm_to_watt(cfg.p_s_dbm)) / cfg.n_subcarriers


def build_problem(matrices: np.ndarray, k: int, ibi: IbiSequence, cfg: SystemConfig,
                  nmse: float | None = None) -> RobustProblem:
    """Problem for subcarrier k (0-based) with Z_k = (P_s/K) ||H~_e[k] f||^2 in watts."""
    h = np.asarray(getattr(matrices, "estimated", matrices))
    half = None if cfg.robust_full_window else 1
    ext = extended_channel(h, k, ibi, half)
    p_sub = subcarrier_power(cfg)
    a = p_sub * (h[k].conj().T @ h[k])
    b = p_sub * (ext.conj().T @ ext)
    budget = markov_budget(cfg.interference_threshold, cfg.outage_probability,
                           cfg.nmse if nmse is None else nmse)
    return RobustProblem(0.5 * (a + a.conj().T), 0.5 * (b + b.conj().T), budget)


def _top_eigvec(m: np.ndarray) -> np.ndarray:
    _, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return vecs[:, -1]


def _power_limited(problem: RobustProblem, power: float) -> np.ndarray:
    """max u^H A u s.t. ||u||^2 <= power, u^H B u <= budget (returns u, rank-1 M = u u^H).

    Dual: u is the top eigenvector of A - eta B with eta >= 0 found by bisection.
    """
    a, b, budget = problem.signal_matrix, problem.interference_matrix, problem.budget
    def leak(eta):
        u = _top_eigvec(a - eta * b)
        return u, float(np.real(u.conj() @ b @ u)) * power
    u, z = leak(0.0)
    if z <= budget:
        return np.sqrt(power) * u
    scale = max(np.linalg.norm(a, 2), 1e-300) / max(np.linalg.norm(b, 2), 1e-300)
    lo, hi = 0.0, scale
    u_hi, z_hi = leak(hi)
    while z_hi > budget and hi < scale * 1e30:
        lo, hi = hi, hi * 10.0
        u_hi, z_hi = leak(hi)
    if z_hi > budget:
        # no unit-power direction meets the budget: fall back to the scaled closed form
        return _generalized_solution(problem)
    for _ in range(200):
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        u_mid, z_mid = leak(mid)
        if z_mid > budget:
            lo = mid
        else:
            hi, u_hi = mid, u_mid
        if hi - lo <= 1e-12 * hi:
            break
    return np.sqrt(power) * u_hi


def _generalized_solution(problem: RobustProblem) -> np.ndarray:
    a, b, budget = problem.signal_matrix, problem.interference_matrix, problem.budget
    dim = a.shape[0]
    delta = 1e-10 * float(np.real(np.trace(b))) / dim
    if not delta > 0:
        delta = 1e-300
    _, vecs = scipy.linalg.eigh(a, b + delta * np.eye(dim))
    u = vecs[:, -1]
    # floor the leakage so a direction in null(B) stays finite and feasible
    leak = max(float(np.real(u.conj() @ b @ u)), delta * float(np.real(u.conj() @ u)))
    return u * np.sqrt(budget / leak)


def solve_psd_program(problem: RobustProblem, power: float | None = None) -> np.ndarray:
    """argmax tr{A M} s.t. tr{B M} <= budget, M PSD (closed form, rank 1).

    M = budget / (u^H B u) u u^H with u the top generalized eigenvector of
    (A, B + delta I), delta = 1e-10 tr(B)/dim. The leakage u^H B u is floored
    at delta ||u||^2 so M stays finite and feasible when u lies in null(B). With ``power`` given the
    transmit-power constraint tr{M} <= power is added and u becomes the top
    eigenvector of A - eta B for the smallest feasible eta >= 0.
    A zero signal matrix gives M = 0; a zero interference matrix makes the
    budget vacuous and M is the top eigenvector of A at unit (or ``power``) trace.
    """
    a, b = problem.signal_matrix, problem.interference_matrix
    dim = a.shape[0]
    if not np.any(a):
        warnings.warn("signal matrix is zero; returning M = 0", RuntimeWarning, stacklevel=2)
        return np.zeros((dim, dim), dtype=complex)
    if not np.any(b):
        u = _top_eigvec(a) * np.sqrt(1.0 if power is None else power)
        return np.outer(u, u.conj())
    u = _generalized_solution(problem) if power is None else _power_limited(problem, power)
    return np.outer(u, u.conj())


def randomize_and_select(M: np.ndarray, problem: RobustProblem, n_candidates: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Gaussian randomization f_i = U L^{1/2} v_i with the top eigenvector as candidate 0.

    Every candidate is scaled to the signal level tr{A M} and pulled back onto
    the budget if it violates it. Among candidates that keep the full signal
    level, the smallest norm wins; if none does, the strongest signal wins.
    """
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    a, b, budget = problem.signal_matrix, problem.interference_matrix, problem.budget
    vals, vecs = np.linalg.eigh(0.5 * (M + M.conj().T))
    vals = np.clip(vals, 0.0, None)
    root = vecs * np.sqrt(vals)
    dim = M.shape[0]
    cands = [root[:, -1]]
    if n_candidates > 1:
        z = (rng.standard_normal((dim, n_candidates - 1))
             + 1j * rng.standard_normal((dim, n_candidates - 1))) / np.sqrt(2.0)
        cands.extend((root @ z).T)
    target = problem.objective(M)
    best_full, best_any = None, None
    for f in cands:
        sig = float(np.real(f.conj() @ a @ f))
        if sig > 0 and target > 0:
            f = f * np.sqrt(target / sig)
        leak = float(np.real(f.conj() @ b @ f))
        full = True
        if leak > budget * (1 + 1e-9):
            f = f * np.sqrt(budget / leak)
            full = False
        norm = float(np.linalg.norm(f))
        sig = float(np.real(f.conj() @ a @ f))
        if full and (best_full is None or norm < best_full[0]):
            best_full = (norm, f)
        if best_any is None or sig > best_any[0]:
            best_any = (sig, f)
    return (best_full or best_any)[1]


def recover_hybrid(f_hybrid: np.ndarray, n_rf: int):
    """Split full-dimensional precoders into a common analog W and per-subcarrier f_BB.

    ``f_hybrid`` is (N_BS,) or (K, N_BS). Each subarray beam is the phase
    projection of the dominant eigenvector of sum_k f_n[k] f_n[k]^H (for one
    subcarrier: the phases of f_n itself); f_BB[k] = W^H f[k] is the least-squares
    fit for orthonormal W, then power-normalized. Returns (w, f_bb).
    """
    f = np.atleast_2d(np.asarray(f_hybrid, dtype=complex))
    K, n_bs = f.shape
    if n_bs % n_rf:
        raise ValueError("N_BS must be a multiple of N_RF")
    s = n_bs // n_rf
    blocks = f.reshape(K, n_rf, s)
    w = np.stack([dominant_phase_vector(blocks[:, n].T @ blocks[:, n].conj())
                  for n in range(n_rf)])
    W = block_diagonal(w)
    f_bb = normalize_power(W, np.linalg.lstsq(W, f.T, rcond=None)[0].T)
    return w, f_bb


def design_robust_precoders(matrices: np.ndarray, ibi: IbiSequence, cfg: SystemConfig,
                            rng_seed: tuple = (0,), power: float | None = 1.0) -> np.ndarray:
    """Per-subcarrier robust full-dimensional precoders, shape (K, N_BS), before power normalization."""
    h = np.asarray(getattr(matrices, "estimated", matrices))
    out = np.empty((h.shape[0], h.shape[2]), dtype=complex)
    for k in range(h.shape[0]):
        problem = build_problem(h, k, ibi, cfg)
        M = solve_psd_program(problem, power=power)
        rng = realization_rng(cfg.master_seed, *rng_seed, k)
        out[k] = randomize_and_select(M, problem, cfg.n_candidates, rng)
    return out


def run_robust_scheme(csi: ImperfectCsi, cfg: SystemConfig, ibi: IbiSequence | None = None,
                      realization_id: int = 0, power: float | None = 1.0):
    """Robust design on H_e, hybrid recovery, SINR on the true channel."""
    if csi.true_ref is None:
        raise ValueError("robust evaluation needs the true channel")
    ibi = ibi or ibi_coefficients(cfg.n_subcarriers, cfg.epsilon_cfo)
    estimate = csi.as_channel()
    f = design_robust_precoders(csi.estimated, ibi, cfg, (realization_id, 7), power)
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    f_unit = np.divide(f, norms, out=np.zeros_like(f), where=norms > 0)
    w, f_bb = recover_hybrid(f_unit, csi.true_ref.n_rf)
    v = shared_combiner(estimate)
    bf = HybridBeamformer(v, w, f_bb)
    sinr = sinr_per_subcarrier(csi.true_ref, bf, ibi, cfg.psi)
    return bf, SchemeResult.from_sinr(sinr, cfg.bandwidth_hz, "robust", realization_id)
