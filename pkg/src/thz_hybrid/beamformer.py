"""Sub-connected hybrid beamformer container and shared helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def block_diagonal(w: np.ndarray) -> np.ndarray:
    """W = diag{w_1, ..., w_N} for per-chain vectors stacked as rows of ``w``."""
    n_rf, size = w.shape
    W = np.zeros((n_rf * size, n_rf), dtype=complex)
    for n in range(n_rf):
        W[n * size:(n + 1) * size, n] = w[n]
    return W


def constant_modulus(x: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Phase-only projection with entries 1/sqrt(len); tiny entries get phase 0."""
    x = np.asarray(x, dtype=complex)
    phase = np.where(np.abs(x) > floor, np.angle(x), 0.0)
    return np.exp(1j * phase) / np.sqrt(x.shape[-1])


def normalize_power(W: np.ndarray, f_bb: np.ndarray) -> np.ndarray:
    """Scale every f_bb[k] so that ||W f_bb[k]|| = 1 (zero vectors stay zero)."""
    f_bb = np.asarray(f_bb, dtype=complex)
    norms = np.linalg.norm(f_bb @ W.T, axis=1)
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return f_bb * scale[:, None]


@dataclass(frozen=True)
class HybridBeamformer:
    """Receive combiner v, per-chain analog vectors w[n] and digital f_bb[k].

    ``f_bb_c`` holds the per-subcarrier compensation matrices when the
    digital stage is split in two; ``f_bb`` is always the full product.
    """

    v: np.ndarray
    w: np.ndarray
    f_bb: np.ndarray
    f_bb_c: np.ndarray | None = None

    @property
    def W(self) -> np.ndarray:
        return block_diagonal(self.w)

    @property
    def n_rf(self) -> int:
        return self.w.shape[0]

    def precoders(self) -> np.ndarray:
        """W f_bb[k] for every subcarrier, shape (K, N_BS)."""
        return self.f_bb @ self.W.T

    def invariant_errors(self) -> dict:
        size = self.w.shape[1]
        power = np.linalg.norm(self.precoders(), axis=1)
        return {
            "v_modulus": float(np.max(np.abs(np.abs(self.v) - 1 / np.sqrt(self.v.size)))),
            "w_modulus": float(np.max(np.abs(np.abs(self.w) - 1 / np.sqrt(size)))),
            "power": float(np.max(np.abs(power - 1.0))),
        }

    def check(self, tol: float = 1e-12) -> None:
        errors = self.invariant_errors()
        bad = {k: e for k, e in errors.items() if not e <= tol}
        if bad:
            raise ValueError(f"hybrid beamformer invariants violated: {bad}")
