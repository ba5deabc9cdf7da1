"""Acceptance checks shared by the ``validate`` subcommand and the test suite.

Each check returns a :class:`CheckResult`; none of them relax a tolerance
when a comparison fails.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamformer import block_diagonal, constant_modulus, normalize_power
from .channel import absorption_for, realize_channel
from .codebook import (codebooks_for, normalization_factor, rci_digital,
                       search_receive_beam, search_transmit_beams)
from .config import SystemConfig, SweepSpec, desk_config, realization_rng
from .eigen import common_basis_channels, compare_eigen_to_digital
from .harness import (SchemeContext, emit_results, mean_rates, run_scheme, run_sweep)
from .multicarrier import ibi_coefficients, sinr_from_gains, truncate_ibi
from .robust import (RobustProblem, build_problem, extended_channel, inject_estimation_error,
                     randomize_and_select, solve_psd_program, subcarrier_power)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number}. {self.name}: " + "; ".join(self.details)


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# 1 -------------------------------------------------------------------------
def check_ibi(seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    details, ok = [], True
    impulse = all(
        np.array_equal(ibi_coefficients(K, 0.0).coefficients,
                       np.where(np.arange(1 - K, K) == 0, 1.0 + 0j, 0j))
        for K in (1, 2, 16, 128))
    ok &= impulse
    details.append(f"eps=0 unit impulse {'exact' if impulse else 'NOT exact'}")
    worst = 0.0
    for _ in range(20):
        K = int(rng.integers(2, 257))
        ibi = ibi_coefficients(K, float(rng.uniform(-0.99, 0.99)))
        for k in range(1, K + 1):
            window = np.arange(1 - k, K - k + 1)
            worst = max(worst, abs(float(np.sum(ibi.power(window))) - 1.0))
    ok &= worst <= 1e-10
    details.append(f"max |window energy - 1| = {worst:.2e} (tol 1e-10)")
    tail = truncate_ibi(ibi_coefficients(128, 0.3)).discarded_energy
    ok &= tail < 0.05
    details.append(f"K=128 eps=0.3 energy beyond 3 taps = {tail:.4f} (need < 0.05)")
    return CheckResult(1, "IBI coefficients", bool(ok), details)


# 2 -------------------------------------------------------------------------
def random_subconnected_w(rng, n_rf: int, size: int) -> np.ndarray:
    return constant_modulus(_crandn(rng, n_rf, size))


def check_rci_optimality(seed: int = 2, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    K, n_rf, size = 8, 4, 4
    worst_grid, worst_eq14 = -np.inf, 0.0
    for _ in range(instances):
        h_eff = _crandn(rng, K, n_rf)
        ibi = ibi_coefficients(K, float(rng.uniform(-0.45, 0.45)))
        psi = float(10 ** rng.uniform(-2, 1))
        W = block_diagonal(random_subconnected_w(rng, n_rf, size))

        def sinr(f_raw):
            f = normalize_power(W, f_raw)
            return sinr_from_gains(h_eff @ f.T, ibi, psi, half_width=1)

        at_psi = sinr(rci_digital(h_eff, ibi, psi))
        grid = np.array([sinr(rci_digital(h_eff, ibi, psi, beta=b * psi))
                         for b in np.logspace(-6, 6, 50)])
        worst_grid = max(worst_grid, float(np.max(grid.max(axis=0) - at_psi)))
        r_hat = np.einsum("ki,kj->kij", h_eff.conj(), h_eff)
        # 3-tap restricted closed form
        closed = np.empty(K)
        for k in range(K):
            lam = [l for l in (k - 1, k + 1) if 0 <= l < K]
            acc = psi * np.eye(n_rf) + sum(ibi.power(l - k) * r_hat[l] for l in lam)
            closed[k] = np.real(np.trace(ibi.power(0) * r_hat[k] @ np.linalg.inv(acc)))
        worst_eq14 = max(worst_eq14, float(np.max(np.abs(at_psi - closed) / closed)))
    ok = worst_grid <= 1e-9 and worst_eq14 <= 1e-9
    return CheckResult(2, "RCI loading optimality", ok, [
        f"max(grid SINR - SINR at beta=psi) = {worst_grid:.2e} (tol 1e-9)",
        f"max relative gap to trace closed form = {worst_eq14:.2e} (tol 1e-9)"])


# 3 -------------------------------------------------------------------------
def check_eigen_equivalence(seed: int = 3, instances: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_low, worst_high = 0.0, -np.inf
    for _ in range(instances):
        K, n_rf = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        ibi = ibi_coefficients(K, float(rng.uniform(-0.5, 0.5)))
        psi = float(10 ** rng.uniform(-2, 0))
        low = common_basis_channels(rng, K, 8, 16, int(rng.integers(1, n_rf + 1)))
        hyb, fd = compare_eigen_to_digital(low, ibi, psi, n_rf)
        worst_low = max(worst_low, float(np.max(np.abs(hyb - fd) / fd)))
        high = common_basis_channels(rng, K, 8, 16, n_rf + int(rng.integers(1, 4)))
        hyb, fd = compare_eigen_to_digital(high, ibi, psi, n_rf)
        worst_high = max(worst_high, float(np.max((hyb - fd) / fd)))
    ok = worst_low < 1e-6 and worst_high <= 1e-12
    return CheckResult(3, "Statistical-eigen equivalence", ok, [
        f"rank <= N_RF max relative gap = {worst_low:.2e} (tol 1e-6)",
        f"rank > N_RF max (hybrid - digital)/digital = {worst_high:.2e} (must be <= 0)"])


# 4 -------------------------------------------------------------------------
def brute_force_search(channel, codebook_v, codebook_w, norm):
    """Loop-by-loop re-evaluation of the normalized codebook objectives."""
    h = channel.per_subcarrier
    K, s = h.shape[0], channel.subarray_size

    def pick(values):
        # lowest index within 1e-12 relative of the maximum
        top = max(values)
        return next(i for i, x in enumerate(values) if x >= top - 1e-12 * abs(top))

    rx = []
    for i in range(len(codebook_v)):
        a = codebook_v.vectors[:, i]
        val = 0.0
        for n in range(channel.n_rf):
            for k in range(K):
                row = a.conj() @ h[k][:, n * s:(n + 1) * s]
                val += float(np.real(row @ row.conj())) / norm[k]
        rx.append(val)
    best_v = pick(rx)
    v = codebook_v.vectors[:, best_v]
    chains = []
    for n in range(channel.n_rf):
        tx = [sum(abs(v.conj() @ h[k][:, n * s:(n + 1) * s] @ codebook_w.vectors[:, j]) ** 2
                  / norm[k] for k in range(K)) for j in range(len(codebook_w))]
        chains.append(pick(tx))
    return best_v, chains


def check_codebook_search(seed: int = 4, instances: int = 20) -> CheckResult:
    cfg = desk_config(master_seed=seed)
    absorption = absorption_for(cfg)
    cb_v, cb_w = codebooks_for(cfg)
    mismatches = 0
    for i in range(instances):
        ch = realize_channel(cfg, realization_rng(seed, i), absorption)
        norm = normalization_factor(ch.center_frequencies, ch.distance, absorption)
        idx_v, _, v = search_receive_beam(ch, cb_v, norm)
        idx_w, _ = search_transmit_beams(ch, v, cb_w, norm)
        ref_v, ref_w = brute_force_search(ch, cb_v, cb_w, norm)
        mismatches += int(idx_v != ref_v or list(idx_w) != ref_w)
    return CheckResult(4, "Codebook search oracle", mismatches == 0,
                       [f"{instances - mismatches}/{instances} instances index-identical"])


# 5 -------------------------------------------------------------------------
def grid_psd_optimum(problem: RobustProblem, n_angle: int = 1201, n_phase: int = 2401,
                     refine: int = 2) -> float:
    """Best rank-1 objective over x = (cos a, sin a e^{j phi}) with tr{B M} at the budget."""
    a_mat, b_mat, budget = problem.signal_matrix, problem.interference_matrix, problem.budget
    lo_a, hi_a, lo_p, hi_p = 0.0, np.pi / 2, 0.0, 2 * np.pi
    best = -np.inf
    for _ in range(refine + 1):
        ang = np.linspace(lo_a, hi_a, n_angle)
        ph = np.linspace(lo_p, hi_p, n_phase)
        x0 = np.cos(ang)[:, None] + 0j * ph[None, :]
        x1 = np.sin(ang)[:, None] * np.exp(1j * ph)[None, :]

        def quad(m):
            return np.real(m[0, 0] * np.abs(x0) ** 2 + m[1, 1] * np.abs(x1) ** 2
                           + 2 * np.real(m[0, 1] * x0.conj() * x1))
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.where(quad(b_mat) > 0, budget * quad(a_mat) / quad(b_mat), -np.inf)
        i, j = np.unravel_index(np.argmax(value), value.shape)
        best = max(best, float(value[i, j]))
        da, dp = (hi_a - lo_a) / (n_angle - 1), (hi_p - lo_p) / (n_phase - 1)
        lo_a, hi_a = max(0.0, ang[i] - 2 * da), min(np.pi / 2, ang[i] + 2 * da)
        lo_p, hi_p = ph[j] - 2 * dp, ph[j] + 2 * dp
        n_angle, n_phase = 201, 201
    return best


def random_psd(rng, n: int, rank: int | None = None) -> np.ndarray:
    g = _crandn(rng, n, rank or n)
    return g @ g.conj().T


def check_psd_program(seed: int = 5, instances: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_gap, worst_feas = 0.0, -np.inf
    for _ in range(instances):
        problem = RobustProblem(random_psd(rng, 2), random_psd(rng, 2),
                                float(10 ** rng.uniform(-2, 1)))
        M = solve_psd_program(problem)
        obj = problem.objective(M)
        ref = grid_psd_optimum(problem)
        worst_gap = max(worst_gap, abs(obj - ref) / abs(ref))
        worst_feas = max(worst_feas, problem.interference(M) / problem.budget - 1.0)
    ok = worst_gap <= 1e-4 and worst_feas <= 1e-9
    return CheckResult(5, "PSD program oracle", ok, [
        f"max relative objective gap to grid = {worst_gap:.2e} (tol 1e-4)",
        f"max tr(BM)/budget - 1 = {worst_feas:.2e} (must be <= 1e-9)"])


# 6 -------------------------------------------------------------------------
def interference_outage(cfg: SystemConfig, redraws: int = 1000, seed: int = 6,
                        subcarrier: int | None = None):
    """Monte Carlo of Z_k = (P_s/K)||H~[k] f||^2 on the true channel for robust f
    designed on independently perturbed estimates. Returns (Z samples, threshold)."""
    ibi = ibi_coefficients(cfg.n_subcarriers, cfg.epsilon_cfo)
    channel = realize_channel(cfg, realization_rng(seed, 0), absorption_for(cfg))
    k = cfg.n_subcarriers // 2 if subcarrier is None else subcarrier
    half = None if cfg.robust_full_window else 1
    b_true = extended_channel(channel.per_subcarrier, k, ibi, half)
    p_sub = subcarrier_power(cfg)
    z = np.empty(redraws)
    for r in range(redraws):
        csi = inject_estimation_error(channel, cfg.nmse, realization_rng(seed, r, 1))
        problem = build_problem(csi.estimated, k, ibi, cfg)
        M = solve_psd_program(problem, power=1.0)
        f = randomize_and_select(M, problem, cfg.n_candidates, realization_rng(seed, r, 2))
        z[r] = p_sub * float(np.linalg.norm(b_true @ f) ** 2)
    return z, cfg.interference_threshold


def check_outage(redraws: int = 1000, seed: int = 6) -> CheckResult:
    cfg = desk_config(nmse=0.002, interference_threshold=1e-8, outage_probability=0.05,
                      p_s_dbm=10.0)
    z, threshold = interference_outage(cfg, redraws, seed)
    p = cfg.outage_probability
    rate = float(np.mean(z >= threshold))
    limit = p + 3 * np.sqrt(p * (1 - p) / redraws)
    return CheckResult(6, "Interference outage probability", rate <= limit, [
        f"empirical Pr(Z >= T) = {rate:.4f} over {redraws} redraws (limit {limit:.4f})",
        f"mean Z / T = {float(np.mean(z)) / threshold:.3e}"])


# 7 -------------------------------------------------------------------------
HYBRID_ORDER = ("fully_digital", "eigen", "codebook", "existing_hybrid")


def check_orderings(n_realizations: int = 100, seed: int = 2024) -> CheckResult:
    cfg = desk_config(n_realizations=n_realizations, master_seed=seed, distance_m=5.0)
    details, ok = [], True

    rows = run_sweep(SweepSpec("P_s", [0.0, 10.0, 20.0],
                               list(HYBRID_ORDER) + ["eigen_no_elimination"]), cfg)
    m = mean_rates(rows)
    for ps in (0.0, 10.0, 20.0):
        chain = [m[(s, ps)] for s in HYBRID_ORDER]
        good = all(a >= b for a, b in zip(chain, chain[1:]))
        ok &= good
        details.append(f"P_s={ps:g} dBm FD>=eig>=cb>=ex {'ok' if good else 'VIOLATED'} "
                       f"({', '.join(f'{x / 1e9:.3f}' for x in chain)} Gb/s)")
    good = m[("eigen", 20.0)] > m[("eigen_no_elimination", 20.0)]
    ok &= good
    details.append(f"20 dBm RCI {m[('eigen', 20.0)] / 1e9:.4f} > no-elimination "
                   f"{m[('eigen_no_elimination', 20.0)] / 1e9:.4f} {'ok' if good else 'VIOLATED'}")

    rows = run_sweep(SweepSpec("P_s", [10.0], ["robust", "non_robust"]),
                     cfg.replace(nmse=0.002))
    rob = {r.realization: r.avg_rate_bps for r in rows if r.scheme == "robust"}
    non = {r.realization: r.avg_rate_bps for r in rows if r.scheme == "non_robust"}
    frac = float(np.mean([rob[i] >= non[i] for i in rob]))
    good = frac >= 0.7
    ok &= good
    details.append(f"robust >= non-robust on {frac:.2f} of realizations (need >= 0.70)")

    dists = [1.0, 2.0, 5.0, 10.0]
    m = mean_rates(run_sweep(SweepSpec("d", dists, list(HYBRID_ORDER)), cfg))
    bad = [s for s in HYBRID_ORDER
           if not all(m[(s, a)] > m[(s, b)] for a, b in zip(dists, dists[1:]))]
    ok &= not bad
    details.append("rate strictly decreasing in d " + ("ok" if not bad else f"VIOLATED for {bad}"))

    m = mean_rates(run_sweep(SweepSpec("N_RF", [2, 4], list(HYBRID_ORDER)), cfg))
    bad = [s for s in HYBRID_ORDER if not m[(s, 4.0)] >= m[(s, 2.0)]]
    ok &= not bad
    details.append("N_RF=4 >= N_RF=2 at fixed array " + ("ok" if not bad else f"VIOLATED for {bad}"))
    return CheckResult(7, "Rate orderings", bool(ok), details)


# 8 -------------------------------------------------------------------------
HYBRID_SCHEMES = ("eigen", "codebook", "existing_hybrid", "eigen_no_elimination",
                  "robust", "non_robust")


def check_structure(n_realizations: int = 5, seed: int = 8) -> CheckResult:
    cfg = desk_config(n_realizations=n_realizations, master_seed=seed)
    worst = {"v_modulus": 0.0, "w_modulus": 0.0, "power": 0.0}
    for ps in (0.0, 20.0):
        ctx = SchemeContext.build(cfg.replace(p_s_dbm=ps))
        for r in range(n_realizations):
            ch = ctx.channel(r)
            for scheme in HYBRID_SCHEMES:
                bf, _ = run_scheme(scheme, ch, ctx, r)
                for key, err in bf.invariant_errors().items():
                    worst[key] = max(worst[key], err)
    ok = all(e <= 1e-12 for e in worst.values())
    details = [f"max {k} error = {e:.1e}" for k, e in worst.items()]
    spec = SweepSpec("P_s", [10.0], ["fully_digital", "eigen", "codebook"])
    small = cfg.replace(n_realizations=3)
    with tempfile.TemporaryDirectory() as tmp:
        first, _ = emit_results(run_sweep(spec, small), Path(tmp) / "a.csv")
        second, _ = emit_results(run_sweep(spec, small), Path(tmp) / "b.csv")
        same = first.read_bytes() == second.read_bytes()
    ok &= same
    details.append("repeat sweep CSV " + ("byte-identical" if same else "DIFFERS"))
    return CheckResult(8, "Structural invariants", bool(ok), details)


CHECKS = (check_ibi, check_rci_optimality, check_eigen_equivalence, check_codebook_search,
          check_psd_program, check_outage, check_orderings, check_structure)


def run_all(n_realizations: int = 100, seed: int = 2024) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        if check is check_orderings:
            results.append(check(n_realizations=n_realizations, seed=seed))
        else:
            results.append(check())
    return results
