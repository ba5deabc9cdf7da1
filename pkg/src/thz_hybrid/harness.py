"""Baselines, Monte Carlo sweeps and CSV / plot-script emission."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .beamformer import HybridBeamformer, block_diagonal, normalize_power
from .channel import absorption_for, realize_channel
from .codebook import codebooks_for, effective_channel, run_codebook_scheme
from .config import SCHEME_IDS, SystemConfig, SweepSpec, realization_rng
from .eigen import run_eigen_scheme, shared_combiner
from .multicarrier import IbiSequence, SchemeResult, ibi_coefficients, sinr_per_subcarrier
from .robust import inject_estimation_error, run_robust_scheme

CSV_HEADER = ("scheme", "variable", "value", "realization", "avg_rate_bps", "mean_sinr_db")

# sub-stream tags under realization_rng(master_seed, index, tag)
ERROR_STREAM = 1


def fully_digital_baseline(channel, cfg: SystemConfig, realization_id: int = 0) -> SchemeResult:
    """Dominant singular pair per subcarrier, no IBI: gamma_k = sigma_max(H[k])^2 / psi."""
    sigma = np.linalg.svd(channel.per_subcarrier, compute_uv=False)[:, 0]
    return SchemeResult.from_sinr(sigma ** 2 / cfg.psi, cfg.bandwidth_hz, "fully_digital",
                                  realization_id)


def matched_filter(h_eff: np.ndarray) -> np.ndarray:
    return h_eff.conj()


def existing_hybrid_baseline(channel, cfg: SystemConfig, ibi: IbiSequence | None = None,
                             v: np.ndarray | None = None, codebooks=None,
                             realization_id: int = 0):
    """Exhaustive joint codebook search without normalization, matched-filter digital stage.

    For every receive codeword each chain keeps its best transmit codeword
    under sum_k |v^H H_n[k] a_t|^2; the receive codeword with the largest
    total wins. A given ``v`` fixes the receive side.
    """
    ibi = ibi or ibi_coefficients(cfg.n_subcarriers, cfg.epsilon_cfo)
    cb_v, cb_w = codebooks or codebooks_for(cfg)
    h = channel.per_subcarrier
    s = channel.subarray_size
    candidates = cb_v.vectors.T if v is None else v[None, :]
    rows = np.einsum("cu,kub->ckb", candidates.conj(), h)  # (n_v, K, N_BS)
    best_total, best = -np.inf, None
    for c in range(candidates.shape[0]):
        objective = np.stack([
            np.sum(np.abs(rows[c][:, n * s:(n + 1) * s] @ cb_w.vectors) ** 2, axis=0)
            for n in range(channel.n_rf)])
        idx = np.argmax(objective, axis=1)
        total = float(np.sum(objective[np.arange(channel.n_rf), idx]))
        if total > best_total:
            best_total, best = total, (c, idx)
    c, idx = best
    v_sel = candidates[c].copy()
    w = cb_w.vectors[:, idx].T.copy()
    W = block_diagonal(w)
    f_bb = normalize_power(W, matched_filter(effective_channel(channel, v_sel, W)))
    bf = HybridBeamformer(v_sel, w, f_bb)
    sinr = sinr_per_subcarrier(channel, bf, ibi, cfg.psi)
    return bf, SchemeResult.from_sinr(sinr, cfg.bandwidth_hz, "existing_hybrid", realization_id)


def no_elimination_variant(channel, cfg: SystemConfig, ibi: IbiSequence | None = None,
                           realization_id: int = 0):
    """Eigen analog and compensation stages with IBI treated as noise (matched filter)."""
    return run_eigen_scheme(channel, cfg, ibi, digital="mf", realization_id=realization_id,
                            scheme_id="eigen_no_elimination")


@dataclass
class SchemeContext:
    """Per-configuration objects shared by all schemes and realizations."""

    cfg: SystemConfig
    ibi: IbiSequence
    absorption: object
    codebooks: tuple

    @classmethod
    def build(cls, cfg: SystemConfig) -> "SchemeContext":
        return cls(cfg, ibi_coefficients(cfg.n_subcarriers, cfg.epsilon_cfo),
                   absorption_for(cfg), codebooks_for(cfg))

    def channel(self, realization_id: int):
        return realize_channel(self.cfg, realization_rng(self.cfg.master_seed, realization_id),
                               self.absorption)

    def csi(self, channel, realization_id: int):
        rng = realization_rng(self.cfg.master_seed, realization_id, ERROR_STREAM)
        return inject_estimation_error(channel, self.cfg.nmse, rng)


def run_scheme(scheme_id: str, channel, ctx: SchemeContext, realization_id: int = 0):
    """Run one scheme on one realization; returns (HybridBeamformer | None, SchemeResult)."""
    cfg, ibi = ctx.cfg, ctx.ibi
    if scheme_id == "fully_digital":
        return None, fully_digital_baseline(channel, cfg, realization_id)
    if scheme_id == "eigen":
        return run_eigen_scheme(channel, cfg, ibi, realization_id=realization_id)
    v_shared = shared_combiner(channel) if cfg.shared_combiner else None
    if scheme_id == "codebook":
        return run_codebook_scheme(channel, cfg, ibi, v=v_shared, codebooks=ctx.codebooks,
                                   absorption=ctx.absorption, realization_id=realization_id)
    if scheme_id == "existing_hybrid":
        return existing_hybrid_baseline(channel, cfg, ibi, v=v_shared, codebooks=ctx.codebooks,
                                        realization_id=realization_id)
    if scheme_id == "eigen_no_elimination":
        return no_elimination_variant(channel, cfg, ibi, realization_id)
    if scheme_id == "robust":
        return run_robust_scheme(ctx.csi(channel, realization_id), cfg, ibi, realization_id)
    if scheme_id == "non_robust":
        csi = ctx.csi(channel, realization_id)
        bf, _ = run_eigen_scheme(csi.as_channel(), cfg, ibi)
        sinr = sinr_per_subcarrier(channel, bf, ibi, cfg.psi)
        return bf, SchemeResult.from_sinr(sinr, cfg.bandwidth_hz, "non_robust", realization_id)
    raise ValueError(f"unknown scheme id {scheme_id!r}; expected one of {SCHEME_IDS}")


@dataclass(frozen=True, order=True)
class ResultRow:
    scheme: str
    variable: str
    value: float
    realization: int
    avg_rate_bps: float
    mean_sinr_db: float


def apply_sweep_value(cfg: SystemConfig, variable: str, value: float) -> SystemConfig:
    """Config for one sweep point. N_RF changes keep the BS array size fixed."""
    if variable == "P_s":
        return cfg.replace(p_s_dbm=float(value))
    if variable == "d":
        return cfg.replace(distance_m=float(value))
    if variable == "nmse":
        return cfg.replace(nmse=float(value))
    if variable == "N_RF":
        n_rf = int(value)
        if n_rf != value or n_rf < 1:
            raise ValueError(f"N_RF must be a positive integer, got {value}")
        rows = cfg.n_rf * cfg.m_t
        if rows % n_rf:
            raise ValueError(f"N_RF={n_rf} does not divide the {rows} BS antenna rows")
        return cfg.replace(n_rf=n_rf, m_t=rows // n_rf)
    raise ValueError(f"unknown sweep variable {variable!r}")


def _run_point(args):
    cfg, variable, value, schemes, realization_ids = args
    ctx = SchemeContext.build(cfg)
    rows = []
    for r in realization_ids:
        channel = ctx.channel(r)
        for scheme in schemes:
            _, res = run_scheme(scheme, channel, ctx, r)
            rows.append(ResultRow(scheme, variable, float(value), int(r),
                                  float(res.avg_rate), float(res.mean_sinr_db)))
    return rows


def run_sweep(spec: SweepSpec, cfg: SystemConfig, workers: int = 1) -> list[ResultRow]:
    """One row per (value, scheme, realization); channels are paired across schemes."""
    jobs = []
    for value in spec.values:
        point = apply_sweep_value(cfg, spec.variable, value)
        ids = list(range(cfg.n_realizations))
        if workers > 1:
            chunks = [ids[i::workers] for i in range(workers)]
            jobs.extend((point, spec.variable, value, spec.schemes, c) for c in chunks if c)
        else:
            jobs.append((point, spec.variable, value, spec.schemes, ids))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_point, jobs))
    else:
        parts = [_run_point(j) for j in jobs]
    return sorted(row for part in parts for row in part)


def simulate(cfg: SystemConfig, schemes=None, workers: int = 1) -> list[ResultRow]:
    """All requested schemes at the configured operating point."""
    spec = SweepSpec("P_s", [cfg.p_s_dbm], list(schemes or SCHEME_IDS))
    return run_sweep(spec, cfg, workers)


def _fmt(x) -> str:
    return repr(float(x)) if not isinstance(x, (int, np.integer)) else str(int(x))


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(rows):
        writer.writerow([r.scheme, r.variable, _fmt(r.value), str(int(r.realization)),
                         _fmt(r.avg_rate_bps), _fmt(r.mean_sinr_db)])
    return buf.getvalue()


def parse_results(source) -> list[ResultRow]:
    """Read rows back from a CSV path or text."""
    text = Path(source).read_text() if isinstance(source, Path) else str(source)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    return [ResultRow(s, v, float(x), int(r), float(a), float(m))
            for s, v, x, r, a, m in reader]


PLOT_SCRIPT = '''"""Plot mean rate per scheme against the sweep variable.

Usage: python {script} [output.png]
Reads {csv_name} from this directory; needs matplotlib.
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rates = defaultdict(lambda: defaultdict(list))
variable = None
with open(here / "{csv_name}", newline="") as fh:
    for row in csv.DictReader(fh):
        variable = row["variable"]
        rates[row["scheme"]][float(row["value"])].append(float(row["avg_rate_bps"]))

labels = {{"P_s": "transmit power (dBm)", "d": "distance (m)", "N_RF": "RF chains",
          "nmse": "estimation NMSE"}}
fig, ax = plt.subplots(figsize=(6, 4))
for scheme in sorted(rates):
    xs = sorted(rates[scheme])
    ax.plot(xs, [sum(rates[scheme][x]) / len(rates[scheme][x]) / 1e9 for x in xs],
            marker="o", label=scheme)
ax.set_xlabel(labels.get(variable, variable))
ax.set_ylabel("mean rate (Gbit/s)")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
out = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "{png_name}"
fig.savefig(out, dpi=120)
'''


def plot_script_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + "_plot.py")


def emit_results(rows, path) -> tuple[Path, Path]:
    """Write the CSV and a companion matplotlib script; returns both paths."""
    rows = list(rows)
    if not rows:
        raise ValueError("no result rows to emit")
    if any(not r.scheme for r in rows):
        raise ValueError("result rows must name their scheme")
    path = Path(path)
    script = plot_script_path(path)
    text = format_csv(rows)
    body = PLOT_SCRIPT.format(script=script.name, csv_name=path.name,
                              png_name=path.stem + ".png")
    try:
        path.write_text(text, newline="")
        script.write_text(body)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path, script


def mean_rates(rows) -> dict:
    """{(scheme, value): mean avg_rate_bps}."""
    acc = {}
    for r in rows:
        acc.setdefault((r.scheme, r.value), []).append(r.avg_rate_bps)
    return {k: float(np.mean(v)) for k, v in acc.items()}
