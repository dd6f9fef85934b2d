"""Experiment orchestration: seeded ensembles, fixed-order reduction, CSV output."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .emulation import (
    alpha_beta_exponents,
    cost_model,
    grover_select_diagonal,
    paired_phase_estimation,
    phase_estimation,
    sample_scale_register,
    TASKS,
)
from .multifractal import (
    PartitionTable,
    _ols,
    ensemble_log_average,
    fit_tau,
    partition_from_coeffs,
    partition_tables,
    resolve_window,
)
from .numerics import QuantumState, unitary_eig
from .states import (
    CascadeParams,
    IsrmParams,
    apply_isrm,
    build_isrm,
    cascade_state,
    cascade_tau_analytic,
    isrm_step_array,
)
from .wavelet import fwt_array, fwt_forward

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    params: tuple[tuple[str, Any], ...]
    statistic: str
    value: float
    stderr: Optional[float] = None
    count: int = 1

    @property
    def key(self) -> tuple:
        return (self.experiment, self.params, self.statistic)

    def param(self, name: str, default=None):
        return dict(self.params).get(name, default)


# -- ensembles -------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSpec:
    """Which vectors one ensemble draws and which partition functions it needs."""

    kind: str  # "eigvec" or "iterate"
    n: int
    n1: int
    n2: int
    seed: int
    t: int
    per_realization: int
    qs: tuple[float, ...]
    filter: str
    normalizations: tuple[str, ...]
    include_approx: bool = False

    @property
    def N(self) -> int:
        return 2**self.n

    @property
    def stream_seed(self) -> int:
        # distinct phase streams per (n, n2) sharing one user seed
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.n, self.n2, self.n1))
        return int(ss.generate_state(1, dtype=np.uint64)[0])


def ensemble_vectors(spec: EnsembleSpec, k: int, take: int) -> np.ndarray:
    """The vectors (rows) contributed by realization ``k``."""
    params = IsrmParams.random(spec.n, spec.n1, spec.n2, spec.stream_seed, k)
    N = spec.N
    per = spec.per_realization or N
    pick_rng = np.random.default_rng(np.random.SeedSequence(spec.stream_seed, spawn_key=(k, 1)))
    idx = np.arange(N) if per >= N else np.sort(pick_rng.choice(N, size=per, replace=False))
    idx = idx[:take]
    if spec.kind == "eigvec":
        system = unitary_eig(build_isrm(params))
        return system.vectors[:, idx].T.copy()
    if spec.kind == "iterate":
        columns = np.eye(N, dtype=np.complex128)[idx]
        return isrm_step_array(columns, params, spec.t)
    raise ValueError(f"unknown ensemble kind {spec.kind!r}")


def _realization_job(spec: EnsembleSpec, job: tuple[int, int]):
    k, take = job
    try:
        vecs = ensemble_vectors(spec, k, take)
        out = {}
        for norm in spec.normalizations:
            source = np.abs(vecs) ** 2 if norm == "density" else vecs
            coeffs = fwt_array(source, spec.filter)
            out[norm] = partition_from_coeffs(coeffs, spec.qs, norm, spec.include_approx)
        out["moment4"] = np.sum(np.abs(vecs) ** 4, axis=1)
        out["wavelet4"] = np.sum(np.abs(fwt_array(vecs, spec.filter)) ** 4, axis=1)
        return k, out, None
    except Exception as exc:  # reported per realization, aborts only above threshold
        return k, None, f"{type(exc).__name__}: {exc}"


def _jobs(spec: EnsembleSpec, ensemble_size: int) -> list[tuple[int, int]]:
    per = spec.per_realization or spec.N
    count = math.ceil(ensemble_size / per)
    return [(k, min(per, ensemble_size - k * per)) for k in range(count)]


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class EnsembleResult:
    tables: dict[str, PartitionTable]
    moment4: np.ndarray
    wavelet4: np.ndarray
    count: int
    failures: list[tuple[int, str]]


def run_ensemble(spec: EnsembleSpec, ensemble_size: int, workers: int = 1, average: str = "log") -> EnsembleResult:
    """Run all realizations and reduce in realization-index order."""
    jobs = _jobs(spec, ensemble_size)
    results = _map(partial(_realization_job, spec), jobs, workers)
    failures = [(k, msg) for k, out, msg in results if out is None]
    for k, msg in failures:
        log.warning("n=%d n2=%d realization %d failed: %s", spec.n, spec.n2, k, msg)
    if len(failures) > MAX_FAILURE_FRACTION * len(jobs):
        raise ExperimentError(f"{len(failures)} of {len(jobs)} realizations failed (n={spec.n}, n2={spec.n2})")
    good = [out for _, out, _ in results if out is not None]
    qs = np.asarray(spec.qs, dtype=float)
    levels = np.arange(spec.n)
    tables = {}
    for norm in spec.normalizations:
        per_vector = [
            PartitionTable(qs, levels, vals[i], norm, excl[i], 1, spec.filter)
            for vals, excl in (out[norm] for out in good)
            for i in range(vals.shape[0])
        ]
        tables[norm] = ensemble_log_average(per_vector, average)
    moment4 = np.concatenate([out["moment4"] for out in good])
    wavelet4 = np.concatenate([out["wavelet4"] for out in good])
    return EnsembleResult(tables, moment4, wavelet4, moment4.size, failures)


# -- experiments -----------------------------------------------------------


def _tau_rows(exp, params, table, q, window, stat, count) -> list[ResultRow]:
    s = fit_tau(table, q, window)
    return [ResultRow(exp, params, stat, s.tau, s.stderr, count)]


def _qname(q: float) -> str:
    return f"{q:g}"


def _spec(cfg: ExperimentConfig, kind: str, n: int, n2: int, norms: tuple[str, ...]) -> EnsembleSpec:
    return EnsembleSpec(kind, n, cfg.n1, n2, cfg.seed, cfg.t, cfg.vectors_per_realization,
                        tuple(cfg.q), cfg.filter, norms, cfg.include_approx)


def _scale_profile(cfg, normalization) -> list[ResultRow]:
    exp = cfg.experiment
    n = cfg.n[0]
    rows = []
    for n2 in cfg.n2:
        res = run_ensemble(_spec(cfg, "eigvec", n, n2, (normalization,)), cfg.ensemble_size, cfg.workers, cfg.average)
        table = res.tables[normalization]
        logs = table.log2_values()
        for iq, q in enumerate(table.qs):
            for j in table.levels:
                p = (("n", n), ("n2", n2), ("q", float(q)), ("j", int(j)), ("log2_a", -int(j)))
                rows.append(ResultRow(exp, p, "mean_log2_Z", float(logs[iq, j]), None, res.count))
            p = (("n", n), ("n2", n2), ("q", float(q)))
            rows += _tau_rows(exp, p, table, q, cfg.fit_window, "tau", res.count)
    return rows


def _fig2(cfg):
    return _scale_profile(cfg, "density")


def _fig3(cfg):
    return _scale_profile(cfg, "amplitude")


def _fig4(cfg):
    rows = []
    for p1 in cfg.p1:
        for n in cfg.n:
            psi = cascade_state(CascadeParams(n, p1))
            table = partition_tables(psi.amplitudes, cfg.filter, cfg.q, "unnormalized", cfg.include_approx)[0]
            for q in cfg.q:
                p = (("p1", p1), ("n", n), ("q", q))
                rows += _tau_rows(cfg.experiment, p, table, q, cfg.fit_window, f"tauprime{_qname(q)}", 1)
    return rows


def _fig5(cfg):
    n = cfg.n[0]
    rows = []
    for n2 in cfg.n2:
        res = run_ensemble(_spec(cfg, "eigvec", n, n2, ("unnormalized",)), cfg.ensemble_size, cfg.workers, cfg.average)
        table = res.tables["unnormalized"]
        for q in cfg.q:
            p = (("n", n), ("n2", n2), ("q", q))
            rows += _tau_rows(cfg.experiment, p, table, q, cfg.fit_window, "tauprime", res.count)
    return rows


def _fig6(cfg):
    rows = []
    for p1 in cfg.p1:
        for n in cfg.n:
            psi = cascade_state(CascadeParams(n, p1))
            for norm in ("density", "amplitude"):
                table = partition_tables(psi.amplitudes, cfg.filter, cfg.q, norm, cfg.include_approx)[0]
                for q in cfg.q:
                    p = (("p1", p1), ("n", n), ("q", q))
                    rows += _tau_rows(cfg.experiment, p, table, q, cfg.fit_window, f"tau{_qname(q)}_{norm}", 1)
            for q in cfg.q:
                p = (("p1", p1), ("n", n), ("q", q))
                rows.append(ResultRow(cfg.experiment, p, f"tau{_qname(q)}_analytic", cascade_tau_analytic(q, p1), None, 1))
    return rows


def _tau_vs_n(cfg, kind):
    rows = []
    for n2 in cfg.n2:
        for n in cfg.n:
            res = run_ensemble(_spec(cfg, kind, n, n2, ("density", "amplitude")), cfg.ensemble_size,
                               cfg.workers, cfg.average)
            for norm in ("density", "amplitude"):
                for q in cfg.q:
                    p = (("n2", n2), ("n", n), ("q", q))
                    rows += _tau_rows(cfg.experiment, p, res.tables[norm], q, cfg.fit_window,
                                      f"tau{_qname(q)}_{norm}", res.count)
    return rows


def _fig7(cfg):
    return _tau_vs_n(cfg, "eigvec")


def _fig8(cfg):
    return _tau_vs_n(cfg, "iterate")


def _fig9(cfg):
    rows = []
    for n2 in cfg.n2:
        for n in cfg.n:
            res = run_ensemble(_spec(cfg, "eigvec", n, n2, ("unnormalized",)), cfg.ensemble_size,
                               cfg.workers, cfg.average)
            for q in cfg.q:
                p = (("n2", n2), ("n", n), ("q", q))
                rows += _tau_rows(cfg.experiment, p, res.tables["unnormalized"], q, cfg.fit_window,
                                  f"tauprime{_qname(q)}", res.count)
    return rows


def _slope(x, y):
    return _ols(np.asarray(x, float), np.asarray(y, float))


def _cost_rows(exp, source, alpha, beta, cfg) -> list[ResultRow]:
    rows = []
    for n in cfg.cost_n:
        for task in TASKS:
            # fitted alpha can overshoot [0, 1] slightly at small sizes; the bound is exact
            rep = cost_model(n, cfg.t, min(max(alpha, 0.0), 1.0), beta, task)
            p = source + (("cost_n", n), ("task", task))
            rows.append(ResultRow(exp, p, "quantum_count", rep.quantum_count))
            rows.append(ResultRow(exp, p, "classical_count", rep.classical_count))
            rows.append(ResultRow(exp, p, "log2_gain", rep.log2_gain))
    return rows


def _cost_table(cfg):
    exp = cfg.experiment
    rows = []
    for p1 in cfg.p1:
        states = [cascade_state(CascadeParams(n, p1)) for n in cfg.n]
        ab = alpha_beta_exponents(states, cfg.filter)
        src = (("source", "cascade"), ("p1", p1))
        rows.append(ResultRow(exp, src, "alpha", ab.alpha, ab.alpha_stderr, len(states)))
        rows.append(ResultRow(exp, src, "beta", ab.beta, ab.beta_stderr, len(states)))
        rows += _cost_rows(exp, src, ab.alpha, ab.beta, cfg)
    for n2 in cfg.n2:
        m4, w4, counts = [], [], []
        for n in cfg.n:
            spec = EnsembleSpec("eigvec", n, cfg.n1, n2, cfg.seed, cfg.t, cfg.vectors_per_realization,
                                (2.0,), cfg.filter, ())
            res = run_ensemble(spec, cfg.ensemble_size, cfg.workers, cfg.average)
            m4.append(np.mean(np.log2(res.moment4)))
            w4.append(np.mean(np.log2(res.wavelet4)))
            counts.append(res.count)
        sa, ea, _ = _slope(cfg.n, m4)
        sb, eb, _ = _slope(cfg.n, w4)
        src = (("source", "isrm_eigvec"), ("n2", n2))
        rows.append(ResultRow(exp, src, "alpha", -sa, ea, sum(counts)))
        rows.append(ResultRow(exp, src, "beta", -sb, eb, sum(counts)))
        rows += _cost_rows(exp, src, -sa, -sb, cfg)
    return rows


def _emulation_demo(cfg):
    exp = cfg.experiment
    rows = []
    n = cfg.n[0]

    def grover_rows(src, psi):
        sel, run = grover_select_diagonal(psi, threshold=cfg.success_threshold)
        target = psi.probabilities / np.sqrt(np.sum(psi.probabilities**2))
        return [
            ResultRow(exp, src, "grover_x", run.x),
            ResultRow(exp, src, "grover_iterations", float(run.iterations)),
            ResultRow(exp, src, "grover_peak_success", run.peak),
            ResultRow(exp, src, "grover_flagged", float(run.flagged)),
            ResultRow(exp, src, "postselect_max_error", float(np.max(np.abs(sel.amplitudes - target)))),
        ]

    for p1 in cfg.p1:
        psi = cascade_state(CascadeParams(n, p1))
        src = (("source", "cascade"), ("p1", p1), ("n", n))
        rows += grover_rows(src, psi)
        coeffs = fwt_forward(psi.amplitudes, cfg.filter)
        for moment in (2, 4):
            h = sample_scale_register(coeffs, moment, cfg.shots, cfg.seed)
            sigma = np.sqrt(h.probabilities * (1 - h.probabilities) / cfg.shots)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(sigma > 0, np.abs(h.frequencies - h.probabilities) / sigma, 0.0)
            rows.append(ResultRow(exp, src + (("moment", moment),), "sample_max_zscore", float(z.max()), None, cfg.shots))
    for n2 in cfg.n2:
        params = IsrmParams.random(n, cfg.n1, n2, cfg.seed, 0)
        src = (("source", "isrm_iterate"), ("n2", n2), ("n", n), ("t", cfg.t))
        rows += grover_rows(src, apply_isrm(QuantumState.basis(n, 0), params, cfg.t))
        system = unitary_eig(build_isrm(params))
        v = system.eigenvectors[0]
        theta = float(system.eigenphases[0])
        pe = phase_estimation(params, v, n)
        nearest = int(round(theta * 2**n / (2 * np.pi))) % 2**n
        src = (("source", "isrm_eigvec"), ("n2", n2), ("n", n), ("n_time", n))
        rows.append(ResultRow(exp, src, "pe_peak_bin", float(pe.peak_bin)))
        rows.append(ResultRow(exp, src, "pe_nearest_bin", float(nearest)))
        rows.append(ResultRow(exp, src, "pe_peak_probability", pe.peak_probability))
        paired = paired_phase_estimation(params, QuantumState.basis(n, 0), n)
        rows.append(ResultRow(exp, src, "paired_selection_probability", paired.selection_probability))
    return rows


RUNNERS: dict[str, Callable[[ExperimentConfig], list[ResultRow]]] = {
    "fig2_zdensity": _fig2,
    "fig3_zamplitude": _fig3,
    "fig4_tauprime_cascade": _fig4,
    "fig5_tauprime_vs_q": _fig5,
    "fig6_tau2_cascade": _fig6,
    "fig7_tau2_eigvecs": _fig7,
    "fig8_tau2_iterates": _fig8,
    "fig9_tauprime_vs_n2": _fig9,
    "cost_table": _cost_table,
    "emulation_demo": _emulation_demo,
}


# -- output ----------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def param_keys(rows: Iterable[ResultRow]) -> list[str]:
    keys: list[str] = []
    for r in rows:
        for k, _ in r.params:
            if k not in keys:
                keys.append(k)
    return keys


def csv_header(cfg: ExperimentConfig) -> str:
    lines = [f"# mfqwt {__version__}"]
    lines += [f"# {k} = {v}" for k, v in cfg.echo_items()]
    if cfg.experiment not in ("cost_table", "emulation_demo"):
        resolved = ";".join(f"n={n}:{a}..{b}" for n in cfg.n for a, b in [resolve_window(cfg.fit_window, n)])
        lines.append(f"# fit_window_levels = {resolved}")
    return "\n".join(lines) + "\n"


def csv_body(rows: Sequence[ResultRow]) -> str:
    keys = param_keys(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", *keys, "statistic", "value", "stderr", "count"])
    for r in rows:
        d = dict(r.params)
        w.writerow([r.experiment, *(_fmt(d.get(k)) for k in keys), r.statistic,
                    _fmt(r.value), _fmt(r.stderr), r.count])
    return buf.getvalue()


def write_csv(path, cfg: ExperimentConfig, rows: Sequence[ResultRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_header(cfg) + csv_body(rows))
    return path


def read_csv_body(path) -> str:
    """The CSV text with ``#`` header lines stripped."""
    return "".join(line for line in Path(path).read_text().splitlines(keepends=True) if not line.startswith("#"))


def run_experiment(cfg: ExperimentConfig, *, write: bool = True) -> list[ResultRow]:
    """Validate, run and (optionally) write the experiment CSV."""
    cfg.validate()
    log.info("running %s (seed=%d, workers=%d)", cfg.experiment, cfg.seed, cfg.workers)
    rows = RUNNERS[cfg.experiment](cfg)
    keys = [r.key for r in rows]
    if len(set(keys)) != len(keys):
        raise ExperimentError("duplicate result rows")
    if write:
        path = write_csv(cfg.output_path(), cfg, rows)
        log.info("wrote %d rows to %s", len(rows), path)
    return rows
