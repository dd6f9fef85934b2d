"""Command-line entry point: ``mfqwt <subcommand> ...``.

Exit codes: 0 success, 1 computational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, apply_overrides, load_config
from .emulation import (
    TASKS,
    cost_model,
    grover_select_diagonal,
    phase_estimation,
    sample_scale_register,
    write_cost_csv,
)
from .multifractal import (
    InsufficientPointsError,
    ensemble_log_average,
    fit_tau,
    partition_tables,
)
from .numerics import QuantumState, unitary_eig
from .states import (
    CascadeParams,
    IsrmParams,
    apply_isrm,
    build_isrm,
    cascade_state,
    cascade_tau_analytic,
    load_states,
    read_state_csv,
    save_states,
    write_state_csv,
)
from .wavelet import FILTERS, fwt_forward

log = logging.getLogger("mfqwt")


class UsageError(Exception):
    pass


def _window(text: str) -> Optional[tuple[int, int]]:
    if text == "auto":
        return None
    try:
        a, b = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("window takes two integers 'j_min,j_max'") from None
    return a, b


def _make_states(args) -> list[QuantumState]:
    if args.input:
        path = Path(args.input)
        if path.suffix == ".csv":
            return [read_state_csv(path)]
        states, _ = load_states(path)
        return states
    if args.state == "cascade":
        return [cascade_state(CascadeParams(args.n, args.p1))]
    if args.state == "isrm-eig":
        vecs = []
        for k in range(args.realizations):
            system = unitary_eig(build_isrm(IsrmParams.random(args.n, args.n1, args.n2, args.seed, k)))
            vecs += system.eigenvectors
        return vecs
    if args.state == "isrm-iterate":
        params = IsrmParams.random(args.n, args.n1, args.n2, args.seed, 0)
        return [apply_isrm(QuantumState.basis(args.n, args.index), params, args.t)]
    raise UsageError(f"unknown state kind {args.state!r}")


def cmd_state(args) -> int:
    states = _make_states(args)
    out = Path(args.out)
    if out.suffix == ".csv":
        if len(states) != 1:
            raise UsageError("CSV output holds a single state; use .npz for ensembles")
        write_state_csv(out, states[0])
    else:
        out = save_states(out, states, kind=args.state, n=args.n)
    print(f"wrote {len(states)} state(s) of dimension {states[0].dim} to {out}")
    return 0


def cmd_analyze(args) -> int:
    states = _make_states(args)
    vectors = np.stack([s.amplitudes for s in states])
    n = states[0].n
    print(f"{len(states)} state(s), N = 2^{n}, filter {args.filter}, window {args.window or 'auto'}")
    for norm, label in (("density", "Z_|psi|^2"), ("amplitude", "Z_psi"), ("unnormalized", "sum|T|^2q")):
        table = ensemble_log_average(partition_tables(vectors, args.filter, args.q, norm))
        for q in args.q:
            s = fit_tau(table, q, args.window)
            name = "tau'" if norm == "unnormalized" else "tau"
            print(f"  {label:<10} {name}_{q:g} = {s.tau:.4f} +- {s.stderr:.4f}  (levels {s.fit_window[0]}..{s.fit_window[1]})")
    if args.state == "cascade" and not args.input:
        for q in args.q:
            print(f"  analytic   tau_{q:g} = {cascade_tau_analytic(q, args.p1):.4f}")
    return 0


def cmd_emulate(args) -> int:
    if args.demo == "grover":
        psi = _make_states(args)[0]
        sel, run = grover_select_diagonal(psi, args.max_iterations)
        target = psi.probabilities / np.sqrt(np.sum(psi.probabilities**2))
        print(f"x = {run.x:.6g}, iterations = {run.iterations}, peak success = {run.peak:.6f}"
              f"{'  [FLAGGED]' if run.flagged else ''}")
        print(f"post-selection max error = {np.max(np.abs(sel.amplitudes - target)):.3e}")
        for k, p in enumerate(run.success_probability):
            print(f"  k={k:4d}  P={p:.6f}")
        if args.out:
            run.to_csv(args.out)
        return 1 if run.flagged else 0
    if args.demo == "phase":
        params = IsrmParams.random(args.n, args.n1, args.n2, args.seed, 0)
        system = unitary_eig(build_isrm(params))
        k = args.index % len(system)
        res = phase_estimation(params, system.eigenvectors[k], args.n_time)
        theta = system.eigenphases[k]
        print(f"eigenphase {theta:.6f} -> grid position {theta * 2**args.n_time / (2 * np.pi):.3f}")
        print(f"peak bin {res.peak_bin} with probability {res.peak_probability:.6f}")
        if args.out:
            res.to_csv(args.out)
        return 0
    if args.demo == "sample":
        psi = _make_states(args)[0]
        h = sample_scale_register(fwt_forward(psi.amplitudes, args.filter), args.moment, args.shots, args.seed)
        for label, p, f in zip(h.labels, h.probabilities, h.frequencies):
            print(f"  {label:<8} exact {p:.6f}  sampled {f:.6f}")
        if args.out:
            h.to_csv(args.out)
        return 0
    raise UsageError(f"unknown demo {args.demo!r}")


def cmd_cost(args) -> int:
    rep = cost_model(args.n, args.t, args.alpha, args.beta, args.task)
    print(f"{rep.task}: N = 2^{rep.n}, {rep.formula}")
    print(f"quantum ~ {rep.quantum_count:.3g} vs classical ~ {rep.classical_count:.3g} "
          f"(gain 2^{rep.log2_gain:.3g})")
    if args.out:
        write_cost_csv(args.out, [rep])
    return 0


def cmd_experiment(args) -> int:
    from .harness import run_experiment

    overrides = dict(kv.split("=", 1) for kv in args.set)
    if args.config:
        cfg = load_config(args.config, overrides)
    elif args.name:
        cfg = apply_overrides(ExperimentConfig.defaults(args.name), overrides)
    else:
        raise UsageError("give --config FILE or --name EXPERIMENT")
    extra = {}
    if args.workers is not None:
        extra["workers"] = str(args.workers)
    if args.output:
        extra["output"] = args.output
    cfg = apply_overrides(cfg, extra).validate()
    rows = run_experiment(cfg)
    print(f"{cfg.experiment}: {len(rows)} rows -> {cfg.output_path()}")
    return 0


def selftest() -> list[tuple[str, bool, str]]:
    """Quick invariant suite; returns ``(name, passed, detail)`` per check."""
    from .emulation import rotation_success
    from .multifractal import moments_tau
    from .numerics import is_unitary
    from .wavelet import fwt_array, ifwt_array

    rng = np.random.default_rng(2024)
    results = []

    err = 0.0
    for name in FILTERS:
        x = rng.normal(size=1024) + 1j * rng.normal(size=1024)
        err = max(err, float(np.max(np.abs(ifwt_array(fwt_array(x, name), name) - x))))
    results.append(("fwt round-trip", err < 1e-12, f"max error {err:.2e}"))

    params = IsrmParams.random(6, 1, 3, seed=1)
    U = build_isrm(params)
    dev = float(np.max(np.abs(U @ U.conj().T - np.eye(U.shape[0]))))
    psi = QuantumState.normalized(rng.normal(size=64) + 1j * rng.normal(size=64))
    fast = float(np.max(np.abs(apply_isrm(psi, params).amplitudes - U @ psi.amplitudes)))
    results.append(("isrm unitarity", is_unitary(U), f"max |UU^+ - I| {dev:.2e}"))
    results.append(("isrm fast apply", fast < 1e-10, f"max error {fast:.2e}"))

    series = moments_tau([cascade_state(CascadeParams(n, 0.3)) for n in range(8, 13)], 2.0)
    dev = abs(series.tau - cascade_tau_analytic(2.0, 0.3))
    results.append(("cascade moments", dev < 1e-9, f"|tau_2 - analytic| {dev:.2e}"))

    _, run = grover_select_diagonal(cascade_state(CascadeParams(6, 0.3)))
    dev = max(abs(p - rotation_success(run.x, k)) for k, p in enumerate(run.success_probability))
    results.append(("grover rotation", dev < 1e-10 and not run.flagged, f"max trace deviation {dev:.2e}"))
    return results


def cmd_selftest(args) -> int:
    ok = True
    for name, passed, detail in selftest():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<18} {detail}")
    return 0 if ok else 1


def _add_state_args(p: argparse.ArgumentParser, default_state: str = "cascade") -> None:
    p.add_argument("--state", choices=("cascade", "isrm-eig", "isrm-iterate"), default=default_state)
    p.add_argument("--input", help="read states from .npz or .csv instead of generating")
    p.add_argument("--n", type=int, default=10, help="qubits (N = 2^n)")
    p.add_argument("--p1", type=float, default=0.3)
    p.add_argument("--n1", type=int, default=1)
    p.add_argument("--n2", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t", type=int, default=1000)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--realizations", type=int, default=1)
    p.add_argument("--filter", choices=sorted(FILTERS), default="daub4")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfqwt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mfqwt {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state", help="build and dump cascade or intermediate-map states")
    _add_state_args(p)
    p.add_argument("--out", required=True, help=".npz container or .csv (index,re,im)")
    p.set_defaults(func=cmd_state)

    p = sub.add_parser("analyze", help="partition functions and exponent fits")
    _add_state_args(p)
    p.add_argument("--q", type=float, nargs="+", default=[2.0])
    p.add_argument("--window", type=_window, default=None,
                   help="j_min,j_max (negative counts from n); default auto")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("emulate", help="Grover, phase-estimation and sampling demos")
    p.add_argument("demo", choices=("grover", "phase", "sample"))
    _add_state_args(p)
    p.set_defaults(n=6)
    p.add_argument("--n-time", dest="n_time", type=int, default=6)
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
    p.add_argument("--moment", type=int, choices=(2, 4), default=2)
    p.add_argument("--shots", type=int, default=100000)
    p.add_argument("--out", help="write the trace/histogram CSV here")
    p.set_defaults(func=cmd_emulate)

    p = sub.add_parser("cost", help="quantum vs classical operation counts")
    p.add_argument("--task", choices=TASKS, default="iterate_density")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("experiment", help="run a figure experiment from a config file")
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--name", choices=EXPERIMENTS, help="run with built-in defaults")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--workers", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("selftest", help="FWT, unitarity, cascade-moment and Grover checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mfqwt: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, InsufficientPointsError, OSError) as exc:
        print(f"mfqwt: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
