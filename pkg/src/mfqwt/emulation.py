"""Statevector emulation of the quantum measurement procedures.

Everything here runs on explicit amplitude vectors.  The register caps keep
the emulator at desk scale; :func:`cost_model` covers large ``N`` by formula.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .multifractal import InsufficientPointsError, _ols, moment_sum
from .numerics import QuantumState, qft_array
from .states import IsrmParams, isrm_step_array
from .wavelet import FilterLike, WaveletCoeffs, fwt_array, get_filter

MAX_REGISTER_QUBITS = 8
SUCCESS_THRESHOLD = 0.8
TASKS = ("iterate_density", "eigenvector_density", "iterate_amplitude", "eigenvector_amplitude")


class RegisterCapError(ValueError):
    """Requested registers exceed the emulator size cap."""


# -- two-register states ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class TwoRegisterState:
    """Amplitudes over ``|i>|j>`` flattened as ``i * N + j``."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (4**self.n,):
            raise ValueError(f"expected {4**self.n} amplitudes, got {amps.shape}")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > 1e-10:
            raise ValueError(f"squared norm {norm2!r} differs from 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def N(self) -> int:
        return 2**self.n

    def matrix(self) -> np.ndarray:
        return self.amplitudes.reshape(self.N, self.N)

    def weight(self, mask: np.ndarray) -> float:
        return float(np.sum(np.abs(self.amplitudes[mask]) ** 2))


def diagonal_mask(n: int) -> np.ndarray:
    N = 2**n
    return np.eye(N, dtype=bool).ravel()


def _mask_from(predicate, n: int) -> np.ndarray:
    if callable(predicate):
        N = 2**n
        i, j = np.divmod(np.arange(N * N), N)
        return np.asarray(predicate(i, j), dtype=bool)
    mask = np.asarray(predicate, dtype=bool)
    if mask.shape != (4**n,):
        mask = mask.ravel()
    return mask


def build_product_state(psi: QuantumState, chi: QuantumState, max_qubits: int = MAX_REGISTER_QUBITS) -> TwoRegisterState:
    """``|psi> (x) |chi>``; pass ``psi.conj()`` as ``chi`` for the psi (x) psi* input."""
    if psi.n != chi.n:
        raise ValueError("registers must have equal size")
    if psi.n > max_qubits:
        raise RegisterCapError(f"{psi.n} qubits per register exceeds cap {max_qubits}")
    return TwoRegisterState(psi.n, np.kron(psi.amplitudes, chi.amplitudes))


# -- amplitude amplification ----------------------------------------------


def grover_step(
    state: TwoRegisterState,
    initial: TwoRegisterState,
    P: Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]],
) -> TwoRegisterState:
    """One iteration ``V (I - 2|0><0|) V^-1 (I - 2P)``.

    With ``V|0> = initial`` the first factor is ``I - 2|initial><initial|``.
    For ``state == initial`` and ``x = ||P initial||**2`` the result is
    ``(4x - 3) P initial + (4x - 1) (I - P) initial``.
    """
    mask = _mask_from(P, state.n)
    a = state.amplitudes.copy()
    a[mask] *= -1.0
    s = initial.amplitudes
    a -= 2.0 * np.vdot(s, a) * s
    return TwoRegisterState(state.n, a)


def grover_iteration_count(x: float) -> int:
    """Optimal number of rotations for initial target weight ``x``."""
    if not 0.0 < x <= 1.0:
        raise ValueError(f"target weight must lie in (0, 1], got {x!r}")
    theta = math.asin(math.sqrt(min(x, 1.0)))
    # round half up of pi/(4 theta) - 1/2
    return max(0, math.floor(math.pi / (4.0 * theta)))


def rotation_success(x: float, k: int) -> float:
    """Target-subspace probability after ``k`` iterations."""
    return math.sin((2 * k + 1) * math.asin(math.sqrt(x))) ** 2


@dataclass
class GroverRun:
    x: float
    iterations: int
    success_probability: list[float]
    threshold: float = SUCCESS_THRESHOLD
    flagged: bool = False

    @property
    def peak(self) -> float:
        return self.success_probability[self.iterations]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "success_probability", "analytic"])
            for k, p in enumerate(self.success_probability):
                w.writerow([k, repr(p), repr(rotation_success(self.x, k))])


def grover_select_diagonal(
    psi: QuantumState,
    max_iterations: Optional[int] = None,
    threshold: float = SUCCESS_THRESHOLD,
) -> tuple[QuantumState, GroverRun]:
    """Amplify the ``i == j`` part of ``psi (x) psi*`` and post-select on it.

    Returns the diagonal amplitudes re-registered on one register, which is
    ``|psi_i|**2 / sqrt(sum |psi_i|**4)`` up to a global phase (fixed here
    so that the result is real positive where ``|psi_i|**2`` is).
    """
    initial = build_product_state(psi, psi.conj())
    mask = diagonal_mask(psi.n)
    x = initial.weight(mask)
    k_opt = grover_iteration_count(x)
    k_run = k_opt if max_iterations is None else min(k_opt, max_iterations)
    state = initial
    trace = [x]
    for _ in range(k_run):
        state = grover_step(state, initial, mask)
        trace.append(state.weight(mask))
    peak = trace[-1]
    flagged = k_run < k_opt or peak < threshold or peak < max(trace) - 1e-12
    diag = state.matrix().diagonal().copy()
    # global phase: align with the initial diagonal component |psi_i|**2
    overlap = np.vdot(psi.probabilities, diag)
    if overlap != 0:
        diag *= np.conj(overlap) / abs(overlap)
    selected = QuantumState.normalized(diag)
    return selected, GroverRun(x, k_run, trace, threshold, bool(flagged))


# -- phase estimation ------------------------------------------------------


@dataclass
class PhaseEstimationResult:
    histogram: np.ndarray
    peak_bin: int
    peak_probability: float

    @property
    def n_bins(self) -> int:
        return self.histogram.size

    @property
    def grid_phases(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_bins) / self.n_bins

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "phase", "probability"])
            for m, (ph, p) in enumerate(zip(self.grid_phases, self.histogram)):
                w.writerow([m, repr(float(ph)), repr(float(p))])


UnitaryLike = Union[IsrmParams, np.ndarray]


def _stepper(unitary: UnitaryLike, conjugate: bool) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(unitary, IsrmParams):
        if conjugate:
            return lambda v: isrm_step_array(v.conj(), unitary, 1).conj()
        return lambda v: isrm_step_array(v, unitary, 1)
    U = np.asarray(unitary, dtype=np.complex128)
    if conjugate:
        U = U.conj()
    return lambda v: U @ v


def phase_estimation(
    unitary: UnitaryLike,
    psi0: QuantumState,
    n_time: int,
    *,
    conjugate: bool = False,
    max_qubits: int = 2 * MAX_REGISTER_QUBITS,
) -> PhaseEstimationResult:
    """Single-register phase estimation.

    Builds ``2**(-n_time/2) sum_t |t> U**t |psi0>`` for ``t < 2**n_time``,
    applies the inverse-sign QFT to the time register so that eigenphase
    ``2 pi m / 2**n_time`` lands on bin ``m``, and returns the time-register
    distribution.  ``conjugate=True`` evolves with ``U*`` instead.
    """
    if psi0.n + n_time > max_qubits:
        raise RegisterCapError(f"{psi0.n} + {n_time} qubits exceeds cap {max_qubits}")
    Nt = 2**n_time
    step = _stepper(unitary, conjugate)
    joint = np.empty((Nt, psi0.dim), dtype=np.complex128)
    v = psi0.amplitudes.astype(np.complex128)
    for t in range(Nt):
        joint[t] = v
        v = step(v)
    joint /= math.sqrt(Nt)
    joint = qft_array(joint, "inverse", axis=0)
    hist = np.sum(np.abs(joint) ** 2, axis=1)
    peak = int(np.argmax(hist))
    return PhaseEstimationResult(hist, peak, float(hist[peak]))


@dataclass
class PairedPhaseEstimation:
    """Two registers, evolved with ``U`` and ``U*``; the second peaks at ``-theta``."""

    first: PhaseEstimationResult
    second: PhaseEstimationResult
    agreement: np.ndarray
    selection_probability: float
    common_peak: Optional[int]


def paired_phase_estimation(unitary: UnitaryLike, psi0: QuantumState, n_time: int) -> PairedPhaseEstimation:
    """Run the two phase estimations and intersect bins with ``theta == -theta'``.

    ``agreement[m]`` is the probability that register one reads ``m`` and
    register two reads ``-m mod Nt``; its sum is the weight an amplitude
    amplification of that event starts from.
    """
    first = phase_estimation(unitary, psi0, n_time)
    second = phase_estimation(unitary, psi0.conj(), n_time, conjugate=True)
    Nt = 2**n_time
    mirrored = second.histogram[(-np.arange(Nt)) % Nt]
    agreement = first.histogram * mirrored
    common = first.peak_bin if (-second.peak_bin) % Nt == first.peak_bin else None
    return PairedPhaseEstimation(first, second, agreement, float(agreement.sum()), common)


# -- scale register sampling ----------------------------------------------


@dataclass
class ScaleHistogram:
    """Measurement statistics of the scale register.

    Index 0 of every array is the approximation slot; index ``j + 1`` is the
    detail band at scale ``2**-j``.
    """

    levels: np.ndarray
    probabilities: np.ndarray
    counts: np.ndarray
    shots: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots

    @property
    def labels(self) -> list[str]:
        return ["approx"] + [f"a=2^-{j}" for j in self.levels]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "log2_a", "probability", "count", "frequency"])
            log2a = [""] + [-int(j) for j in self.levels]
            for row in zip(self.labels, log2a, self.probabilities, self.counts, self.frequencies):
                w.writerow([row[0], row[1], repr(float(row[2])), int(row[3]), repr(float(row[4]))])


def scale_register_distribution(coeffs: WaveletCoeffs, moment: int = 2) -> np.ndarray:
    """Exact outcome probabilities ``[approx, a=1, a=1/2, ...]``."""
    if moment not in (2, 4):
        raise ValueError("moment must be 2 or 4")
    m = np.abs(coeffs.coeffs) ** moment
    weights = np.array([m[0]] + [m[2**j : 2 ** (j + 1)].sum() for j in range(coeffs.n)])
    total = weights.sum()
    if total <= 0:
        raise ValueError("all-zero coefficient distribution")
    return weights / total


def sample_scale_register(coeffs: WaveletCoeffs, moment: int = 2, shots: int = 1000, seed: int = 0) -> ScaleHistogram:
    """Emulate ``shots`` measurements of the scale label.

    Outcome weights are ``sum_b |T(a,b)|**moment``; moment 2 is the plain
    transformed state, moment 4 the diagonal-amplified two-copy state.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    probs = scale_register_distribution(coeffs, moment)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, probs)
    return ScaleHistogram(np.arange(coeffs.n), probs, counts, shots)


# -- exponents and costs ---------------------------------------------------


class ExponentPair(NamedTuple):
    alpha: float
    beta: float
    alpha_stderr: float
    beta_stderr: float


def alpha_beta_exponents(states: Sequence[QuantumState], filt: FilterLike = "daub4") -> ExponentPair:
    """Size-scaling exponents of ``sum |psi_i|**4`` (alpha) and ``sum |T_psi|**4`` (beta).

    The wavelet sum runs over every slot of the transform, approximation
    included, i.e. over the full QWT output state.
    """
    sizes = {s.n for s in states}
    if len(sizes) < 3:
        raise InsufficientPointsError(f"need at least 3 distinct sizes, have {len(sizes)}")
    f = get_filter(filt)
    x = np.array([s.n for s in states], dtype=float)
    ya = np.log2([moment_sum(s.amplitudes, 2.0) for s in states])
    yb = np.log2([np.sum(np.abs(fwt_array(s.amplitudes, f)) ** 4) for s in states])
    sa, ea, _ = _ols(x, ya)
    sb, eb, _ = _ols(x, yb)
    return ExponentPair(-sa, -sb, ea, eb)


@dataclass
class CostReport:
    task: str
    n: int
    t: Optional[int]
    alpha: Optional[float]
    beta: Optional[float]
    quantum_count: float
    classical_count: float
    formula: str = field(default="")

    @property
    def log2_gain(self) -> float:
        return math.log2(self.classical_count) - math.log2(self.quantum_count)


COST_FORMULAS = {
    "iterate_density": ("t*N^(alpha/2)", "t*N"),
    "eigenvector_density": ("N^(1+alpha)", "N^2"),
    "iterate_amplitude": ("t*N^(beta/2)", "t*N"),
    "eigenvector_amplitude": ("N^(1+alpha/2+beta/2)", "N^2"),
}


def cost_model(
    n: int,
    t: Optional[int] = None,
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
    task: str = "iterate_density",
) -> CostReport:
    """Quantum vs classical operation counts for one measurement task (N = 2**n)."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {TASKS}")
    needs_t = task.startswith("iterate")
    needs_alpha = task != "iterate_amplitude"
    needs_beta = task.endswith("amplitude")
    if needs_t and (t is None or t < 0):
        raise ValueError(f"task {task} requires a non-negative t")
    if needs_alpha and alpha is None:
        raise ValueError(f"task {task} requires alpha")
    if needs_beta and beta is None:
        raise ValueError(f"task {task} requires beta")
    if alpha is not None and not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1] for normalized states")
    log2N = float(n)
    if task == "iterate_density":
        lq, lc = alpha / 2 * log2N, log2N
    elif task == "eigenvector_density":
        lq, lc = (1 + alpha) * log2N, 2 * log2N
    elif task == "iterate_amplitude":
        lq, lc = beta / 2 * log2N, log2N
    else:
        lq, lc = (1 + alpha / 2 + beta / 2) * log2N, 2 * log2N
    tt = t if needs_t else 1
    quantum = tt * 2.0**lq
    classical = tt * 2.0**lc
    fq, fc = COST_FORMULAS[task]
    return CostReport(task, n, t if needs_t else None, alpha, beta, quantum, classical, f"{fq} vs {fc}")


def write_cost_csv(path, reports: Sequence[CostReport]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# quantum vs classical operation counts, N = 2^n\n")
        for task, (fq, fc) in COST_FORMULAS.items():
            fh.write(f"# {task}: quantum {fq}, classical {fc}\n")
        w = csv.writer(fh)
        w.writerow(["task", "n", "t", "alpha", "beta", "quantum_count", "classical_count", "log2_gain"])
        for r in reports:
            w.writerow([r.task, r.n, "" if r.t is None else r.t,
                        "" if r.alpha is None else repr(r.alpha),
                        "" if r.beta is None else repr(r.beta),
                        repr(r.quantum_count), repr(r.classical_count), repr(r.log2_gain)])
